//! Row-major interleaved float image buffer shared by the renderer, the
//! metrics, and PNG I/O. Values are nominally in [0, 1]; nothing in the
//! type enforces that.

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `width * height * channels` values, row-major, channels interleaved.
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn px(&self, x: usize, y: usize) -> &[f64] {
        let i = self.idx(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Copy with only the first three channels kept. A 3-channel image is
    /// cloned as-is.
    pub fn rgb(&self) -> Image {
        assert!(self.channels >= 3, "rgb() needs at least 3 channels");
        if self.channels == 3 {
            return self.clone();
        }
        let mut out = Image::zeros(self.width, self.height, 3);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    out.set(x, y, c, self.get(x, y, c));
                }
            }
        }
        out
    }

    /// Box-filter downsample by an integer factor; each side must divide.
    pub fn downsample(&self, factor: usize) -> Image {
        assert!(factor > 0 && self.width % factor == 0 && self.height % factor == 0);
        let mut out = Image::zeros(self.width / factor, self.height / factor, self.channels);
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..out.height {
            for x in 0..out.width {
                for c in 0..self.channels {
                    let mut acc = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += self.get(x * factor + dx, y * factor + dy, c);
                        }
                    }
                    out.set(x, y, c, acc * norm);
                }
            }
        }
        out
    }
}
