//! PNG input and output for unit-range images.
//!
//! Only 8-bit RGB and RGBA files are accepted; anything else (16-bit,
//! grayscale, luma-alpha) is rejected rather than silently converted.
//! Samples map linearly between [0, 255] and [0, 1], with half-up rounding
//! on the way out.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb, Rgba};

use crate::error::{Error, Result};
use crate::img::Image;

/// Reads only the header, for resolution checks without a full decode.
pub fn png_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((w as usize, h as usize))
}

pub fn load_png(path: &Path) -> Result<Image> {
    let decoded = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (width, height, channels, raw) = match decoded {
        DynamicImage::ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            (w as usize, h as usize, 3, img.into_raw())
        }
        DynamicImage::ImageRgba8(img) => {
            let (w, h) = img.dimensions();
            (w as usize, h as usize, 4, img.into_raw())
        }
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel format {:?}, expected 8-bit rgb or rgba",
                path.display(),
                other.color()
            )))
        }
    };
    let mut out = Image::zeros(width, height, channels);
    for (dst, src) in out.data.iter_mut().zip(raw) {
        *dst = src as f64 / 255.0;
    }
    Ok(out)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let ok = match img.channels {
        3 => {
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(w, h, |x, y| {
                let i = img.idx(x as usize, y as usize, 0);
                Rgb([
                    quantize(img.data[i]),
                    quantize(img.data[i + 1]),
                    quantize(img.data[i + 2]),
                ])
            });
            buf.save(path)
        }
        4 => {
            let buf: ImageBuffer<Rgba<u8>, Vec<u8>> = ImageBuffer::from_fn(w, h, |x, y| {
                let i = img.idx(x as usize, y as usize, 0);
                Rgba([
                    quantize(img.data[i]),
                    quantize(img.data[i + 1]),
                    quantize(img.data[i + 2]),
                    quantize(img.data[i + 3]),
                ])
            });
            buf.save(path)
        }
        n => {
            return Err(Error::Config(format!(
                "png output needs 3 or 4 channels, image has {n}"
            )))
        }
    };
    ok.map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
