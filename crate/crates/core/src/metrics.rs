//! Image comparison: L1, windowed SSIM, the training loss, and PSNR.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5, weights normalized to sum
//! to 1) slid over valid positions only, so both image dimensions must reach
//! the window size. Statistics are weighted population moments. The training
//! loss is `lambda * L1 + (1 - lambda) * (1 - SSIM)`; at lambda = 1 the SSIM
//! term is skipped entirely, which keeps the loss defined on images smaller
//! than the window.
//!
//! `loss_grad` returns the derivative of the loss with respect to every
//! rendered pixel, feeding the optimizer's backward pass.

use crate::error::{Error, Result};
use crate::img::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Dynamic range of pixel values.
const L: f64 = 1.0;

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Config(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

/// Mean absolute difference over every sample of every channel.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / n as f64)
}

/// The normalized 11x11 Gaussian window.
fn ssim_window() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let di = (i as isize - half) as f64;
            let dj = (j as isize - half) as f64;
            let v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[i][j] = v;
            total += v;
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    w
}

struct WindowStats {
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn window_stats(
    x: &Image,
    y: &Image,
    w: &[[f64; SSIM_WINDOW]; SSIM_WINDOW],
    top: usize,
    left: usize,
    ch: usize,
) -> WindowStats {
    let (mut mu_x, mut mu_y) = (0.0, 0.0);
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for (i, row) in w.iter().enumerate() {
        for (j, &wij) in row.iter().enumerate() {
            let idx = x.idx(left + j, top + i, ch);
            let (xv, yv) = (x.data[idx], y.data[idx]);
            mu_x += wij * xv;
            mu_y += wij * yv;
            xx += wij * xv * xv;
            yy += wij * yv * yv;
            xy += wij * xv * yv;
        }
    }
    WindowStats {
        mu_x,
        mu_y,
        var_x: xx - mu_x * mu_x,
        var_y: yy - mu_y * mu_y,
        cov: xy - mu_x * mu_y,
    }
}

struct SsimTerms {
    s: f64,
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
}

fn ssim_terms(st: &WindowStats) -> SsimTerms {
    let c1 = (K1 * L) * (K1 * L);
    let c2 = (K2 * L) * (K2 * L);
    let a1 = 2.0 * st.mu_x * st.mu_y + c1;
    let a2 = 2.0 * st.cov + c2;
    let b1 = st.mu_x * st.mu_x + st.mu_y * st.mu_y + c1;
    let b2 = st.var_x + st.var_y + c2;
    SsimTerms {
        s: (a1 * a2) / (b1 * b2),
        a1,
        a2,
        b1,
        b2,
    }
}

fn require_window_fit(a: &Image) -> Result<()> {
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Config(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Mean SSIM over all valid window positions and channels.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    check_shapes(x, y)?;
    require_window_fit(x)?;
    let w = ssim_window();
    let rows = x.height - SSIM_WINDOW + 1;
    let cols = x.width - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for ch in 0..x.channels {
        for top in 0..rows {
            for left in 0..cols {
                total += ssim_terms(&window_stats(x, y, &w, top, left, ch)).s;
            }
        }
    }
    Ok(total / (rows * cols * x.channels) as f64)
}

/// Mean SSIM and its derivative with respect to every sample of `x`.
pub fn ssim_with_grad(x: &Image, y: &Image) -> Result<(f64, Image)> {
    check_shapes(x, y)?;
    require_window_fit(x)?;
    let w = ssim_window();
    let rows = x.height - SSIM_WINDOW + 1;
    let cols = x.width - SSIM_WINDOW + 1;
    let norm = 1.0 / (rows * cols * x.channels) as f64;
    let mut grad = Image::zeros(x.width, x.height, x.channels);
    let mut total = 0.0;
    for ch in 0..x.channels {
        for top in 0..rows {
            for left in 0..cols {
                let st = window_stats(x, y, &w, top, left, ch);
                let t = ssim_terms(&st);
                total += t.s;
                // s = a1*a2 / (b1*b2); mu/var/cov depend on x only through
                // this window's weighted sums.
                let ds_dmu = 2.0 * st.mu_y * t.a2 / (t.b1 * t.b2)
                    - 2.0 * st.mu_x * t.a1 * t.a2 / (t.b1 * t.b1 * t.b2);
                let ds_dvar = -t.a1 * t.a2 / (t.b1 * t.b2 * t.b2);
                let ds_dcov = 2.0 * t.a1 / (t.b1 * t.b2);
                for (i, row) in w.iter().enumerate() {
                    for (j, &wij) in row.iter().enumerate() {
                        let idx = x.idx(left + j, top + i, ch);
                        let (xv, yv) = (x.data[idx], y.data[idx]);
                        grad.data[idx] += norm
                            * (ds_dmu * wij
                                + ds_dvar * 2.0 * wij * (xv - st.mu_x)
                                + ds_dcov * wij * (yv - st.mu_y));
                    }
                }
            }
        }
    }
    Ok((total * norm, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub l1: f64,
    /// Absent when lambda = 1 disables the SSIM term.
    pub ssim: Option<f64>,
}

/// Training loss `lambda * L1 + (1 - lambda) * (1 - SSIM)`.
pub fn loss_parts(render: &Image, truth: &Image, lambda: f64) -> Result<LossParts> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must be in [0, 1], got {lambda}")));
    }
    let l1_val = l1(render, truth)?;
    if lambda == 1.0 {
        return Ok(LossParts {
            loss: l1_val,
            l1: l1_val,
            ssim: None,
        });
    }
    let ssim_val = ssim(render, truth)?;
    Ok(LossParts {
        loss: lambda * l1_val + (1.0 - lambda) * (1.0 - ssim_val),
        l1: l1_val,
        ssim: Some(ssim_val),
    })
}

/// Loss plus its derivative with respect to every rendered sample.
pub fn loss_grad(render: &Image, truth: &Image, lambda: f64) -> Result<(LossParts, Image)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must be in [0, 1], got {lambda}")));
    }
    let l1_val = l1(render, truth)?;
    let n = render.data.len() as f64;
    let mut grad = Image::zeros(render.width, render.height, render.channels);
    for (g, (r, t)) in grad.data.iter_mut().zip(render.data.iter().zip(&truth.data)) {
        // Subgradient of |r - t|, zero on the kink.
        let sign = if r > t {
            1.0
        } else if r < t {
            -1.0
        } else {
            0.0
        };
        *g = lambda * sign / n;
    }
    if lambda == 1.0 {
        return Ok((
            LossParts {
                loss: l1_val,
                l1: l1_val,
                ssim: None,
            },
            grad,
        ));
    }
    let (ssim_val, ssim_grad) = ssim_with_grad(render, truth)?;
    for (g, sg) in grad.data.iter_mut().zip(&ssim_grad.data) {
        *g -= (1.0 - lambda) * sg;
    }
    Ok((
        LossParts {
            loss: lambda * l1_val + (1.0 - lambda) * (1.0 - ssim_val),
            l1: l1_val,
            ssim: Some(ssim_val),
        },
        grad,
    ))
}

/// Peak signal-to-noise ratio in dB for unit-range images; infinite when the
/// images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.data.len();
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (L * L / mse).log10())
}
