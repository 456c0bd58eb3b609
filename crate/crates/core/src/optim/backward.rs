//! Reverse-mode gradients of the rendered image with respect to vertex
//! colors, opacities, and positions.
//!
//! Differentiation treats rasterization decisions as frozen: which face a
//! pixel samples in each peel, the coverage test, and the peeling depth
//! order are all taken from the forward pass. Gradients flow through the
//! compositing weights, the barycentric interpolation, and the projective
//! chain from screen coordinates back to world space, so the loss is
//! piecewise smooth with kinks only where coverage flips.
//!
//! Compositing gradients avoid dividing by (1 - alpha) by carrying a suffix
//! accumulator: with S_k defined as the color contributed by layers k and
//! beyond per unit of incoming transmittance, d(rgb)/d(alpha_k) is
//! T_k * (c_k - S_{k+1}), which stays finite for fully opaque layers.
//!
//! Pixels are walked sequentially in row order, so gradient accumulation is
//! deterministic at any thread count.

use crate::img::Image;
use crate::raster::{Fragment, RenderOutput, Scene};

/// Gradient of the loss with respect to every soup parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub positions: Vec<[f64; 3]>,
    pub rgba: Vec<[f64; 4]>,
}

impl ParamGrads {
    pub fn zeros(vertex_count: usize) -> Self {
        ParamGrads {
            positions: vec![[0.0; 3]; vertex_count],
            rgba: vec![[0.0; 4]; vertex_count],
        }
    }
}

/// Accumulates gradients for one rendered frame. `dimg` is the derivative of
/// the loss with respect to the final RGB image; `background` must match the
/// render. Gradients add onto `grads`.
pub fn backward(
    scene: &Scene,
    out: &RenderOutput,
    dimg: &Image,
    background: [f64; 4],
    grads: &mut ParamGrads,
) {
    assert_eq!(dimg.channels, 3, "image gradient carries rgb channels");
    assert_eq!(dimg.width, scene.width);
    assert_eq!(dimg.height, scene.height);
    assert_eq!(grads.rgba.len(), scene.rgba.len());

    let layers = &out.peels;
    let k_count = layers.len();
    let bg = [
        background[3] * background[0],
        background[3] * background[1],
        background[3] * background[2],
    ];
    let mut trans = vec![0.0f64; k_count + 1];
    let mut suffix = vec![[0.0f64; 3]; k_count + 1];

    for y in 0..scene.height {
        for x in 0..scene.width {
            let px = y * scene.width + x;
            let g = [
                dimg.data[px * 3],
                dimg.data[px * 3 + 1],
                dimg.data[px * 3 + 2],
            ];
            if g == [0.0; 3] {
                continue;
            }

            trans[0] = 1.0;
            for (k, layer) in layers.iter().enumerate() {
                trans[k + 1] = trans[k] * (1.0 - layer.rgba[px][3]);
            }
            suffix[k_count] = bg;
            for k in (0..k_count).rev() {
                let rgba = layers[k].rgba[px];
                let a = rgba[3];
                for c in 0..3 {
                    suffix[k][c] = a * rgba[c] + (1.0 - a) * suffix[k + 1][c];
                }
            }

            for (k, layer) in layers.iter().enumerate() {
                let Some(frag) = layer.frags[px] else { continue };
                let rgba = layer.rgba[px];
                let t_in = trans[k];
                let mut d_interp = [0.0f64; 4];
                for c in 0..3 {
                    d_interp[c] = g[c] * t_in * rgba[3];
                    d_interp[3] += g[c] * t_in * (rgba[c] - suffix[k + 1][c]);
                }
                scatter_fragment(
                    scene,
                    &frag,
                    x as f64 + 0.5,
                    y as f64 + 0.5,
                    &d_interp,
                    grads,
                );
            }
        }
    }
}

/// Pushes the gradient of one fragment's interpolated rgba back to the three
/// vertices: directly for the attributes, and through the barycentric and
/// projection chain for the positions.
fn scatter_fragment(
    scene: &Scene,
    frag: &Fragment,
    px: f64,
    py: f64,
    d_interp: &[f64; 4],
    grads: &mut ParamGrads,
) {
    let face = scene.faces[frag.face as usize];
    let su = scene.setup[frag.face as usize]
        .as_ref()
        .expect("fragments only come from rasterizable faces");

    for i in 0..3 {
        let v = face[i] as usize;
        for c in 0..4 {
            grads.rgba[v][c] += frag.bary[i] * d_interp[c];
        }
    }

    // d(loss)/d(perspective-correct weight_i) via the attribute values.
    let mut d_plam = [0.0f64; 3];
    for i in 0..3 {
        let attr = scene.rgba[face[i] as usize];
        d_plam[i] = (0..4).map(|c| d_interp[c] * attr[c]).sum();
    }

    // Rebuild the forward quantities with the same arithmetic as coverage.
    let mut e = [0.0f64; 3];
    for i in 0..3 {
        let [ea, eb, ec] = su.edge[i];
        e[i] = ea * px + eb * py + ec;
    }
    let a_sum = e[0] + e[1] + e[2];
    let lam = [e[0] / a_sum, e[1] / a_sum, e[2] / a_sum];
    let q = [lam[0] / su.w[0], lam[1] / su.w[1], lam[2] / su.w[2]];
    let w_sum = q[0] + q[1] + q[2];
    let plam = [q[0] / w_sum, q[1] / w_sum, q[2] / w_sum];

    // Normalized weights: subtract the weighted mean before dividing by the
    // normalizer, once for the perspective division and once for the area.
    let plam_dot = d_plam[0] * plam[0] + d_plam[1] * plam[1] + d_plam[2] * plam[2];
    let d_q = [
        (d_plam[0] - plam_dot) / w_sum,
        (d_plam[1] - plam_dot) / w_sum,
        (d_plam[2] - plam_dot) / w_sum,
    ];
    let d_lam = [d_q[0] / su.w[0], d_q[1] / su.w[1], d_q[2] / su.w[2]];
    let d_w = [
        -d_q[0] * lam[0] / (su.w[0] * su.w[0]),
        -d_q[1] * lam[1] / (su.w[1] * su.w[1]),
        -d_q[2] * lam[2] / (su.w[2] * su.w[2]),
    ];
    let lam_dot = d_lam[0] * lam[0] + d_lam[1] * lam[1] + d_lam[2] * lam[2];
    let d_e = [
        (d_lam[0] - lam_dot) / a_sum,
        (d_lam[1] - lam_dot) / a_sum,
        (d_lam[2] - lam_dot) / a_sum,
    ];

    // Edge function i is built from screen vertices (i+1, i+2).
    let mut d_s = [[0.0f64; 2]; 3];
    for i in 0..3 {
        let ai = (i + 1) % 3;
        let bi = (i + 2) % 3;
        let sa = su.s[ai];
        let sb = su.s[bi];
        let scale = d_e[i] * su.sign;
        d_s[ai][0] += scale * (sb[1] - py);
        d_s[ai][1] += scale * (px - sb[0]);
        d_s[bi][0] += scale * (py - sa[1]);
        d_s[bi][1] += scale * (sa[0] - px);
    }

    // Screen -> clip -> world. NDC depth never enters the loss, so the clip
    // z row is skipped.
    let (wpx, hpx) = (scene.width as f64, scene.height as f64);
    for i in 0..3 {
        let v = face[i] as usize;
        let clip = scene.clip[v];
        let cw = su.w[i];
        let d_cx = d_s[i][0] * 0.5 * wpx / cw;
        let d_cy = -d_s[i][1] * 0.5 * hpx / cw;
        let d_cw = -d_s[i][0] * 0.5 * wpx * clip[0] / (cw * cw)
            + d_s[i][1] * 0.5 * hpx * clip[1] / (cw * cw)
            + d_w[i];
        for j in 0..3 {
            grads.positions[v][j] += scene.mvp[(0, j)] * d_cx
                + scene.mvp[(1, j)] * d_cy
                + scene.mvp[(3, j)] * d_cw;
        }
    }
}
