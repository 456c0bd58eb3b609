//! Depth-peeling software rasterizer.
//!
//! Geometry goes through a standard perspective chain: world -> camera
//! (inverse of the camera-to-world pose, camera looking down its local -z)
//! -> clip -> NDC, with NDC z = -1 at the near plane and +1 at the far
//! plane. Pixel centers sit at (x + 0.5, y + 0.5); coverage uses the
//! top-left rule so shared edges are hit exactly once. Attributes are
//! interpolated perspective-correctly (attribute/w linear in screen space,
//! divided by interpolated 1/w); depth is screen-linear NDC z.
//!
//! Rendering is two-sided (no backface culling) and peels transparency
//! front to back: each pass selects, per pixel, the fragment with the
//! smallest (depth, face index) key strictly greater than the previous
//! pass's key. The face index in the key makes exact depth ties
//! deterministic, with the lower index counting as nearer. Faces with any
//! vertex at or in front of the near plane are discarded whole; there is no
//! polygon clipping and no far clipping.
//!
//! Pixels are mutually independent everywhere, so row-parallel execution is
//! bit-deterministic at any thread count.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::img::Image;
use crate::meshgen::MeshSoup;

/// Slack under the near plane before a face is discarded: a vertex survives
/// while its clip w exceeds `near - NEAR_DISCARD_EPS`.
pub const NEAR_DISCARD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians, in (0, pi).
    pub fov_x: f64,
    /// Rigid pose mapping camera space to world space; the camera looks
    /// down its local -z with +y up.
    pub camera_to_world: Matrix4<f64>,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize, fov_x: f64, camera_to_world: Matrix4<f64>) -> Self {
        Camera {
            width,
            height,
            fov_x,
            camera_to_world,
            near: 0.01,
            far: 100.0,
        }
    }

    /// Camera positioned at `eye` looking at `target`.
    pub fn look_at(
        width: usize,
        height: usize,
        fov_x: f64,
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
    ) -> Self {
        let eye_v = nalgebra::Vector3::from(eye);
        let backward = (eye_v - nalgebra::Vector3::from(target)).normalize();
        let right = nalgebra::Vector3::from(up).cross(&backward).normalize();
        let true_up = backward.cross(&right);
        let mut c2w = Matrix4::identity();
        c2w.fixed_view_mut::<3, 1>(0, 0).copy_from(&right);
        c2w.fixed_view_mut::<3, 1>(0, 1).copy_from(&true_up);
        c2w.fixed_view_mut::<3, 1>(0, 2).copy_from(&backward);
        c2w.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye_v);
        Camera::new(width, height, fov_x, c2w)
    }

    /// Pinhole focal length in pixels implied by the horizontal fov.
    pub fn focal_x(&self) -> f64 {
        0.5 * self.width as f64 / (self.fov_x * 0.5).tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Maximum depth-peeling passes.
    pub num_layers: usize,
    /// RGBA composited behind all peeled layers. The output alpha channel
    /// excludes it.
    pub background: [f64; 4],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            num_layers: 15,
            background: [0.0; 4],
        }
    }
}

/// Projection * inverse(pose). Fails on a non-invertible pose or a fov/near/far
/// outside the camera's domain.
pub fn build_mvp(cam: &Camera) -> Result<Matrix4<f64>> {
    if !(cam.fov_x > 0.0 && cam.fov_x < std::f64::consts::PI) {
        return Err(Error::Config(format!(
            "fov_x must be in (0, pi), got {}",
            cam.fov_x
        )));
    }
    if !(cam.near > 0.0 && cam.near < cam.far) {
        return Err(Error::Config(format!(
            "need 0 < near < far, got near {} far {}",
            cam.near, cam.far
        )));
    }
    let view = cam
        .camera_to_world
        .try_inverse()
        .ok_or_else(|| Error::Numerical("camera pose is not invertible".into()))?;
    let t = (cam.fov_x * 0.5).tan();
    let sx = 1.0 / t;
    let sy = cam.width as f64 / cam.height as f64 / t;
    let (n, f) = (cam.near, cam.far);
    #[rustfmt::skip]
    let proj = Matrix4::new(
        sx,  0.0, 0.0,               0.0,
        0.0, sy,  0.0,               0.0,
        0.0, 0.0, -(f + n) / (f - n), -2.0 * f * n / (f - n),
        0.0, 0.0, -1.0,              0.0,
    );
    Ok(proj * view)
}

/// Positions to homogeneous clip coordinates.
pub fn transform_vertices(positions: &[[f64; 3]], mvp: &Matrix4<f64>) -> Vec<[f64; 4]> {
    positions
        .iter()
        .map(|p| {
            let v = mvp * Vector4::new(p[0], p[1], p[2], 1.0);
            [v.x, v.y, v.z, v.w]
        })
        .collect()
}

/// Per-face rasterization setup. `edge[i]` holds affine coefficients
/// (a, b, c) of the orientation-normalized edge function opposite vertex i:
/// e_i(p) = a*px + b*py + c, positive inside the triangle.
#[derive(Debug, Clone)]
pub(crate) struct FaceSetup {
    pub s: [[f64; 2]; 3],
    pub w: [f64; 3],
    pub z: [f64; 3],
    pub edge: [[f64; 3]; 3],
    pub topleft: [bool; 3],
    /// +1 if the screen-space winding was already positive, -1 if the edge
    /// functions were negated.
    pub sign: f64,
    /// Inclusive pixel bounds x0, x1, y0, y1.
    pub bbox: [usize; 4],
}

/// A soup prepared for rasterization under one camera.
#[derive(Debug, Clone)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub mvp: Matrix4<f64>,
    pub rgba: Vec<[f64; 4]>,
    pub faces: Vec<[u32; 3]>,
    pub clip: Vec<[f64; 4]>,
    pub(crate) setup: Vec<Option<FaceSetup>>,
}

fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn face_setup(
    clip: [[f64; 4]; 3],
    width: usize,
    height: usize,
    near: f64,
) -> Option<FaceSetup> {
    let mut s = [[0.0; 2]; 3];
    let mut w = [0.0; 3];
    let mut z = [0.0; 3];
    for i in 0..3 {
        let cw = clip[i][3];
        if cw <= near - NEAR_DISCARD_EPS || cw <= 0.0 {
            return None;
        }
        w[i] = cw;
        let ndc_x = clip[i][0] / cw;
        let ndc_y = clip[i][1] / cw;
        z[i] = clip[i][2] / cw;
        s[i] = [
            (ndc_x * 0.5 + 0.5) * width as f64,
            (0.5 - ndc_y * 0.5) * height as f64,
        ];
    }

    let area_raw = edge_fn(s[0], s[1], s[2]);
    if area_raw == 0.0 || !area_raw.is_finite() {
        return None;
    }
    let sign = if area_raw > 0.0 { 1.0 } else { -1.0 };

    let mut edge = [[0.0; 3]; 3];
    let mut topleft = [false; 3];
    for i in 0..3 {
        let a = s[(i + 1) % 3];
        let b = s[(i + 2) % 3];
        let d = [b[0] - a[0], b[1] - a[1]];
        edge[i] = [
            -d[1] * sign,
            d[0] * sign,
            (d[1] * a[0] - d[0] * a[1]) * sign,
        ];
        // In the normalized orientation a top edge runs right along a
        // horizontal line with the interior below it (screen y grows down);
        // a left edge runs upward with the interior to its right.
        let dn = [d[0] * sign, d[1] * sign];
        topleft[i] = (dn[1] == 0.0 && dn[0] > 0.0) || dn[1] < 0.0;
    }

    let (min_x, max_x) = s.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
        (lo.min(v[0]), hi.max(v[0]))
    });
    let (min_y, max_y) = s.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
        (lo.min(v[1]), hi.max(v[1]))
    });
    // Pixel x is touched when its center x + 0.5 lies within [min, max].
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(FaceSetup {
        s,
        w,
        z,
        edge,
        topleft,
        sign,
        bbox: [x0 as usize, x1 as usize, y0 as usize, y1 as usize],
    })
}

impl Scene {
    pub fn new(
        positions: &[[f64; 3]],
        rgba: Vec<[f64; 4]>,
        faces: Vec<[u32; 3]>,
        cam: &Camera,
    ) -> Result<Scene> {
        let mvp = build_mvp(cam)?;
        let clip = transform_vertices(positions, &mvp);
        Scene::from_parts(mvp, clip, rgba, faces, cam.width, cam.height, cam.near)
    }

    /// Scene straight from clip coordinates (identity model-view-projection).
    pub fn from_clip(
        clip: Vec<[f64; 4]>,
        rgba: Vec<[f64; 4]>,
        faces: Vec<[u32; 3]>,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Scene> {
        Scene::from_parts(Matrix4::identity(), clip, rgba, faces, width, height, near)
    }

    fn from_parts(
        mvp: Matrix4<f64>,
        clip: Vec<[f64; 4]>,
        rgba: Vec<[f64; 4]>,
        faces: Vec<[u32; 3]>,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Scene> {
        if width == 0 || height == 0 {
            return Err(Error::Config("image dimensions must be nonzero".into()));
        }
        if rgba.len() != clip.len() {
            return Err(Error::Config(format!(
                "{} rgba entries for {} vertices",
                rgba.len(),
                clip.len()
            )));
        }
        if clip.iter().flatten().any(|v| !v.is_finite())
            || rgba.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical("non-finite vertex data".into()));
        }
        for f in &faces {
            if f.iter().any(|&i| i as usize >= clip.len()) {
                return Err(Error::Config(format!(
                    "face index out of range: {f:?} with {} vertices",
                    clip.len()
                )));
            }
        }
        let setup = faces
            .iter()
            .map(|f| {
                face_setup(
                    [
                        clip[f[0] as usize],
                        clip[f[1] as usize],
                        clip[f[2] as usize],
                    ],
                    width,
                    height,
                    near,
                )
            })
            .collect();
        Ok(Scene {
            width,
            height,
            near,
            mvp,
            rgba,
            faces,
            clip,
            setup,
        })
    }

    pub fn face_rgba(&self, face: u32) -> [[f64; 4]; 3] {
        let f = self.faces[face as usize];
        [
            self.rgba[f[0] as usize],
            self.rgba[f[1] as usize],
            self.rgba[f[2] as usize],
        ]
    }
}

/// Per-pixel peel state: NDC depth plus the face index as the tie breaker.
pub type DepthKey = (f64, u32);

/// Depth-buffer entry of an empty pixel.
pub const EMPTY_KEY: DepthKey = (f64::INFINITY, u32::MAX);

const BELOW_ALL: DepthKey = (f64::NEG_INFINITY, 0);

fn key_lt(a: DepthKey, b: DepthKey) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// One selected sample of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub face: u32,
    /// Perspective-correct barycentric weights in face vertex order;
    /// non-negative, summing to 1.
    pub bary: [f64; 3],
    /// Screen-interpolated NDC depth.
    pub depth: f64,
}

/// Screen-space barycentrics of the pixel center if the face covers it.
fn coverage(su: &FaceSetup, px: f64, py: f64) -> Option<[f64; 3]> {
    let mut e = [0.0; 3];
    for i in 0..3 {
        let [a, b, c] = su.edge[i];
        let v = a * px + b * py + c;
        if v < 0.0 || (v == 0.0 && !su.topleft[i]) {
            return None;
        }
        e[i] = v;
    }
    let inv = 1.0 / (e[0] + e[1] + e[2]);
    Some([e[0] * inv, e[1] * inv, e[2] * inv])
}

/// One depth-peeling pass: per pixel, the fragment with the smallest
/// (depth, face) key strictly greater than the previous pass's key.
pub fn rasterize_peel(
    scene: &Scene,
    prev: Option<&[DepthKey]>,
) -> (Vec<Option<Fragment>>, Vec<DepthKey>) {
    let (w, h) = (scene.width, scene.height);
    let mut frags: Vec<Option<Fragment>> = vec![None; w * h];
    let mut keys: Vec<DepthKey> = vec![EMPTY_KEY; w * h];

    frags
        .par_chunks_mut(w)
        .zip(keys.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (frow, krow))| {
            let py = y as f64 + 0.5;
            for (fi, setup) in scene.setup.iter().enumerate() {
                let Some(su) = setup else { continue };
                let [x0, x1, y0, y1] = su.bbox;
                if y < y0 || y > y1 {
                    continue;
                }
                for (x, (fpx, kpx)) in frow[x0..=x1]
                    .iter_mut()
                    .zip(krow[x0..=x1].iter_mut())
                    .enumerate()
                    .map(|(i, v)| (i + x0, v))
                {
                    let px = x as f64 + 0.5;
                    let Some(lam) = coverage(su, px, py) else {
                        continue;
                    };
                    let z = lam[0] * su.z[0] + lam[1] * su.z[1] + lam[2] * su.z[2];
                    let key = (z, fi as u32);
                    let prev_key = prev.map_or(BELOW_ALL, |p| p[y * w + x]);
                    if key_lt(prev_key, key) && key_lt(key, *kpx) {
                        let q = [
                            lam[0] / su.w[0],
                            lam[1] / su.w[1],
                            lam[2] / su.w[2],
                        ];
                        let qs = q[0] + q[1] + q[2];
                        *kpx = key;
                        *fpx = Some(Fragment {
                            face: fi as u32,
                            bary: [q[0] / qs, q[1] / qs, q[2] / qs],
                            depth: z,
                        });
                    }
                }
            }
        });

    (frags, keys)
}

/// Barycentric blend of the triangle's vertex colors and opacities.
pub fn interpolate_rgba(frag: &Fragment, rgba: &[[f64; 4]; 3]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (weight, vertex) in frag.bary.iter().zip(rgba) {
        for c in 0..4 {
            out[c] += weight * vertex[c];
        }
    }
    out
}

fn layer_rgba(scene: &Scene, frags: &[Option<Fragment>]) -> Vec<[f64; 4]> {
    frags
        .iter()
        .map(|f| match f {
            Some(frag) => interpolate_rgba(frag, &scene.face_rgba(frag.face)),
            None => [0.0; 4],
        })
        .collect()
}

/// Output of front-to-back compositing.
pub struct Composited {
    /// Accumulated premultiplied color before the background.
    pub accum_rgb: Vec<[f64; 3]>,
    /// Transmittance remaining after all layers, before the background.
    pub transmittance: Vec<f64>,
    /// Final RGBA image: color over the background, alpha excluding it.
    pub image: Image,
}

/// Front-to-back over-compositing of per-pixel rgba layers.
pub fn composite(
    layers: &[impl AsRef<[[f64; 4]]>],
    width: usize,
    height: usize,
    background: [f64; 4],
) -> Composited {
    let n = width * height;
    let mut accum_rgb = vec![[0.0f64; 3]; n];
    let mut transmittance = vec![1.0f64; n];
    for layer in layers {
        let layer = layer.as_ref();
        for (px, rgba) in layer.iter().enumerate() {
            let a = rgba[3];
            let t = transmittance[px];
            for c in 0..3 {
                accum_rgb[px][c] += t * a * rgba[c];
            }
            transmittance[px] = t * (1.0 - a);
        }
    }
    let mut image = Image::zeros(width, height, 4);
    for px in 0..n {
        let t = transmittance[px];
        for c in 0..3 {
            image.data[px * 4 + c] = accum_rgb[px][c] + t * background[3] * background[c];
        }
        image.data[px * 4 + 3] = 1.0 - t;
    }
    Composited {
        accum_rgb,
        transmittance,
        image,
    }
}

/// One retained peeling pass.
pub struct PeelLayer {
    pub frags: Vec<Option<Fragment>>,
    pub rgba: Vec<[f64; 4]>,
}

/// Composited frame plus everything the compositor consumed.
pub struct LayeredFrame {
    /// NDC depth buffer of each peeling pass that produced fragments.
    pub depths: Vec<Vec<f64>>,
    pub accum_rgb: Vec<[f64; 3]>,
    pub transmittance: Vec<f64>,
    /// Final RGBA image.
    pub image: Image,
}

pub struct RenderOutput {
    pub frame: LayeredFrame,
    /// Per-pass fragments, front to back; the optimizer's backward pass
    /// replays these.
    pub peels: Vec<PeelLayer>,
}

/// Peels up to `cfg.num_layers` times (stopping early once a pass comes back
/// empty) and composites.
pub fn render_scene(scene: &Scene, cfg: &RenderConfig) -> RenderOutput {
    let mut peels: Vec<PeelLayer> = Vec::new();
    let mut depths = Vec::new();
    let mut prev: Option<Vec<DepthKey>> = None;
    for _ in 0..cfg.num_layers {
        let (frags, keys) = rasterize_peel(scene, prev.as_deref());
        if frags.iter().all(Option::is_none) {
            break;
        }
        depths.push(keys.iter().map(|k| k.0).collect());
        let rgba = layer_rgba(scene, &frags);
        peels.push(PeelLayer { frags, rgba });
        prev = Some(keys);
    }
    let layers: Vec<&[[f64; 4]]> = peels.iter().map(|p| p.rgba.as_slice()).collect();
    let comp = composite(&layers, scene.width, scene.height, cfg.background);
    RenderOutput {
        frame: LayeredFrame {
            depths,
            accum_rgb: comp.accum_rgb,
            transmittance: comp.transmittance,
            image: comp.image,
        },
        peels,
    }
}

/// Soup positions and colors widened to the renderer's precision.
pub fn soup_arrays(soup: &MeshSoup) -> (Vec<[f64; 3]>, Vec<[f64; 4]>) {
    let positions = soup
        .vertices
        .iter()
        .map(|v| [v.position[0] as f64, v.position[1] as f64, v.position[2] as f64])
        .collect();
    let rgba = soup
        .vertices
        .iter()
        .map(|v| {
            [
                v.rgba[0] as f64,
                v.rgba[1] as f64,
                v.rgba[2] as f64,
                v.rgba[3] as f64,
            ]
        })
        .collect();
    (positions, rgba)
}

/// Full pipeline: soup + camera -> composited frame.
pub fn render(soup: &MeshSoup, cam: &Camera, cfg: &RenderConfig) -> Result<RenderOutput> {
    let (positions, rgba) = soup_arrays(soup);
    let scene = Scene::new(&positions, rgba, soup.faces.clone(), cam)?;
    Ok(render_scene(&scene, cfg))
}
