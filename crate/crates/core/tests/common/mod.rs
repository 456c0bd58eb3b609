//! Independent reference implementations backing the acceptance suite.
//!
//! Everything here is rebuilt from the mathematical definitions: projection
//! via tangents, coverage via signed areas, compositing via a full per-pixel
//! fragment sort. None of it calls into the library rasterizer, so agreement
//! between the two is evidence rather than tautology.

use meshsplats_core::img::Image;
use meshsplats_core::raster::Camera;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A triangle-soup scene in plain arrays.
#[derive(Clone)]
pub struct RefScene {
    pub positions: Vec<[f64; 3]>,
    pub rgba: Vec<[f64; 4]>,
    pub faces: Vec<[u32; 3]>,
}

/// Projected vertex: screen pixels, NDC depth, clip-space w.
#[derive(Clone, Copy)]
struct ScreenVertex {
    sx: f64,
    sy: f64,
    z: f64,
    w: f64,
}

fn mat_vec(m: &[[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = (0..4).map(|c| m[r][c] * v[c]).sum();
    }
    out
}

/// World-to-camera matrix built by inverting the rigid pose directly:
/// the inverse of [R | t] is [R^T | -R^T t].
fn world_to_camera(cam: &Camera) -> [[f64; 4]; 4] {
    let m = cam.camera_to_world;
    let mut out = [[0.0; 4]; 4];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = m[(c, r)];
        }
    }
    for r in 0..3 {
        out[r][3] = -(0..3).map(|c| m[(c, r)] * m[(c, 3)]).sum::<f64>();
    }
    out[3][3] = 1.0;
    out
}

fn project(cam: &Camera, w2c: &[[f64; 4]; 4], p: [f64; 3]) -> ScreenVertex {
    let c = mat_vec(w2c, [p[0], p[1], p[2], 1.0]);
    let w = -c[2];
    let t = (cam.fov_x * 0.5).tan();
    let aspect = cam.width as f64 / cam.height as f64;
    let ndc_x = c[0] / (t * w);
    let ndc_y = c[1] * aspect / (t * w);
    let (near, far) = (cam.near, cam.far);
    let z_clip = -(far + near) / (far - near) * c[2] - 2.0 * far * near / (far - near);
    ScreenVertex {
        sx: (0.5 * ndc_x + 0.5) * cam.width as f64,
        sy: (0.5 - 0.5 * ndc_y) * cam.height as f64,
        z: z_clip / w,
        w,
    }
}

fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Boundary rule for zero edge values: include the edge if it points up, or
/// points exactly right (screen y grows downward).
fn boundary_included(dx: f64, dy: f64) -> bool {
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

struct RefFragment {
    depth: f64,
    face: u32,
    rgba: [f64; 4],
}

/// Renders by gathering, per pixel, every covering face, sorting the
/// fragments by (depth, face index), and compositing front to back.
pub fn reference_render(
    scene: &RefScene,
    cam: &Camera,
    num_layers: usize,
    background: [f64; 4],
) -> Image {
    let w2c = world_to_camera(cam);
    let projected: Vec<[ScreenVertex; 3]> = scene
        .faces
        .iter()
        .map(|f| {
            [
                project(cam, &w2c, scene.positions[f[0] as usize]),
                project(cam, &w2c, scene.positions[f[1] as usize]),
                project(cam, &w2c, scene.positions[f[2] as usize]),
            ]
        })
        .collect();

    let mut image = Image::zeros(cam.width, cam.height, 4);
    for py in 0..cam.height {
        for px in 0..cam.width {
            let cx = px as f64 + 0.5;
            let cy = py as f64 + 0.5;
            let mut frags: Vec<RefFragment> = Vec::new();
            for (fi, (sv, face)) in projected.iter().zip(&scene.faces).enumerate() {
                let area2 = cross2(
                    sv[1].sx - sv[0].sx,
                    sv[1].sy - sv[0].sy,
                    sv[2].sx - sv[0].sx,
                    sv[2].sy - sv[0].sy,
                );
                if area2 == 0.0 {
                    continue;
                }
                let sign = if area2 > 0.0 { 1.0 } else { -1.0 };
                // Numerator of lambda_k comes from the edge joining the
                // other two vertices, in cyclic order.
                let mut bary = [0.0; 3];
                let mut covered = true;
                for k in 0..3 {
                    let a = sv[(k + 1) % 3];
                    let b = sv[(k + 2) % 3];
                    let e = cross2(b.sx - a.sx, b.sy - a.sy, cx - a.sx, cy - a.sy) * sign;
                    if e < 0.0
                        || (e == 0.0
                            && !boundary_included(
                                (b.sx - a.sx) * sign,
                                (b.sy - a.sy) * sign,
                            ))
                    {
                        covered = false;
                        break;
                    }
                    bary[k] = e / area2.abs();
                }
                if !covered {
                    continue;
                }
                let depth = (0..3).map(|k| bary[k] * sv[k].z).sum();
                let mut q = [0.0; 3];
                for k in 0..3 {
                    q[k] = bary[k] / sv[k].w;
                }
                let qs: f64 = q.iter().sum();
                let mut rgba = [0.0; 4];
                for k in 0..3 {
                    let v = scene.rgba[face[k] as usize];
                    for (slot, vk) in rgba.iter_mut().zip(v) {
                        *slot += q[k] / qs * vk;
                    }
                }
                frags.push(RefFragment {
                    depth,
                    face: fi as u32,
                    rgba,
                });
            }
            frags.sort_by(|a, b| {
                a.depth
                    .partial_cmp(&b.depth)
                    .unwrap()
                    .then(a.face.cmp(&b.face))
            });

            let mut color = [0.0f64; 3];
            let mut trans = 1.0f64;
            for frag in frags.iter().take(num_layers) {
                let alpha = frag.rgba[3];
                for (c, slot) in color.iter_mut().enumerate() {
                    *slot += trans * alpha * frag.rgba[c];
                }
                trans *= 1.0 - alpha;
            }
            for c in 0..3 {
                image.set(px, py, c, color[c] + trans * background[3] * background[c]);
            }
            image.set(px, py, 3, 1.0 - trans);
        }
    }
    image
}

/// Random disconnected triangles inside the camera frustum: depths in
/// [-8, -2] camera space, transverse extent at 90% of the frustum cone.
pub fn random_scene(rng: &mut ChaCha8Rng, cam: &Camera, max_tris: usize) -> RefScene {
    let n_tris = rng.gen_range(1..=max_tris);
    let t = (cam.fov_x * 0.5).tan();
    let aspect = cam.width as f64 / cam.height as f64;
    let mut positions = Vec::with_capacity(3 * n_tris);
    let mut rgba = Vec::with_capacity(3 * n_tris);
    let mut faces = Vec::with_capacity(n_tris);
    for i in 0..n_tris {
        for _ in 0..3 {
            let z: f64 = rng.gen_range(-8.0..-2.0);
            let half_x = 0.9 * t * (-z);
            let half_y = 0.9 * t * (-z) / aspect;
            let local = [
                rng.gen_range(-half_x..half_x),
                rng.gen_range(-half_y..half_y),
                z,
                1.0,
            ];
            // Camera space to world through the pose.
            let m = cam.camera_to_world;
            let mut p = [0.0; 3];
            for (r, slot) in p.iter_mut().enumerate() {
                *slot = (0..4).map(|c| m[(r, c)] * local[c]).sum();
            }
            positions.push(p);
            rgba.push([
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ]);
        }
        faces.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
    }
    RefScene {
        positions,
        rgba,
        faces,
    }
}

/// Largest absolute difference over all pixels and channels.
pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.data.len(), b.data.len(), "image shapes differ");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
