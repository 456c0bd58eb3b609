//! Gaussian-to-triangle-fan conversion.
//!
//! Each Gaussian becomes a fan of `no_triag` triangles spanning its two
//! dominant scaled rotation axes (flat mode), or three orthogonal fans, one
//! per axis pair (solid mode). The fan center carries the Gaussian's full
//! opacity, boundary vertices carry `opacity * opac_mul`. Boundary samples
//! sit at angles `theta_i = -pi + 2*pi*i / no_triag`, a half-open sweep so
//! the seam vertex is not emitted twice.
//!
//! In solid mode boundary samples at the quarter angles coincide with the
//! six axis endpoints `+-sr_k`; those vertices are emitted once and shared
//! across fans by index, never deduplicated by position hashing.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianCloud, Mode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshGenConfig {
    /// Multiplier on the Gaussian scales; fans span `scale_mul` standard
    /// deviations.
    pub scale_mul: f32,
    /// Triangles per fan. At least 3; solid mode needs a multiple of 4 so
    /// fans meet exactly at the axis endpoints.
    pub no_triag: usize,
    /// Boundary opacity falloff factor.
    pub opac_mul: f32,
    pub mode: Mode,
}

impl Default for MeshGenConfig {
    fn default() -> Self {
        MeshGenConfig {
            scale_mul: 2.7,
            no_triag: 8,
            opac_mul: 0.2,
            mode: Mode::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub position: [f32; 3],
    /// Straight (non-premultiplied) color and opacity, each in [0, 1].
    pub rgba: [f32; 4],
}

/// Triangle soup with per-face provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshSoup {
    pub vertices: Vec<Vertex>,
    /// Counter-clockwise with respect to the fan normal `sr_a x sr_b`.
    pub faces: Vec<[u32; 3]>,
    /// Index of the source Gaussian of each face.
    pub face_gaussian_id: Vec<u32>,
}

impl MeshSoup {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
}

/// Surviving axis indices when the smallest log-scale axis is dropped, in
/// cyclic order so the dropped axis is the fan normal. Ties drop the lowest
/// index; 2-scale checkpoints always drop axis 0 (its log-scale is
/// `ln(EPS_FLAT)`).
fn flat_survivors(g: &Gaussian) -> (usize, usize) {
    let s = &g.log_scales;
    let mut k = 0;
    if s[1] < s[k] {
        k = 1;
    }
    if s[2] < s[k] {
        k = 2;
    }
    ((k + 1) % 3, (k + 2) % 3)
}

fn scaled_axis(g: &Gaussian, k: usize, scale_mul: f32) -> Vector3<f32> {
    let r: Vector3<f32> = g.rotation.column(k).into();
    r * (scale_mul * g.log_scales[k].exp())
}

/// The two scaled ellipse axes a flat fan spans.
pub fn flat_axes(g: &Gaussian, cfg: &MeshGenConfig) -> (Vector3<f32>, Vector3<f32>) {
    let (a, b) = flat_survivors(g);
    (
        scaled_axis(g, a, cfg.scale_mul),
        scaled_axis(g, b, cfg.scale_mul),
    )
}

/// All three scaled axes used by solid fans.
pub fn solid_axes(g: &Gaussian, cfg: &MeshGenConfig) -> [Vector3<f32>; 3] {
    [
        scaled_axis(g, 0, cfg.scale_mul),
        scaled_axis(g, 1, cfg.scale_mul),
        scaled_axis(g, 2, cfg.scale_mul),
    ]
}

fn theta(i: usize, n: usize) -> f32 {
    -std::f32::consts::PI + std::f32::consts::TAU * i as f32 / n as f32
}

fn center_vertex(g: &Gaussian) -> Vertex {
    Vertex {
        position: g.mean.into(),
        rgba: [g.color[0], g.color[1], g.color[2], g.opacity],
    }
}

fn boundary_rgba(g: &Gaussian, cfg: &MeshGenConfig) -> [f32; 4] {
    [
        g.color[0],
        g.color[1],
        g.color[2],
        g.opacity * cfg.opac_mul,
    ]
}

/// One fan: vertex 0 is the center, 1..=n the boundary ring. Face indices
/// are fragment-local.
pub fn flat_fan(g: &Gaussian, cfg: &MeshGenConfig) -> (Vec<Vertex>, Vec<[u32; 3]>) {
    let n = cfg.no_triag;
    let (sr1, sr2) = flat_axes(g, cfg);
    let rim = boundary_rgba(g, cfg);

    let mut vertices = Vec::with_capacity(n + 1);
    vertices.push(center_vertex(g));
    for i in 0..n {
        let t = theta(i, n);
        let offset = sr1 * t.cos() + sr2 * t.sin();
        vertices.push(Vertex {
            position: (g.mean + offset).into(),
            rgba: rim,
        });
    }

    let faces = (0..n)
        .map(|i| [0, 1 + i as u32, 1 + ((i + 1) % n) as u32])
        .collect();
    (vertices, faces)
}

/// Three orthogonal fans sharing one center and the six axis endpoints.
/// Vertex order: center, `+sr1, -sr1, +sr2, -sr2, +sr3, -sr3`, then the
/// off-axis boundary samples fan by fan in angle order.
pub fn solid_fans(g: &Gaussian, cfg: &MeshGenConfig) -> (Vec<Vertex>, Vec<[u32; 3]>) {
    let n = cfg.no_triag;
    debug_assert!(n % 4 == 0);
    let q = n / 4;
    let axes = solid_axes(g, cfg);
    let rim = boundary_rgba(g, cfg);

    let mut vertices = Vec::with_capacity(3 * n - 5);
    vertices.push(center_vertex(g));
    for axis in &axes {
        vertices.push(Vertex {
            position: (g.mean + axis).into(),
            rgba: rim,
        });
        vertices.push(Vertex {
            position: (g.mean - axis).into(),
            rgba: rim,
        });
    }
    // Axis endpoint index: +sr_k at 1 + 2k, -sr_k at 2 + 2k.
    let endpoint = |k: usize, positive: bool| -> u32 { (1 + 2 * k + usize::from(!positive)) as u32 };

    let mut faces = Vec::with_capacity(3 * n);
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let mut ring = Vec::with_capacity(n);
        for i in 0..n {
            // Quarter angles land exactly on the axis endpoints:
            // theta(0) = -pi -> -sr_a, theta(q) = -pi/2 -> -sr_b,
            // theta(2q) = 0 -> +sr_a, theta(3q) = pi/2 -> +sr_b.
            let shared = match i {
                0 => Some(endpoint(a, false)),
                _ if i == q => Some(endpoint(b, false)),
                _ if i == 2 * q => Some(endpoint(a, true)),
                _ if i == 3 * q => Some(endpoint(b, true)),
                _ => None,
            };
            match shared {
                Some(idx) => ring.push(idx),
                None => {
                    let t = theta(i, n);
                    let offset = axes[a] * t.cos() + axes[b] * t.sin();
                    vertices.push(Vertex {
                        position: (g.mean + offset).into(),
                        rgba: rim,
                    });
                    ring.push((vertices.len() - 1) as u32);
                }
            }
        }
        for i in 0..n {
            faces.push([0, ring[i], ring[(i + 1) % n]]);
        }
    }
    (vertices, faces)
}

/// Converts a whole cloud, concatenating per-Gaussian fragments in cloud
/// order and recording each face's source Gaussian index.
pub fn convert_cloud(cloud: &GaussianCloud, cfg: &MeshGenConfig) -> Result<MeshSoup> {
    if cfg.no_triag < 3 {
        return Err(Error::Config(format!(
            "no_triag must be at least 3, got {}",
            cfg.no_triag
        )));
    }
    match cfg.mode {
        Mode::Solid => {
            if cfg.no_triag % 4 != 0 {
                return Err(Error::Config(format!(
                    "solid mode requires no_triag divisible by 4, got {}",
                    cfg.no_triag
                )));
            }
            if cloud.source_mode == Mode::Flat {
                return Err(Error::Config(
                    "solid mode cannot be applied to a 2-scale (flat) checkpoint".into(),
                ));
            }
        }
        Mode::Flat => {}
    }

    let mut soup = MeshSoup::default();
    for (gi, g) in cloud.gaussians.iter().enumerate() {
        let (vertices, faces) = match cfg.mode {
            Mode::Flat => flat_fan(g, cfg),
            Mode::Solid => solid_fans(g, cfg),
        };
        let base = soup.vertices.len() as u32;
        soup.vertices.extend(vertices);
        for f in faces {
            soup.faces.push([base + f[0], base + f[1], base + f[2]]);
            soup.face_gaussian_id.push(gi as u32);
        }
    }
    Ok(soup)
}
