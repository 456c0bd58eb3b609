//! Synthetic inputs: seeded toy gaussian clouds, orbit cameras, and a
//! checkpoint writer, so the whole pipeline can run without external data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gaussian::{activate_cloud, GaussianCloud, LogScales, RawGaussianRecord};
use crate::raster::Camera;

/// Seeded random raw records inside the unit box. `scale_count` selects
/// 2-scale (flat) or 3-scale (solid) checkpoints.
pub fn toy_records(count: usize, seed: u64, scale_count: usize) -> Vec<RawGaussianRecord> {
    assert!(
        scale_count == 2 || scale_count == 3,
        "gaussians carry 2 or 3 scales"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut unit = || rng.gen_range(-1.0f32..1.0);
            let position = [unit(), unit(), unit()];
            let f_dc = [
                rng.gen_range(-1.5f32..1.5),
                rng.gen_range(-1.5f32..1.5),
                rng.gen_range(-1.5f32..1.5),
            ];
            // Mostly visible: sigmoid of [0.5, 3] is [0.62, 0.95].
            let raw_opacity = rng.gen_range(0.5f32..3.0);
            let mut log_scale = || rng.gen_range(0.05f32.ln()..0.3f32.ln());
            let log_scales = if scale_count == 2 {
                LogScales::Two([log_scale(), log_scale()])
            } else {
                LogScales::Three([log_scale(), log_scale(), log_scale()])
            };
            let rotation = loop {
                let q = [
                    rng.gen_range(-1.0f32..1.0),
                    rng.gen_range(-1.0f32..1.0),
                    rng.gen_range(-1.0f32..1.0),
                    rng.gen_range(-1.0f32..1.0),
                ];
                let norm = q.iter().map(|v| v * v).sum::<f32>().sqrt();
                if norm > 0.1 {
                    break [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
                }
            };
            RawGaussianRecord {
                position,
                f_dc,
                raw_opacity,
                log_scales,
                rotation,
            }
        })
        .collect()
}

/// Activated toy cloud; see [`toy_records`].
pub fn toy_cloud(count: usize, seed: u64, scale_count: usize) -> Result<GaussianCloud> {
    activate_cloud(&toy_records(count, seed, scale_count))
}

/// Cameras on a circle of the given radius around the origin, all looking at
/// it, slightly elevated so the orbit is not degenerate with the scene plane.
pub fn orbit_cameras(
    count: usize,
    radius: f64,
    width: usize,
    height: usize,
    fov_x: f64,
) -> Vec<Camera> {
    (0..count)
        .map(|i| {
            let phi = i as f64 / count as f64 * std::f64::consts::TAU;
            let eye = [
                radius * phi.cos(),
                radius * phi.sin(),
                0.25 * radius,
            ];
            Camera::look_at(width, height, fov_x, eye, [0.0; 3], [0.0, 0.0, 1.0])
        })
        .collect()
}

/// Serializes records as a binary little-endian gaussian checkpoint with the
/// conventional property order.
pub fn checkpoint_ply_bytes(records: &[RawGaussianRecord]) -> Vec<u8> {
    let scale_count = records
        .first()
        .map_or(3, |r| r.log_scales.count());
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", records.len()));
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for i in 0..scale_count {
        header.push_str(&format!("property float scale_{i}\n"));
    }
    for i in 0..4 {
        header.push_str(&format!("property float rot_{i}\n"));
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for r in records {
        let mut put = |v: f32| out.extend_from_slice(&v.to_le_bytes());
        for v in r.position {
            put(v);
        }
        for v in r.f_dc {
            put(v);
        }
        put(r.raw_opacity);
        match r.log_scales {
            LogScales::Two(s) => s.into_iter().for_each(&mut put),
            LogScales::Three(s) => s.into_iter().for_each(&mut put),
        }
        for v in r.rotation {
            put(v);
        }
    }
    out
}
