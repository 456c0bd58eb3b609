//! Gaussian Splatting checkpoint model.
//!
//! A trained checkpoint stores raw, unactivated parameters per Gaussian:
//! log-space scales, logit-space opacity, an unnormalized scalar-first
//! quaternion, and zeroth-order SH color coefficients. [`activate`] turns a
//! raw record into a [`Gaussian`] with a rotation matrix, sigmoid opacity,
//! and clamped base color. Everything in this module is f32; checkpoints
//! carry no more precision than that.

mod ply;

pub use ply::parse_gs_ply;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Zeroth-order spherical-harmonics basis constant.
pub const SH_C0: f32 = 0.282_094_79;

/// Log-scale assigned to the suppressed axis of 2-scale (flattened)
/// checkpoints, in scene units.
pub const EPS_FLAT: f32 = 1e-8;

/// Raw per-vertex fields read from a checkpoint, before activation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGaussianRecord {
    pub position: [f32; 3],
    /// Zeroth-order SH color coefficients (`f_dc_0..2`).
    pub f_dc: [f32; 3],
    /// Logit-space opacity.
    pub raw_opacity: f32,
    /// Log-space scales; two entries for flattened checkpoints.
    pub log_scales: LogScales,
    /// Scalar-first quaternion `(w, x, y, z)`, not necessarily unit length.
    pub rotation: [f32; 4],
}

/// Log-space scales of a raw record. Checkpoints store either two (flattened
/// Gaussians) or three.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogScales {
    Two([f32; 2]),
    Three([f32; 3]),
}

impl LogScales {
    pub fn count(&self) -> usize {
        match self {
            LogScales::Two(_) => 2,
            LogScales::Three(_) => 3,
        }
    }
}

/// Declared dimensionality of a checkpoint, and the fan layout a soup is
/// generated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One fan per Gaussian spanning its two dominant axes.
    Flat,
    /// Three orthogonal fans per Gaussian.
    Solid,
}

/// An activated Gaussian: unit rotation expanded to a matrix, opacity in
/// [0, 1], base color in [0, 1]^3, scales kept in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vector3<f32>,
    /// Rotation matrix with columns `r1, r2, r3`.
    pub rotation: Matrix3<f32>,
    /// Always three entries; 2-scale records get `ln(EPS_FLAT)` first.
    pub log_scales: [f32; 3],
    pub opacity: f32,
    pub color: [f32; 3],
}

/// All Gaussians of one checkpoint plus its declared dimensionality.
#[derive(Debug, Clone)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub source_mode: Mode,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Activates one raw record.
///
/// Fails on a zero-norm quaternion; every other input activates (sigmoid and
/// clamp are total).
pub fn activate(raw: &RawGaussianRecord) -> Result<Gaussian> {
    let [w, x, y, z] = raw.rotation;
    let q = Quaternion::new(w, x, y, z);
    if q.norm() == 0.0 {
        return Err(Error::Format(
            "zero-norm quaternion cannot be normalized".into(),
        ));
    }
    let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();

    let log_scales = match raw.log_scales {
        LogScales::Two([a, b]) => [EPS_FLAT.ln(), a, b],
        LogScales::Three(s) => s,
    };

    let mut color = [0.0f32; 3];
    for (c, &f) in color.iter_mut().zip(&raw.f_dc) {
        *c = (0.5 + SH_C0 * f).clamp(0.0, 1.0);
    }

    Ok(Gaussian {
        mean: Vector3::from(raw.position),
        rotation: rotation.into_inner(),
        log_scales,
        opacity: sigmoid(raw.raw_opacity),
        color,
    })
}

/// Activates a whole parsed checkpoint, tagging errors with the record index.
pub fn activate_cloud(records: &[RawGaussianRecord]) -> Result<GaussianCloud> {
    let source_mode = match records.first() {
        Some(r) if r.log_scales.count() == 2 => Mode::Flat,
        _ => Mode::Solid,
    };
    let gaussians = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            activate(r).map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("record {i}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianCloud {
        gaussians,
        source_mode,
    })
}

/// Parses and activates a checkpoint in one step.
pub fn load_checkpoint(bytes: &[u8]) -> Result<GaussianCloud> {
    activate_cloud(&parse_gs_ply(bytes)?)
}

/// Assembles the 3x3 covariance `R * S * S^T * R^T` with
/// `S = diag(exp(log_scales))`.
pub fn covariance(g: &Gaussian) -> Matrix3<f32> {
    let s = Matrix3::from_diagonal(&Vector3::new(
        g.log_scales[0].exp(),
        g.log_scales[1].exp(),
        g.log_scales[2].exp(),
    ));
    g.rotation * s * s.transpose() * g.rotation.transpose()
}
