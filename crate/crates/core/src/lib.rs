//! Gaussian-splat checkpoints in, transparent triangle soups out.
//!
//! The pipeline has five stages, one module each:
//!
//! * [`gaussian`] parses trained Gaussian Splatting checkpoints (binary PLY)
//!   and activates raw fields into usable parameters.
//! * [`meshgen`] converts each Gaussian into a triangle fan (or three
//!   orthogonal fans) with per-vertex color and opacity.
//! * [`raster`] renders soups with a depth-peeling software rasterizer and
//!   front-to-back alpha compositing.
//! * [`optim`] fine-tunes vertex colors, opacities, and positions against
//!   ground-truth images, with periodic pruning of invisible faces.
//! * [`io`] reads camera manifests and PNGs, and writes soups (PLY), OBJ,
//!   glTF, PNGs, and loss logs.
//!
//! [`metrics`] holds the shared image metrics (L1, SSIM, PSNR, training
//! loss) and [`synth`] generates small synthetic scenes used by tests and
//! the bundled toy pipeline.

pub mod error;
pub mod gaussian;
pub mod img;
pub mod io;
pub mod meshgen;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};

/// Re-exported so downstream code can build the matrix types our public API
/// takes without pinning its own copy of the dependency.
pub use nalgebra;
