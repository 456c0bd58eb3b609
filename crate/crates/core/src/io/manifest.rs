//! Camera manifests in the synthetic-dataset JSON layout: a shared
//! horizontal field of view plus one camera-to-world matrix per frame.
//!
//! Frame image paths resolve relative to the manifest file and get a `.png`
//! extension appended when they carry none. Image resolution comes from the
//! first frame's file and every other frame must match it. Errors name the
//! offending frame.

use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::img::Image;
use crate::io::png::load_png;
use crate::raster::Camera;

#[derive(Debug, Deserialize)]
struct RawManifest {
    camera_angle_x: f64,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Deserialize)]
struct RawFrame {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub image_path: PathBuf,
    /// Row-major camera-to-world pose; the camera looks down its local -z.
    pub camera_to_world: Matrix4<f64>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub camera_angle_x: f64,
    pub frames: Vec<Frame>,
}

/// Everything needed to fine-tune: one camera and one loaded image per frame.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub frames: Vec<Frame>,
}

/// Parses manifest JSON, resolving image paths against `base_dir`.
pub fn parse_manifest(json: &str, base_dir: &Path) -> Result<Manifest> {
    let raw: RawManifest =
        serde_json::from_str(json).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    let frames = raw
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut image_path = base_dir.join(&f.file_path);
            if image_path.extension().is_none() {
                image_path.set_extension("png");
            }
            let m = Matrix4::from_fn(|r, c| f.transform_matrix[r][c]);
            if m.try_inverse().is_none() {
                return Err(Error::Format(format!(
                    "frame {i}: transform_matrix is not invertible"
                )));
            }
            Ok(Frame {
                image_path,
                camera_to_world: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Manifest {
        camera_angle_x: raw.camera_angle_x,
        frames,
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let json = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&json, base)
}

/// Camera for one frame at an externally known resolution.
pub fn camera_for_frame(
    manifest: &Manifest,
    index: usize,
    width: usize,
    height: usize,
) -> Result<Camera> {
    let frame = manifest.frames.get(index).ok_or_else(|| {
        Error::Config(format!(
            "frame {index} requested, manifest has {}",
            manifest.frames.len()
        ))
    })?;
    Ok(Camera::new(
        width,
        height,
        manifest.camera_angle_x,
        frame.camera_to_world,
    ))
}

/// Loads the manifest plus every frame image, taking the resolution from the
/// first frame and insisting the rest agree.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(path)?;
    if manifest.frames.is_empty() {
        return Err(Error::Format(format!(
            "{}: manifest has no frames",
            path.display()
        )));
    }
    let mut images = Vec::with_capacity(manifest.frames.len());
    let mut cameras = Vec::with_capacity(manifest.frames.len());
    let mut resolution: Option<(usize, usize)> = None;
    for (i, frame) in manifest.frames.iter().enumerate() {
        let img = load_png(&frame.image_path)
            .map_err(|e| Error::Format(format!("frame {i}: {e}")))?;
        match resolution {
            None => resolution = Some((img.width, img.height)),
            Some((w, h)) if (img.width, img.height) != (w, h) => {
                return Err(Error::Format(format!(
                    "frame {i}: image is {}x{}, expected {w}x{h}",
                    img.width, img.height
                )));
            }
            _ => {}
        }
        cameras.push(Camera::new(
            img.width,
            img.height,
            manifest.camera_angle_x,
            frame.camera_to_world,
        ));
        images.push(img);
    }
    Ok(Dataset {
        cameras,
        images,
        frames: manifest.frames,
    })
}
