//! Fine-tuning of soup vertex colors, opacities, and positions against
//! ground-truth views.
//!
//! Parameters live in double precision across the whole run; the soup's
//! single-precision form is materialized at prune boundaries and at the end,
//! so the optimized result always matches what a written file round-trips
//! to. Each epoch visits every camera once in a seeded shuffled order and
//! takes one Adam step per camera. After every `prune_every`-th epoch, faces
//! whose three vertices all fall below the opacity threshold are dropped
//! along with any vertices no surviving face references; Adam moments move
//! with the surviving vertices.

mod backward;

pub use backward::{backward, ParamGrads};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::img::Image;
use crate::meshgen::{MeshSoup, Vertex};
use crate::metrics::{loss_grad, LossParts};
use crate::raster::{render_scene, Camera, RenderConfig, RenderOutput, Scene};

/// Differentiable soup state in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SoupParams {
    pub positions: Vec<[f64; 3]>,
    pub rgba: Vec<[f64; 4]>,
    pub faces: Vec<[u32; 3]>,
    pub face_gaussian_id: Vec<u32>,
}

impl SoupParams {
    pub fn from_soup(soup: &MeshSoup) -> Self {
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
        SoupParams {
            positions,
            rgba,
            faces: soup.faces.clone(),
            face_gaussian_id: soup.face_gaussian_id.clone(),
        }
    }

    /// Materializes the single-precision soup, clamping colors and opacities
    /// to the unit interval.
    pub fn to_soup(&self) -> MeshSoup {
        let vertices = self
            .positions
            .iter()
            .zip(&self.rgba)
            .map(|(p, c)| Vertex {
                position: [p[0] as f32, p[1] as f32, p[2] as f32],
                rgba: [
                    c[0].clamp(0.0, 1.0) as f32,
                    c[1].clamp(0.0, 1.0) as f32,
                    c[2].clamp(0.0, 1.0) as f32,
                    c[3].clamp(0.0, 1.0) as f32,
                ],
            })
            .collect();
        MeshSoup {
            vertices,
            faces: self.faces.clone(),
            face_gaussian_id: self.face_gaussian_id.clone(),
        }
    }

    /// Rounds the state through single precision in place.
    fn quantize(&mut self) {
        let soup = self.to_soup();
        *self = SoupParams::from_soup(&soup);
    }

    pub fn scene(&self, cam: &Camera) -> Result<Scene> {
        Scene::new(&self.positions, self.rgba.clone(), self.faces.clone(), cam)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
}

/// Renders the parameters under one camera, keeping the scene for backward.
pub fn render_params(
    params: &SoupParams,
    cam: &Camera,
    cfg: &RenderConfig,
) -> Result<(Scene, RenderOutput)> {
    let scene = params.scene(cam)?;
    let out = render_scene(&scene, cfg);
    Ok((scene, out))
}

/// Forward plus backward for one view: the loss against `truth` and its
/// gradient with respect to every parameter.
pub fn compute_gradients(
    params: &SoupParams,
    cam: &Camera,
    truth: &Image,
    lambda: f64,
    cfg: &RenderConfig,
) -> Result<(LossParts, ParamGrads)> {
    let (scene, out) = render_params(params, cam, cfg)?;
    let rgb = out.frame.image.rgb();
    let (parts, dimg) = loss_grad(&rgb, truth, lambda)?;
    let mut grads = ParamGrads::zeros(params.vertex_count());
    backward(&scene, &out, &dimg, cfg.background, &mut grads);
    Ok((parts, grads))
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam first and second moments per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_pos: Vec<[f64; 3]>,
    v_pos: Vec<[f64; 3]>,
    m_rgba: Vec<[f64; 4]>,
    v_rgba: Vec<[f64; 4]>,
    step_count: u64,
}

impl AdamState {
    pub fn new(vertex_count: usize) -> Self {
        AdamState {
            m_pos: vec![[0.0; 3]; vertex_count],
            v_pos: vec![[0.0; 3]; vertex_count],
            m_rgba: vec![[0.0; 4]; vertex_count],
            v_rgba: vec![[0.0; 4]; vertex_count],
            step_count: 0,
        }
    }

    /// One bias-corrected update. Colors and opacities are clamped to [0, 1]
    /// after the step; positions are unconstrained.
    pub fn step(
        &mut self,
        params: &mut SoupParams,
        grads: &ParamGrads,
        lr_color: f64,
        lr_positions: f64,
    ) {
        assert_eq!(params.vertex_count(), self.m_pos.len());
        assert_eq!(params.vertex_count(), grads.positions.len());
        self.step_count += 1;
        let bc1 = 1.0 - BETA1.powi(self.step_count as i32);
        let bc2 = 1.0 - BETA2.powi(self.step_count as i32);
        for v in 0..params.vertex_count() {
            for c in 0..4 {
                let g = grads.rgba[v][c];
                let m = &mut self.m_rgba[v][c];
                let vv = &mut self.v_rgba[v][c];
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *vv = BETA2 * *vv + (1.0 - BETA2) * g * g;
                let update = (*m / bc1) / ((*vv / bc2).sqrt() + ADAM_EPS);
                params.rgba[v][c] = (params.rgba[v][c] - lr_color * update).clamp(0.0, 1.0);
            }
            for c in 0..3 {
                let g = grads.positions[v][c];
                let m = &mut self.m_pos[v][c];
                let vv = &mut self.v_pos[v][c];
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *vv = BETA2 * *vv + (1.0 - BETA2) * g * g;
                let update = (*m / bc1) / ((*vv / bc2).sqrt() + ADAM_EPS);
                params.positions[v][c] -= lr_positions * update;
            }
        }
    }

    /// Drops moment rows for removed vertices, preserving order.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.m_pos.len());
        let filter = |src: &mut Vec<[f64; 3]>| {
            let mut i = 0;
            src.retain(|_| {
                let k = keep[i];
                i += 1;
                k
            });
        };
        filter(&mut self.m_pos);
        filter(&mut self.v_pos);
        let filter4 = |src: &mut Vec<[f64; 4]>| {
            let mut i = 0;
            src.retain(|_| {
                let k = keep[i];
                i += 1;
                k
            });
        };
        filter4(&mut self.m_rgba);
        filter4(&mut self.v_rgba);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub faces_removed: usize,
    pub vertices_removed: usize,
    /// Per old vertex: whether it survived. Drives moment remapping.
    pub vertex_keep: Vec<bool>,
}

/// Removes faces whose three vertices all have opacity below `threshold`,
/// then vertices no surviving face references. Vertex order is preserved and
/// face indices are remapped; per-face gaussian provenance follows the faces.
pub fn prune(params: &mut SoupParams, threshold: f64) -> PruneReport {
    let faces_before = params.faces.len();
    let verts_before = params.positions.len();

    let mut faces = Vec::with_capacity(faces_before);
    let mut ids = Vec::with_capacity(faces_before);
    for (f, &gid) in params.faces.iter().zip(&params.face_gaussian_id) {
        let dead = f.iter().all(|&v| params.rgba[v as usize][3] < threshold);
        if !dead {
            faces.push(*f);
            ids.push(gid);
        }
    }

    let mut keep = vec![false; verts_before];
    for f in &faces {
        for &v in f {
            keep[v as usize] = true;
        }
    }
    let mut remap = vec![u32::MAX; verts_before];
    let mut next = 0u32;
    for (v, &k) in keep.iter().enumerate() {
        if k {
            remap[v] = next;
            next += 1;
        }
    }
    for f in faces.iter_mut() {
        for v in f.iter_mut() {
            *v = remap[*v as usize];
        }
    }

    let mut idx = 0;
    params.positions.retain(|_| {
        let k = keep[idx];
        idx += 1;
        k
    });
    idx = 0;
    params.rgba.retain(|_| {
        let k = keep[idx];
        idx += 1;
        k
    });
    params.faces = faces;
    params.face_gaussian_id = ids;

    PruneReport {
        faces_removed: faces_before - params.faces.len(),
        vertices_removed: verts_before - params.positions.len(),
        vertex_keep: keep,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub epochs: usize,
    /// L1 weight in the loss; the SSIM term gets 1 - lambda.
    pub lambda: f64,
    pub lr_color: f64,
    pub lr_positions: f64,
    pub optimize_positions: bool,
    /// Prune after every this many epochs; 0 disables pruning.
    pub prune_every: usize,
    pub prune_threshold: f64,
    pub num_layers: usize,
    pub background: [f64; 4],
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let lr_color = 0.01;
        OptimizeConfig {
            epochs: 100,
            lambda: 0.6,
            lr_color,
            // Positions move three e-foldings slower than colors.
            lr_positions: (-3.0f64).exp() * lr_color,
            optimize_positions: true,
            prune_every: 10,
            prune_threshold: (-4.0f64).exp(),
            num_layers: 15,
            background: [0.0; 4],
            seed: 0,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub camera: usize,
    pub parts: LossParts,
    pub vertices: usize,
    pub faces: usize,
}

/// Runs the fine-tuning loop and returns the optimized soup with the
/// per-step loss log.
pub fn optimize(
    soup: &MeshSoup,
    cameras: &[Camera],
    truths: &[Image],
    cfg: &OptimizeConfig,
) -> Result<(MeshSoup, Vec<LossRecord>)> {
    if cameras.len() != truths.len() {
        return Err(Error::Config(format!(
            "{} cameras but {} ground-truth images",
            cameras.len(),
            truths.len()
        )));
    }
    for (i, (cam, truth)) in cameras.iter().zip(truths).enumerate() {
        if truth.width != cam.width || truth.height != cam.height || truth.channels != 3 {
            return Err(Error::Config(format!(
                "view {i}: ground truth is {}x{}x{}, camera renders {}x{}x3",
                truth.width, truth.height, truth.channels, cam.width, cam.height
            )));
        }
    }

    let render_cfg = RenderConfig {
        num_layers: cfg.num_layers,
        background: cfg.background,
    };
    let lr_positions = if cfg.optimize_positions {
        cfg.lr_positions
    } else {
        0.0
    };

    let mut params = SoupParams::from_soup(soup);
    let mut adam = AdamState::new(params.vertex_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..cameras.len()).collect();
        order.shuffle(&mut rng);
        for cam_idx in order {
            let (parts, grads) = compute_gradients(
                &params,
                &cameras[cam_idx],
                &truths[cam_idx],
                cfg.lambda,
                &render_cfg,
            )?;
            adam.step(&mut params, &grads, cfg.lr_color, lr_positions);
            records.push(LossRecord {
                epoch,
                camera: cam_idx,
                parts,
                vertices: params.vertex_count(),
                faces: params.face_count(),
            });
        }
        if cfg.prune_every > 0 && epoch % cfg.prune_every == 0 {
            let report = prune(&mut params, cfg.prune_threshold);
            adam.retain(&report.vertex_keep);
            params.quantize();
        }
    }

    Ok((params.to_soup(), records))
}
