//! Command-line pipeline around `meshsplats-core`.
//!
//! Five subcommands cover the full workflow: `convert` turns a Gaussian
//! splatting checkpoint into a transparent triangle soup, `render` draws a
//! soup from a camera, `optimize` fine-tunes soup attributes against ground
//! truth images, `metrics` scores rendered images, and `export` writes OBJ
//! or glTF for external viewers.
//!
//! Exit codes: 0 success, 2 usage errors, 3 malformed or inconsistent data,
//! 4 numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use meshsplats_core::img::Image;
use meshsplats_core::io::{gltf, log as loss_log, manifest, obj, png, soup_ply};
use meshsplats_core::nalgebra::Matrix4;
use meshsplats_core::optim::LossRecord;
use meshsplats_core::{gaussian, meshgen, metrics, optim, raster, Error, Result};

#[derive(Parser)]
#[command(name = "meshsplats", version, about)]
struct Cli {
    /// Seed for the camera shuffling done during optimization.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Run on a single thread. Output is bit-identical either way; this
    /// trades speed for a serial, easily traced schedule.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a Gaussian splatting checkpoint (.ply) into a triangle soup.
    Convert(ConvertArgs),
    /// Render a triangle soup to a PNG from one camera.
    Render(RenderArgs),
    /// Fine-tune soup colors, opacities, and positions against ground truth.
    Optimize(OptimizeArgs),
    /// Score a directory of renders against ground-truth images.
    Metrics(MetricsArgs),
    /// Export a triangle soup to OBJ or glTF 2.0.
    Export(ExportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FanMode {
    /// One fan spanning the two dominant axes of each Gaussian.
    Flat,
    /// Three orthogonal fans per Gaussian.
    Solid,
}

#[derive(Args)]
struct ConvertArgs {
    /// Trained checkpoint, binary little-endian PLY.
    #[arg(long)]
    input: PathBuf,

    /// Output soup PLY.
    #[arg(long)]
    output: PathBuf,

    #[arg(long, value_enum, default_value_t = FanMode::Flat)]
    mode: FanMode,

    /// Fan radius in standard deviations of the source Gaussian.
    #[arg(long, default_value_t = 2.7)]
    scale_mul: f32,

    /// Triangles per fan; solid mode needs a multiple of 4.
    #[arg(long, default_value_t = 8)]
    triangles: usize,

    /// Opacity falloff factor applied to fan rim vertices.
    #[arg(long, default_value_t = 0.2)]
    opacity_mul: f32,
}

/// Camera selection shared by commands that render a single view: either a
/// manifest frame or an explicit pose.
#[derive(Args)]
struct CameraArgs {
    /// Camera manifest JSON; picks the pose and field of view of --frame.
    #[arg(long)]
    manifest: Option<PathBuf>,

    /// Frame index into --manifest.
    #[arg(long)]
    frame: Option<usize>,

    /// Camera-to-world matrix as 16 comma-separated numbers, row-major.
    #[arg(long)]
    pose: Option<String>,

    /// Horizontal field of view in radians; goes with --pose.
    #[arg(long)]
    fov: Option<f64>,

    /// Output width in pixels. Required with --pose; with --manifest it
    /// overrides the frame image resolution.
    #[arg(long)]
    width: Option<usize>,

    /// Output height in pixels; see --width.
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    /// Input soup PLY.
    #[arg(long)]
    input: PathBuf,

    /// Output PNG (RGBA).
    #[arg(long)]
    output: PathBuf,

    #[command(flatten)]
    camera: CameraArgs,

    /// Maximum depth-peeling passes.
    #[arg(long, default_value_t = 15)]
    layers: usize,

    /// Background RGBA composited behind all layers, comma separated.
    #[arg(long, default_value = "0,0,0,0")]
    background: String,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Input soup PLY.
    #[arg(long)]
    input: PathBuf,

    /// Camera manifest JSON; every frame image is used as ground truth.
    #[arg(long)]
    manifest: PathBuf,

    /// Output soup PLY.
    #[arg(long)]
    output: PathBuf,

    /// Where to write the per-step loss log as CSV.
    #[arg(long)]
    log: Option<PathBuf>,

    #[arg(long, default_value_t = 100)]
    epochs: usize,

    /// L1 weight in the loss; the SSIM term gets 1 - lambda.
    #[arg(long, default_value_t = 0.6)]
    lambda: f64,

    #[arg(long, default_value_t = 0.01)]
    lr_color: f64,

    /// Learning rate for vertex positions (default: exp(-3) * lr_color).
    #[arg(long)]
    lr_positions: Option<f64>,

    /// Keep vertex positions fixed; tune only colors and opacities.
    #[arg(long)]
    freeze_positions: bool,

    /// Prune after every this many epochs; 0 disables pruning.
    #[arg(long, default_value_t = 10)]
    prune_every: usize,

    /// Faces whose three opacities all sit below this are pruned.
    #[arg(long, default_value_t = (-4.0f64).exp())]
    prune_threshold: f64,

    /// Maximum depth-peeling passes per render.
    #[arg(long, default_value_t = 15)]
    layers: usize,

    /// Background RGBA used during fine-tuning, comma separated.
    #[arg(long, default_value = "0,0,0,0")]
    background: String,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory of rendered PNGs.
    #[arg(long)]
    renders: PathBuf,

    /// Directory of ground-truth PNGs with matching file names.
    #[arg(long)]
    truths: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Input soup PLY.
    #[arg(long)]
    input: PathBuf,

    /// Output path; the format follows the extension (.obj or .gltf).
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.deterministic);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn configure_threads(deterministic: bool) {
    let threads = if deterministic {
        Some(1)
    } else {
        match std::env::var("MESHSPLATS_THREADS") {
            Ok(v) => match v.parse::<usize>() {
                Ok(n) if n > 0 => Some(n),
                _ => {
                    eprintln!("warning: ignoring MESHSPLATS_THREADS={v}: not a positive integer");
                    None
                }
            },
            Err(_) => None,
        }
    };
    if let Some(n) = threads {
        // Only fails if a global pool already exists; it cannot yet.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Render(a) => cmd_render(a),
        Command::Optimize(a) => cmd_optimize(a, cli.seed),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Export(a) => cmd_export(a),
    }
}

fn parse_floats<const N: usize>(text: &str, flag: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::Usage(format!(
            "{flag} needs {N} comma-separated numbers, got {}",
            parts.len()
        )));
    }
    let mut out = [0.0; N];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| Error::Usage(format!("{flag}: '{p}' is not a number")))?;
    }
    Ok(out)
}

fn resolve_camera(a: &CameraArgs) -> Result<raster::Camera> {
    match (&a.manifest, &a.pose) {
        (Some(_), Some(_)) => Err(Error::Usage(
            "pass either --manifest or --pose, not both".into(),
        )),
        (None, None) => Err(Error::Usage(
            "a camera is required: --manifest with --frame, or --pose with --fov, --width, and --height"
                .into(),
        )),
        (Some(path), None) => {
            let frame = a
                .frame
                .ok_or_else(|| Error::Usage("--manifest needs --frame".into()))?;
            if a.fov.is_some() {
                return Err(Error::Usage(
                    "--fov only applies to --pose; the manifest carries the field of view".into(),
                ));
            }
            let man = manifest::load_manifest(path)?;
            let (width, height) = match (a.width, a.height) {
                (Some(w), Some(h)) => (w, h),
                (None, None) => {
                    let f = man.frames.get(frame).ok_or_else(|| {
                        Error::Config(format!(
                            "frame {frame} requested, manifest has {}",
                            man.frames.len()
                        ))
                    })?;
                    png::png_dimensions(&f.image_path)?
                }
                _ => return Err(Error::Usage("--width and --height go together".into())),
            };
            manifest::camera_for_frame(&man, frame, width, height)
        }
        (None, Some(pose)) => {
            if a.frame.is_some() {
                return Err(Error::Usage("--frame only applies to --manifest".into()));
            }
            let fov = a
                .fov
                .ok_or_else(|| Error::Usage("--pose needs --fov".into()))?;
            let (width, height) = match (a.width, a.height) {
                (Some(w), Some(h)) => (w, h),
                _ => return Err(Error::Usage("--pose needs --width and --height".into())),
            };
            let vals = parse_floats::<16>(pose, "--pose")?;
            let c2w = Matrix4::from_fn(|r, c| vals[r * 4 + c]);
            Ok(raster::Camera::new(width, height, fov, c2w))
        }
    }
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input)?;
    let cloud = gaussian::load_checkpoint(&bytes)?;
    let cfg = meshgen::MeshGenConfig {
        scale_mul: a.scale_mul,
        no_triag: a.triangles,
        opac_mul: a.opacity_mul,
        mode: match a.mode {
            FanMode::Flat => gaussian::Mode::Flat,
            FanMode::Solid => gaussian::Mode::Solid,
        },
    };
    let soup = meshgen::convert_cloud(&cloud, &cfg)?;
    soup_ply::write_soup(&a.output, &soup)?;
    println!(
        "converted {} gaussians into {} vertices / {} faces -> {}",
        cloud.len(),
        soup.vertex_count(),
        soup.face_count(),
        a.output.display()
    );
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let soup = soup_ply::read_soup(&a.input)?;
    let cam = resolve_camera(&a.camera)?;
    let background = parse_floats::<4>(&a.background, "--background")?;
    let cfg = raster::RenderConfig {
        num_layers: a.layers,
        background,
    };
    let out = raster::render(&soup, &cam, &cfg)?;
    png::save_png(&a.output, &out.frame.image)?;
    println!(
        "rendered {}x{} in {} peel passes -> {}",
        cam.width,
        cam.height,
        out.peels.len(),
        a.output.display()
    );
    Ok(())
}

fn epoch_mean_loss(records: &[LossRecord], epoch: usize) -> Option<f64> {
    let losses: Vec<f64> = records
        .iter()
        .filter(|r| r.epoch == epoch)
        .map(|r| r.parts.loss)
        .collect();
    if losses.is_empty() {
        None
    } else {
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

fn cmd_optimize(a: &OptimizeArgs, seed: u64) -> Result<()> {
    let soup = soup_ply::read_soup(&a.input)?;
    let data = manifest::load_dataset(&a.manifest)?;
    let truths: Vec<Image> = data.images.iter().map(Image::rgb).collect();
    let background = parse_floats::<4>(&a.background, "--background")?;
    let cfg = optim::OptimizeConfig {
        epochs: a.epochs,
        lambda: a.lambda,
        lr_color: a.lr_color,
        lr_positions: a
            .lr_positions
            .unwrap_or((-3.0f64).exp() * a.lr_color),
        optimize_positions: !a.freeze_positions,
        prune_every: a.prune_every,
        prune_threshold: a.prune_threshold,
        num_layers: a.layers,
        background,
        seed,
    };
    let (tuned, records) = optim::optimize(&soup, &data.cameras, &truths, &cfg)?;
    soup_ply::write_soup(&a.output, &tuned)?;
    if let Some(log_path) = &a.log {
        let meta = [
            ("seed", seed.to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("lambda", cfg.lambda.to_string()),
            ("lr_color", cfg.lr_color.to_string()),
            ("lr_positions", cfg.lr_positions.to_string()),
            ("optimize_positions", cfg.optimize_positions.to_string()),
            ("prune_every", cfg.prune_every.to_string()),
            ("prune_threshold", cfg.prune_threshold.to_string()),
            ("num_layers", cfg.num_layers.to_string()),
            ("cameras", data.cameras.len().to_string()),
        ]
        .map(|(k, v)| (k.to_string(), v));
        loss_log::write_loss_csv(log_path, &records, &meta)?;
    }
    // Epochs are numbered from 1 in the log.
    match (
        epoch_mean_loss(&records, 1),
        epoch_mean_loss(&records, cfg.epochs),
    ) {
        (Some(first), Some(last)) => println!(
            "optimized {} epochs over {} views: mean loss {:.6} -> {:.6}",
            cfg.epochs,
            data.cameras.len(),
            first,
            last
        ),
        _ => println!("no epochs run; soup passed through unchanged"),
    }
    println!(
        "faces {} -> {}, wrote {}",
        soup.face_count(),
        tuned.face_count(),
        a.output.display()
    );
    Ok(())
}

/// PNG files of one directory, sorted by file name.
fn png_listing(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        match path.file_name().and_then(|n| n.to_str()) {
            Some(name) => out.push((name.to_string(), path.clone())),
            None => {
                return Err(Error::Usage(format!(
                    "{} is not valid UTF-8",
                    path.display()
                )));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("no .png files in {}", dir.display())));
    }
    out.sort();
    Ok(out)
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let renders = png_listing(&a.renders)?;
    let truths = png_listing(&a.truths)?;
    for (name, _) in &renders {
        if !truths.iter().any(|(t, _)| t == name) {
            return Err(Error::Usage(format!(
                "{name} has no counterpart in {}",
                a.truths.display()
            )));
        }
    }
    for (name, _) in &truths {
        if !renders.iter().any(|(r, _)| r == name) {
            return Err(Error::Usage(format!(
                "{name} has no counterpart in {}",
                a.renders.display()
            )));
        }
    }

    let mut psnr_sum = 0.0;
    let mut l1_sum = 0.0;
    let mut ssim_vals = Vec::new();
    for ((name, render_path), (_, truth_path)) in renders.iter().zip(&truths) {
        let render = png::load_png(render_path)?.rgb();
        let truth = png::load_png(truth_path)?.rgb();
        if render.width != truth.width || render.height != truth.height {
            return Err(Error::Config(format!(
                "{name}: render is {}x{}, ground truth is {}x{}",
                render.width, render.height, truth.width, truth.height
            )));
        }
        let p = metrics::psnr(&render, &truth)?;
        let l = metrics::l1(&render, &truth)?;
        let fits_window =
            render.width >= metrics::SSIM_WINDOW && render.height >= metrics::SSIM_WINDOW;
        let s = if fits_window {
            Some(metrics::ssim(&render, &truth)?)
        } else {
            None
        };
        psnr_sum += p;
        l1_sum += l;
        if let Some(s) = s {
            ssim_vals.push(s);
        }
        println!("{name}: psnr={p:.4} l1={l:.6} ssim={}", format_ssim(s));
    }
    let n = renders.len() as f64;
    let mean_ssim = if ssim_vals.is_empty() {
        None
    } else {
        Some(ssim_vals.iter().sum::<f64>() / ssim_vals.len() as f64)
    };
    println!(
        "mean: psnr={:.4} l1={:.6} ssim={}",
        psnr_sum / n,
        l1_sum / n,
        format_ssim(mean_ssim)
    );
    Ok(())
}

fn format_ssim(s: Option<f64>) -> String {
    match s {
        Some(v) => format!("{v:.6}"),
        None => "nan".to_string(),
    }
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let soup = soup_ply::read_soup(&a.input)?;
    let ext = a
        .output
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => {
            obj::write_obj(&a.output, &soup)?;
            eprintln!("note: OBJ keeps vertex colors but drops opacity");
        }
        Some("gltf") => gltf::write_gltf(&a.output, &soup)?,
        _ => {
            return Err(Error::Usage(format!(
                "--output must end in .obj or .gltf, got {}",
                a.output.display()
            )));
        }
    }
    println!(
        "exported {} vertices / {} faces -> {}",
        soup.vertex_count(),
        soup.face_count(),
        a.output.display()
    );
    Ok(())
}
