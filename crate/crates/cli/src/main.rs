//! `fishrepro` command-line front-end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fishrepro_core::crop::{make_crop, output_projection, DEFAULT_CROP_SIZE};
use fishrepro_core::evaluation::{check_skips, evaluate_run, GtRecord};
use fishrepro_core::harness::{generate_scene, run_pipeline, write_scene, OracleNoise, ProjectionSetting, RunConfig};
use fishrepro_core::io::{read_json, read_jsonl, write_json, write_jsonl, CameraFile};
use fishrepro_core::skeleton::{SkeletonTopology, PELVIS};
use fishrepro_core::spatial::{comd, mbba, mpja, select_projection};
use fishrepro_core::triangulation::{DetectionRecord, Rig};
use fishrepro_core::{BoundingBox, CameraModel, Frame, ImageBuffer, ModelKind, Pose3D, Rotation};
use image::{DynamicImage, ExtendedColorType};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "fishrepro", version, about = "Fisheye projection models, crop reprojection and pose evaluation")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, env = "FISHREPRO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warp a bounding-box crop of an image into a virtual output camera.
    Reproject(ReprojectArgs),
    /// Per-record MPJA, MBBA, CoMD and hybrid choice as CSV on stdout.
    Angles(AnglesArgs),
    /// Evaluate predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Triangulate multi-view detections into 3D skeletons.
    Triangulate(TriangulateArgs),
    /// Generate a synthetic scene and its input files.
    Synth(SynthArgs),
    /// Run the full synthetic pipeline and write reports.
    Run(RunArgs),
}

#[derive(Args)]
struct ReprojectArgs {
    /// Input camera JSON.
    #[arg(long)]
    camera: PathBuf,
    /// Bounding box as x,y,w,h in input pixels.
    #[arg(long, value_parser = parse_bbox)]
    bbox: BoundingBox,
    /// Output projection model: PH, EF, DS, CC or EC.
    #[arg(long, default_value = "DS")]
    out_kind: ModelKind,
    /// Output crop side length in pixels.
    #[arg(long, default_value_t = DEFAULT_CROP_SIZE)]
    out_size: u32,
    /// Write the output camera and rotation here instead of stdout.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Input PNG.
    input: PathBuf,
    /// Output PNG.
    output: PathBuf,
}

#[derive(Args)]
struct AnglesArgs {
    /// Camera JSON; its extrinsics map world poses into the camera frame.
    #[arg(long)]
    camera: PathBuf,
    /// Pose JSONL with `{"id", "pose"}` lines in world mm.
    #[arg(long)]
    poses: PathBuf,
    /// Bounding-box JSONL with `{"id", "bbox"}` lines; enables MBBA.
    #[arg(long)]
    bboxes: Option<PathBuf>,
    /// Hybrid threshold in degrees.
    #[arg(long, default_value_t = 110.0)]
    alpha_t: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth JSONL.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction JSONL.
    #[arg(long)]
    pred: PathBuf,
    /// Camera JSON used for MPJA and MBBA.
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Hybrid thresholds in degrees, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "110")]
    alpha_t: Vec<f64>,
    /// Root joint index for relative metrics.
    #[arg(long, default_value_t = PELVIS)]
    root: usize,
    /// Report JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-bin curves CSV path.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct TriangulateArgs {
    /// Rig JSON listing each camera's model and extrinsics.
    #[arg(long)]
    rig: PathBuf,
    /// Detection JSONL.
    #[arg(long)]
    detections: PathBuf,
    /// Skeleton topology JSON (built-in 17-joint skeleton when omitted).
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Weight of the bone symmetry penalty.
    #[arg(long, default_value_t = 1.0)]
    lambda_sym: f64,
    /// Output JSONL of triangulated poses.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of skeletons.
    #[arg(short = 'n', long, default_value_t = 200)]
    count: usize,
    /// Lower MPJA bound in degrees.
    #[arg(long, default_value_t = 10.0)]
    mpja_min: f64,
    /// Upper MPJA bound in degrees.
    #[arg(long, default_value_t = 170.0)]
    mpja_max: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output projection: PH, EF, DS, CC, EC, H (hybrid) or all.
    #[arg(long)]
    projection: Option<ProjectionSetting>,
    /// Hybrid threshold in degrees.
    #[arg(long)]
    alpha_t: Option<f64>,
    /// Extra hybrid thresholds to report, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha_sweep: Option<Vec<f64>>,
    #[arg(long)]
    crop_size: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of synthetic records.
    #[arg(short = 'n', long)]
    count: Option<usize>,
    #[arg(long)]
    mpja_min: Option<f64>,
    #[arg(long)]
    mpja_max: Option<f64>,
    /// Oracle keypoint noise in pixels.
    #[arg(long)]
    sigma_2d: Option<f64>,
    /// Oracle relative-pose noise in mm.
    #[arg(long)]
    sigma_3d: Option<f64>,
    /// Scene JSON to use instead of generating one.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory for report.json, curves.csv and records.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_bbox(s: &str) -> std::result::Result<BoundingBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [x, y, w, h] = v[..] else {
        return Err(format!("expected x,y,w,h, got {} values", v.len()));
    };
    BoundingBox::from_xywh(x, y, w, h).map_err(|e| e.to_string())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_image(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h) = (img.width(), img.height());
    let (channels, data) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (2, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        other => (4, other.to_rgba8().into_raw()),
    };
    Ok(ImageBuffer::new(w, h, channels, data)?)
}

fn save_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let color = match img.channels() {
        1 => ExtendedColorType::L8,
        2 => ExtendedColorType::La8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    image::save_buffer(path, img.data(), img.width(), img.height(), color)
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct CropSidecar {
    output_camera: CameraModel,
    /// Output-from-input rotation, row-major.
    rotation: Rotation,
}

fn reproject(a: ReprojectArgs) -> Result<()> {
    let cam = CameraFile::load(&a.camera)?.camera;
    let src = load_image(&a.input)?;
    let k = cam.intrinsics();
    if (src.width(), src.height()) != (k.width, k.height) {
        log::warn!("image is {}x{} but the camera expects {}x{}", src.width(), src.height(), k.width, k.height);
    }
    let crop = make_crop(&src, &cam, &a.bbox, output_projection(a.out_kind, &cam), a.out_size)?;
    save_image(&a.output, &crop.image)?;
    let side = CropSidecar { output_camera: crop.output_camera, rotation: crop.rotation };
    match a.sidecar {
        Some(p) => write_json(&p, &side)?,
        None => emit(&(serde_json::to_string_pretty(&side)? + "\n"))?,
    }
    Ok(())
}

#[derive(Deserialize)]
struct BboxRecord {
    id: String,
    bbox: BoundingBox,
}

fn angles(a: AnglesArgs) -> Result<()> {
    if !(0.0..=180.0).contains(&a.alpha_t) {
        bail!("alpha_t {} outside [0, 180]", a.alpha_t);
    }
    let cam = CameraFile::load(&a.camera)?;
    let poses: Vec<GtRecord> = read_jsonl(&a.poses)?;
    let boxes: std::collections::HashMap<String, BoundingBox> = match &a.bboxes {
        Some(p) => read_jsonl::<BboxRecord>(p)?.into_iter().map(|b| (b.id, b.bbox)).collect(),
        None => Default::default(),
    };
    let mut csv = String::from("id,MPJA_deg,MBBA_deg,CoMD_mm,H_choice\n");
    let mut failed = 0;
    for rec in &poses {
        let row = (|| -> Result<String> {
            let pose = Pose3D::from_arrays(&rec.pose, Frame::World)?.to_camera(&cam.extrinsics);
            let m = mpja(&pose)?;
            let b = boxes.get(&rec.id).map(|b| mbba(b, &cam.camera)).transpose()?;
            if b.is_some_and(|b| b.partial()) {
                log::warn!("record '{}': MBBA from a partial boundary", rec.id);
            }
            // MBBA when a box is given, else MPJA
            let choice = select_projection(b.map_or(m, |b| b.angle), a.alpha_t);
            let mbba_col = b.map(|b| format!("{}", b.angle.value())).unwrap_or_default();
            Ok(format!("{},{},{},{},{}", rec.id, m.value(), mbba_col, comd(&pose)?, choice.kind))
        })();
        match row {
            Ok(line) => {
                csv.push_str(&line);
                csv.push('\n');
            }
            Err(e) => {
                log::warn!("record '{}': {e:#}", rec.id);
                failed += 1;
            }
        }
    }
    emit(&csv)?;
    Ok(check_skips(failed, poses.len())?)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let report = evaluate_run(&a.gt, &a.pred, a.camera.as_deref(), &a.alpha_t, a.root)?;
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => emit(&(serde_json::to_string_pretty(&report)? + "\n"))?,
    }
    if let Some(p) = &a.curves {
        std::fs::write(p, report.curves_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn triangulate(a: TriangulateArgs) -> Result<()> {
    if !(a.lambda_sym >= 0.0 && a.lambda_sym.is_finite()) {
        bail!("lambda-sym must be a nonnegative number");
    }
    let rig: Rig = read_json(&a.rig)?;
    let topology = match &a.topology {
        Some(p) => read_json(p)?,
        None => SkeletonTopology::default(),
    };
    let records: Vec<DetectionRecord> = read_jsonl(&a.detections)?;
    let mut out = Vec::with_capacity(records.len());
    let mut failed = 0;
    for (rec, res) in records.iter().zip(rig.triangulate_all(&records, &topology, a.lambda_sym)) {
        match res {
            Ok(t) => {
                if !t.converged {
                    log::warn!("record '{}' did not converge", t.id);
                }
                out.push(t);
            }
            Err(e) => {
                log::warn!("record '{}': {e}", rec.id);
                failed += 1;
            }
        }
    }
    write_jsonl(&a.out, &out)?;
    log::info!("triangulated {} of {} records", out.len(), records.len());
    Ok(check_skips(failed, records.len())?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let scene = generate_scene(a.seed, a.count, (a.mpja_min, a.mpja_max))?;
    write_scene(&scene, &a.out)?;
    log::info!("wrote {} skeletons to {}", scene.skeletons.len(), a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg: RunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = a.projection {
        cfg.projection = v;
    }
    if let Some(v) = a.alpha_t {
        cfg.alpha_t = v;
    }
    if let Some(v) = a.alpha_sweep {
        cfg.alpha_sweep = v;
    }
    if let Some(v) = a.crop_size {
        cfg.crop_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.count {
        cfg.n_records = v;
    }
    if let Some(v) = a.mpja_min {
        cfg.mpja_range.0 = v;
    }
    if let Some(v) = a.mpja_max {
        cfg.mpja_range.1 = v;
    }
    let OracleNoise { sigma_2d_px, sigma_3d_mm } = cfg.noise;
    cfg.noise =
        OracleNoise { sigma_2d_px: a.sigma_2d.unwrap_or(sigma_2d_px), sigma_3d_mm: a.sigma_3d.unwrap_or(sigma_3d_mm) };
    if a.scene.is_some() {
        cfg.scene = a.scene;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    let out = run_pipeline(&cfg)?;
    if cfg.output_dir.is_none() {
        emit(&(serde_json::to_string_pretty(&out.report)? + "\n"))?;
    }
    Ok(check_skips(out.report.skipped, out.report.total)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = (|| {
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(anyhow!("thread count must be positive"));
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        match cli.command {
            Command::Reproject(a) => reproject(a),
            Command::Angles(a) => angles(a),
            Command::Evaluate(a) => evaluate(a),
            Command::Triangulate(a) => triangulate(a),
            Command::Synth(a) => synth(a),
            Command::Run(a) => run(a),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
