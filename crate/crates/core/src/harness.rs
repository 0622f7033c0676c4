//! Synthetic scenes, a geometric oracle in place of the pose network, and
//! the end-to-end run: bbox, projection choice, virtual camera, oracle,
//! translation recovery and metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Intrinsics, ModelKind, Pixel};
use crate::crop::{crop_geometry, output_projection, BoundingBox, CropGeometry, DEFAULT_CROP_SIZE};
use crate::error::{Error, Result};
use crate::evaluation::{
    build_report, hybrid_label, EvaluationRecord, GtRecord, HybridSource, Report, DEFAULT_BIN_WIDTH_DEG,
};
use crate::geometry::{Extrinsics, Rotation};
use crate::io::{write_json, write_jsonl, CameraFile};
use crate::pose::Pose3D;
use crate::recovery::{absolute_pose, recover_translation, Prediction};
use crate::skeleton::{template_pose, SkeletonTopology, PELVIS};
use crate::spatial::{self, AngleDeg};
use crate::triangulation::{look_at_extrinsics, DetectionRecord, Rig, RigCamera, ViewDetection};

pub const MAX_ATTEMPTS: usize = 100_000;
/// Joints closer than this to the camera center are rejected.
pub const MIN_JOINT_DISTANCE_MM: f64 = 50.0;
pub const BBOX_DILATION: f64 = 1.1;

const MAX_POLAR_RAD: f64 = 70.0 * PI / 180.0;
const MAX_TILT_RAD: f64 = 0.15;

/// The primary fisheye camera: DS, 1280x1024, about 226 deg horizontal FOV.
pub fn primary_camera() -> CameraModel {
    CameraModel::double_sphere(Intrinsics::new(300.0, 300.0, 640.0, 512.0, 1280, 1024).unwrap(), 0.2, 0.55).unwrap()
}

/// Primary camera at the world origin plus three surrounding views.
pub fn default_rig() -> Rig {
    let ph = CameraModel::pinhole(Intrinsics::new(900.0, 900.0, 640.0, 512.0, 1280, 1024).unwrap()).unwrap();
    let target = Vector3::new(0.0, 0.0, 2500.0);
    let side = |name: &str, model: CameraModel, c: Vector3<f64>| RigCamera {
        name: Some(name.into()),
        model,
        extrinsics: look_at_extrinsics(c, target).unwrap(),
    };
    Rig {
        cameras: vec![
            RigCamera { name: Some("primary".into()), model: primary_camera(), extrinsics: Extrinsics::identity() },
            side("left", ph, Vector3::new(-4000.0, -1200.0, 2500.0)),
            side("right", primary_camera(), Vector3::new(4000.0, -1000.0, 2800.0)),
            side("back", ph, Vector3::new(500.0, -1500.0, 6500.0)),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub rig: Rig,
    /// World-frame ground truth, mm.
    pub skeletons: Vec<Pose3D>,
    pub seed: u64,
    pub mpja_range: (f64, f64),
}

impl SyntheticScene {
    pub fn primary(&self) -> &RigCamera {
        &self.rig.cameras[0]
    }

    pub fn record_id(index: usize) -> String {
        format!("rec-{index:06}")
    }

    pub fn gt_records(&self) -> Vec<GtRecord> {
        self.skeletons
            .iter()
            .enumerate()
            .map(|(i, p)| GtRecord { id: Self::record_id(i), pose: p.joints.iter().map(|j| [j.x, j.y, j.z]).collect() })
            .collect()
    }

    /// Noiseless detections in every rig camera; joints a camera cannot see
    /// get confidence 0.
    pub fn detections(&self) -> Vec<DetectionRecord> {
        self.skeletons
            .iter()
            .enumerate()
            .map(|(i, pose)| DetectionRecord {
                id: Self::record_id(i),
                views: self
                    .rig
                    .cameras
                    .iter()
                    .enumerate()
                    .map(|(c, cam)| {
                        let (kp2d, conf) = pose
                            .joints
                            .iter()
                            .map(|j| match cam.model.project(&cam.extrinsics.world_to_camera(j)) {
                                Ok(p) if p.valid() => ([p.pixel.u, p.pixel.v], 1.0),
                                _ => ([0.0, 0.0], 0.0),
                            })
                            .unzip();
                        ViewDetection { camera: c, kp2d, conf }
                    })
                    .collect(),
            })
            .collect()
    }
}

fn mpja_at(body: &[Vector3<f64>], dir: &Vector3<f64>, s: f64) -> Option<f64> {
    let pose = Pose3D::camera(body.iter().map(|j| j + s * dir).collect());
    spatial::mpja(&pose).ok().map(AngleDeg::value)
}

/// Distance along `dir` at which the MPJA of `body` is closest to `target`.
fn distance_for_angle(body: &[Vector3<f64>], dir: &Vector3<f64>, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (1.0, 1e6);
    if mpja_at(body, dir, lo)? < target || mpja_at(body, dir, hi)? > target {
        return None;
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if mpja_at(body, dir, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo * hi).sqrt())
}

fn visible(cam: &CameraModel, joints: &[Vector3<f64>]) -> bool {
    joints.iter().all(|j| j.norm() > MIN_JOINT_DISTANCE_MM && cam.project(j).map(|p| p.valid()).unwrap_or(false))
}

/// Rejection-samples `n_skeletons` placements of the template whose MPJA
/// under the primary camera lies in `mpja_range` (degrees, inclusive).
pub fn generate_scene(seed: u64, n_skeletons: usize, mpja_range: (f64, f64)) -> Result<SyntheticScene> {
    let (lo, hi) = mpja_range;
    if !(0.0 <= lo && lo <= hi && hi <= 180.0) {
        return Err(Error::InvalidInput(format!("MPJA range [{lo}, {hi}] not within [0, 180]")));
    }
    let rig = default_rig();
    let cam = rig.cameras[0].model;
    let ext = rig.cameras[0].extrinsics;
    let template = template_pose();
    let centroid = template.centroid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skeletons = Vec::with_capacity(n_skeletons);
    for _ in 0..n_skeletons {
        let mut attempts = 0;
        let pose = loop {
            if attempts == MAX_ATTEMPTS {
                return Err(Error::UnreachableRange { lo, hi, attempts });
            }
            attempts += 1;
            let yaw = Rotation::from_axis_angle(&Vector3::y(), rng.random_range(-PI..PI));
            let tilt = Rotation::from_axis_angle(&Vector3::x(), rng.random_range(-MAX_TILT_RAD..MAX_TILT_RAD));
            let r = tilt.compose(&yaw);
            let body: Vec<_> = template.joints.iter().map(|j| r.apply(&(j - centroid))).collect();
            let polar = rng.random_range(0.0..MAX_POLAR_RAD);
            let azimuth = rng.random_range(-PI..PI);
            let dir = Vector3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos());
            let target = rng.random_range(lo..=hi);
            let Some(s) = distance_for_angle(&body, &dir, target) else { continue };
            let joints: Vec<_> = body.iter().map(|j| j + s * dir).collect();
            if !visible(&cam, &joints) {
                continue;
            }
            let Some(angle) = mpja_at(&joints, &Vector3::zeros(), 0.0) else { continue };
            if (lo..=hi).contains(&angle) {
                break Pose3D::camera(joints).to_world(&ext);
            }
        };
        skeletons.push(pose);
    }
    Ok(SyntheticScene { rig, skeletons, seed, mpja_range })
}

/// Tight hull of the projected joints, dilated by 10% about its center.
pub fn synthetic_bbox(cam: &CameraModel, pose_cam: &Pose3D) -> Result<BoundingBox> {
    let pixels: Vec<Pixel> =
        pose_cam.joints.iter().filter_map(|j| cam.project(j).ok().filter(|p| p.in_domain).map(|p| p.pixel)).collect();
    BoundingBox::from_points(&pixels)?.scaled(BBOX_DILATION)
}

/// Gaussian noise levels of the oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleNoise {
    pub sigma_2d_px: f64,
    pub sigma_3d_mm: f64,
}

/// Geometric stand-in for the pose network on a virtual crop.
///
/// Keypoints are the exact projections of `R·X` into the output camera and
/// the relative pose is `R·X` minus its centroid, each with optional noise.
/// Joints outside the output camera's domain get weight 0.
pub fn oracle_predict<R: Rng>(
    pose_cam: &Pose3D,
    geom: &CropGeometry,
    noise: &OracleNoise,
    rng: &mut R,
) -> Result<Prediction> {
    let rotated = pose_cam.rotated(&geom.rotation);
    let centroid = rotated.centroid();
    let n2 = Normal::new(0.0, noise.sigma_2d_px).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let n3 = Normal::new(0.0, noise.sigma_3d_mm).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut kps = Vec::with_capacity(rotated.len());
    let mut weights = Vec::with_capacity(rotated.len());
    for j in &rotated.joints {
        match geom.output_camera.project(j) {
            Ok(p) if p.in_domain => {
                let mut px = p.pixel;
                if noise.sigma_2d_px > 0.0 {
                    px.u += n2.sample(rng);
                    px.v += n2.sample(rng);
                }
                kps.push(px);
                weights.push(1.0);
            }
            _ => {
                kps.push(Pixel::new(f64::NAN, f64::NAN));
                weights.push(0.0);
            }
        }
    }
    let rel = rotated
        .joints
        .iter()
        .map(|j| {
            let mut r = j - centroid;
            if noise.sigma_3d_mm > 0.0 {
                r += Vector3::new(n3.sample(rng), n3.sample(rng), n3.sample(rng));
            }
            r
        })
        .collect();
    Prediction::with_weights(Pose3D::camera(rel), kps, weights)
}

/// A fixed projection, the MBBA-driven hybrid, or every model plus hybrids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionSetting {
    Fixed(ModelKind),
    Hybrid,
    All,
}

impl ProjectionSetting {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            ProjectionSetting::Fixed(k) => vec![k],
            ProjectionSetting::Hybrid => vec![ModelKind::PH, ModelKind::DS],
            ProjectionSetting::All => ModelKind::ALL.to_vec(),
        }
    }
}

impl fmt::Display for ProjectionSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionSetting::Fixed(k) => write!(f, "{k}"),
            ProjectionSetting::Hybrid => f.write_str("H"),
            ProjectionSetting::All => f.write_str("all"),
        }
    }
}

impl FromStr for ProjectionSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" | "h" => Ok(ProjectionSetting::Hybrid),
            "all" | "ALL" => Ok(ProjectionSetting::All),
            k => Ok(ProjectionSetting::Fixed(k.parse()?)),
        }
    }
}

impl Serialize for ProjectionSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProjectionSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub projection: ProjectionSetting,
    /// Threshold of the hybrid choice logged per record, degrees.
    pub alpha_t: f64,
    /// Extra thresholds reported as hybrid summaries.
    pub alpha_sweep: Vec<f64>,
    pub crop_size: u32,
    pub seed: u64,
    pub n_records: usize,
    pub mpja_range: (f64, f64),
    pub noise: OracleNoise,
    /// Scene JSON to evaluate instead of generating one.
    pub scene: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            projection: ProjectionSetting::Hybrid,
            alpha_t: 110.0,
            alpha_sweep: vec![0.0, 110.0, 135.0, 180.0],
            crop_size: DEFAULT_CROP_SIZE,
            seed: 1,
            n_records: 200,
            mpja_range: (10.0, 170.0),
            noise: OracleNoise::default(),
            scene: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for &t in std::iter::once(&self.alpha_t).chain(&self.alpha_sweep) {
            if !(0.0..=180.0).contains(&t) {
                return Err(Error::InvalidInput(format!("alpha_t {t} outside [0, 180]")));
            }
        }
        if self.crop_size == 0 {
            return Err(Error::InvalidInput("crop size must be positive".into()));
        }
        if !(self.noise.sigma_2d_px >= 0.0 && self.noise.sigma_3d_mm >= 0.0) {
            return Err(Error::InvalidInput("noise levels must be nonnegative".into()));
        }
        if let Some(p) = &self.scene {
            if !p.exists() {
                return Err(Error::InvalidInput(format!("scene file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn thresholds(&self) -> Vec<f64> {
        let mut t = vec![self.alpha_t];
        for &a in &self.alpha_sweep {
            if !t.contains(&a) {
                t.push(a);
            }
        }
        t
    }
}

/// One emitted result line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub camera: String,
    /// Model name, or the hybrid label.
    pub projection: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<ModelKind>,
    pub mpja_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbba_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_pose_world: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: Report,
    pub records: Vec<RunRecord>,
}

impl RunOutput {
    /// Writes `report.json`, `curves.csv` and `records.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), &self.report)?;
        std::fs::write(dir.join("curves.csv"), self.report.curves_csv())?;
        write_jsonl(&dir.join("records.jsonl"), &self.records)
    }
}

/// Deterministic stream per (record, projection).
fn record_rng(seed: u64, index: usize, kind: ModelKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = ModelKind::ALL.iter().position(|&x| x == kind).unwrap() as u64;
    rng.set_stream(index as u64 * ModelKind::ALL.len() as u64 + k);
    rng
}

struct Staged {
    pose_cam: Pose3D,
    mpja: AngleDeg,
    bbox: BoundingBox,
    mbba: f64,
}

fn stage(cam: &RigCamera, pose_world: &Pose3D) -> Result<Staged> {
    let pose_cam = pose_world.to_camera(&cam.extrinsics);
    let mpja = spatial::mpja(&pose_cam)?;
    let bbox = synthetic_bbox(&cam.model, &pose_cam)?;
    let mbba = spatial::mbba(&bbox, &cam.model)?.angle.value();
    Ok(Staged { pose_cam, mpja, bbox, mbba })
}

/// Crop, oracle and recovery for one record under one output projection.
fn predict_record(
    cam: &RigCamera,
    st: &Staged,
    kind: ModelKind,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Pose3D> {
    let geom = crop_geometry(&cam.model, &st.bbox, output_projection(kind, &cam.model), cfg.crop_size)?;
    let pred = oracle_predict(&st.pose_cam, &geom, &cfg.noise, rng)?;
    let t = recover_translation(&pred, &geom.output_camera)?;
    Ok(absolute_pose(&pred.rel_pose, &t, &geom.rotation, &cam.extrinsics))
}

fn pose_arrays(p: &Pose3D) -> Vec<[f64; 3]> {
    p.joints.iter().map(|j| [j.x, j.y, j.z]).collect()
}

/// Runs the synthetic pipeline for every record and projection.
///
/// Per-record failures are logged and counted in `report.skipped` against
/// `report.total`: every (record, model) pair for fixed settings, and the
/// record under its chosen model for the hybrid.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let scene = match &cfg.scene {
        Some(p) => crate::io::read_json::<SyntheticScene>(p)?,
        None => generate_scene(cfg.seed, cfg.n_records, cfg.mpja_range)?,
    };
    let cam = scene.primary().clone();
    let cam_name = cam.name.clone().unwrap_or_else(|| "0".into());
    let kinds = cfg.projection.kinds();

    let per_record: Vec<(String, Result<Staged>, Vec<Result<Pose3D>>)> = scene
        .skeletons
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let id = SyntheticScene::record_id(i);
            let staged = stage(&cam, pose);
            let preds = match &staged {
                Ok(st) => {
                    kinds.iter().map(|&k| predict_record(&cam, st, k, cfg, &mut record_rng(cfg.seed, i, k))).collect()
                }
                Err(_) => Vec::new(),
            };
            (id, staged, preds)
        })
        .collect();

    let mut by_kind: BTreeMap<ModelKind, Vec<EvaluationRecord>> = kinds.iter().map(|&k| (k, Vec::new())).collect();
    let mut records = Vec::new();
    let mut failures = 0;
    let mut attempted = 0;
    let hybrid = cfg.projection == ProjectionSetting::Hybrid;
    for ((id, staged, preds), gt) in per_record.into_iter().zip(&scene.skeletons) {
        let st = match staged {
            Ok(st) => st,
            Err(e) => {
                log::warn!("{id}: {e}");
                failures += if hybrid { 1 } else { kinds.len() };
                attempted += if hybrid { 1 } else { kinds.len() };
                records.push(RunRecord {
                    id,
                    camera: cam_name.clone(),
                    projection: cfg.projection.to_string(),
                    alpha_t: None,
                    chosen: None,
                    mpja_deg: f64::NAN,
                    mbba_deg: None,
                    abs_pose_world: None,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        let mut results: BTreeMap<ModelKind, std::result::Result<Pose3D, String>> = BTreeMap::new();
        for (&k, pred) in kinds.iter().zip(preds) {
            let pred = pred.map_err(|e| e.to_string());
            if let Err(e) = &pred {
                log::debug!("{id} [{k}]: {e}");
            }
            records.push(RunRecord {
                id: id.clone(),
                camera: cam_name.clone(),
                projection: k.to_string(),
                alpha_t: None,
                chosen: None,
                mpja_deg: st.mpja.value(),
                mbba_deg: Some(st.mbba),
                abs_pose_world: pred.as_ref().ok().map(pose_arrays),
                error: pred.as_ref().err().cloned(),
            });
            if let Ok(p) = &pred {
                by_kind.get_mut(&k).unwrap().push(EvaluationRecord {
                    id: id.clone(),
                    gt_pose: gt.clone(),
                    pred_pose: p.clone(),
                    mpja: st.mpja,
                    mbba: Some(AngleDeg::new(st.mbba)?),
                    projection_used: k,
                });
            }
            if !hybrid {
                attempted += 1;
                if let Err(e) = &pred {
                    log::warn!("{id} [{k}]: {e}");
                    failures += 1;
                }
            }
            results.insert(k, pred);
        }
        if hybrid {
            let choice = spatial::select_projection(AngleDeg::new(st.mbba)?, cfg.alpha_t).kind;
            let chosen = &results[&choice];
            attempted += 1;
            if let Err(e) = chosen {
                log::warn!("{id} [H -> {choice}]: {e}");
                failures += 1;
            }
            records.push(RunRecord {
                id: id.clone(),
                camera: cam_name.clone(),
                projection: hybrid_label(HybridSource::Mbba, cfg.alpha_t),
                alpha_t: Some(cfg.alpha_t),
                chosen: Some(choice),
                mpja_deg: st.mpja.value(),
                mbba_deg: Some(st.mbba),
                abs_pose_world: chosen.as_ref().ok().map(pose_arrays),
                error: chosen.as_ref().err().cloned(),
            });
        }
    }

    let mut report = build_report(&by_kind, &cfg.thresholds(), PELVIS, DEFAULT_BIN_WIDTH_DEG)?;
    report.skipped = failures;
    report.total = attempted;
    if failures > 0 {
        log::warn!("{failures} of {attempted} record predictions failed");
    }
    let out = RunOutput { report, records };
    if let Some(dir) = &cfg.output_dir {
        out.write(dir)?;
    }
    Ok(out)
}

/// Writes a scene and its derived inputs: `scene.json`, `gt.jsonl`,
/// `detections.jsonl`, `rig.json`, `camera.json` and `topology.json`.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("scene.json"), scene)?;
    write_jsonl(&dir.join("gt.jsonl"), &scene.gt_records())?;
    write_jsonl(&dir.join("detections.jsonl"), &scene.detections())?;
    write_json(&dir.join("rig.json"), &scene.rig)?;
    let primary = scene.primary();
    write_json(&dir.join("camera.json"), &CameraFile { camera: primary.model, extrinsics: primary.extrinsics })?;
    write_json(&dir.join("topology.json"), &SkeletonTopology::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_deterministic_and_in_range() {
        let a = generate_scene(1, 5, (120.0, 150.0)).unwrap();
        let b = generate_scene(1, 5, (120.0, 150.0)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for p in &a.skeletons {
            let m = spatial::mpja(&p.to_camera(&a.primary().extrinsics)).unwrap().value();
            assert!((120.0..=150.0).contains(&m), "{m}");
        }
        assert!(generate_scene(1, 0, (10.0, 20.0)).unwrap().skeletons.is_empty());
        assert!(generate_scene(1, 1, (20.0, 10.0)).is_err());
    }

    #[test]
    fn unreachable_range_errors() {
        // a body cannot subtend exactly 0 deg
        assert!(matches!(generate_scene(3, 1, (0.0, 0.0)), Err(Error::UnreachableRange { .. })));
    }

    #[test]
    fn noiseless_oracle_round_trip() {
        let scene = generate_scene(7, 4, (20.0, 90.0)).unwrap();
        let cam = scene.primary();
        for pose in &scene.skeletons {
            let st = stage(cam, pose).unwrap();
            for kind in ModelKind::ALL {
                let cfg = RunConfig::default();
                let rec = predict_record(cam, &st, kind, &cfg, &mut record_rng(0, 0, kind)).unwrap();
                for (a, b) in rec.joints.iter().zip(&pose.joints) {
                    assert!((a - b).norm() < 1e-5, "{kind}: {}", (a - b).norm());
                }
            }
        }
    }

    #[test]
    fn behind_ph_output_gives_zero_weights() {
        let cam = primary_camera();
        let bbox = BoundingBox::new(600.0, 480.0, 680.0, 540.0).unwrap();
        let geom = crop_geometry(&cam, &bbox, output_projection(ModelKind::PH, &cam), 256).unwrap();
        let behind = Pose3D::camera(vec![
            Vector3::new(0.0, 0.0, -1000.0),
            Vector3::new(100.0, 0.0, -1000.0),
            Vector3::new(0.0, 100.0, -1200.0),
        ]);
        let pred = oracle_predict(&behind, &geom, &OracleNoise::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(pred.weights.iter().all(|&w| w == 0.0));
        assert!(matches!(
            recover_translation(&pred, &geom.output_camera),
            Err(Error::NotEnoughJoints { found: 0, .. })
        ));
    }

    #[test]
    fn projection_setting_parses() {
        assert_eq!("H".parse::<ProjectionSetting>().unwrap(), ProjectionSetting::Hybrid);
        assert_eq!("EC".parse::<ProjectionSetting>().unwrap(), ProjectionSetting::Fixed(ModelKind::EC));
        assert!("XY".parse::<ProjectionSetting>().is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"projection": "DS", "n_records": 3}"#).unwrap();
        assert_eq!(cfg.projection, ProjectionSetting::Fixed(ModelKind::DS));
        assert_eq!(cfg.alpha_t, 110.0);
    }
}
