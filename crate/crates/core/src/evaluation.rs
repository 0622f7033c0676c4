//! MPJPE / PCK metrics, their absolute variants, MPJA-binned curves and
//! hybrid-projection reports.
//!
//! Summaries pool joints: every joint of every record in a group counts
//! once, so a summary is the per-joint mean over the group.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, ModelKind};
use crate::crop::BoundingBox;
use crate::error::{Error, Result};
use crate::geometry::Extrinsics;
use crate::io::{read_jsonl, CameraFile};
use crate::pose::Pose3D;
use crate::spatial::{self, AngleDeg};

pub const PCK_THRESHOLD_MM: f64 = 150.0;
pub const DEFAULT_BIN_WIDTH_DEG: f64 = 10.0;
/// More than this fraction of skipped prediction records fails a run.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

/// Subtracts the root joint from every joint.
pub fn relative_align(pose: &Pose3D, root_index: usize) -> Result<Pose3D> {
    let root = *pose.joints.get(root_index).ok_or_else(|| {
        Error::InvalidInput(format!("root index {root_index} out of range for {} joints", pose.len()))
    })?;
    Ok(pose.translated(&-root))
}

/// Euclidean error per joint, after root alignment unless `absolute`.
pub fn joint_errors(gt: &Pose3D, pred: &Pose3D, absolute: bool, root_index: usize) -> Result<Vec<f64>> {
    if gt.len() != pred.len() {
        return Err(Error::JointCountMismatch(gt.len(), pred.len()));
    }
    if absolute {
        return Ok(gt.joints.iter().zip(&pred.joints).map(|(a, b)| (a - b).norm()).collect());
    }
    let (g, p) = (relative_align(gt, root_index)?, relative_align(pred, root_index)?);
    Ok(g.joints.iter().zip(&p.joints).map(|(a, b)| (a - b).norm()).collect())
}

/// Mean per-joint position error in mm.
pub fn mpjpe(gt: &Pose3D, pred: &Pose3D, absolute: bool, root_index: usize) -> Result<f64> {
    let e = joint_errors(gt, pred, absolute, root_index)?;
    if e.is_empty() {
        return Err(Error::InvalidInput("MPJPE of an empty pose".into()));
    }
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Percentage of joints with error strictly below `threshold_mm`.
pub fn pck(gt: &Pose3D, pred: &Pose3D, threshold_mm: f64, absolute: bool, root_index: usize) -> Result<f64> {
    let e = joint_errors(gt, pred, absolute, root_index)?;
    if e.is_empty() {
        return Err(Error::InvalidInput("PCK of an empty pose".into()));
    }
    Ok(100.0 * e.iter().filter(|&&v| v < threshold_mm).count() as f64 / e.len() as f64)
}

/// One evaluated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub id: String,
    pub gt_pose: Pose3D,
    pub pred_pose: Pose3D,
    pub mpja: AngleDeg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbba: Option<AngleDeg>,
    pub projection_used: ModelKind,
}

/// Pooled metrics over a group of records. Metrics are NaN (`null` in
/// JSON) for an empty group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mpjpe_mm: f64,
    pub a_mpjpe_mm: f64,
    pub pck150_pct: f64,
    pub a_pck150_pct: f64,
    pub count: usize,
}

/// Associative accumulator behind [`MetricSummary`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricAccumulator {
    err_sum: f64,
    abs_err_sum: f64,
    hits: usize,
    abs_hits: usize,
    joints: usize,
    records: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, rec: &EvaluationRecord, root_index: usize) -> Result<()> {
        let rel = joint_errors(&rec.gt_pose, &rec.pred_pose, false, root_index)?;
        let abs = joint_errors(&rec.gt_pose, &rec.pred_pose, true, root_index)?;
        self.err_sum += rel.iter().sum::<f64>();
        self.abs_err_sum += abs.iter().sum::<f64>();
        self.hits += rel.iter().filter(|&&e| e < PCK_THRESHOLD_MM).count();
        self.abs_hits += abs.iter().filter(|&&e| e < PCK_THRESHOLD_MM).count();
        self.joints += rel.len();
        self.records += 1;
        Ok(())
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.err_sum += other.err_sum;
        self.abs_err_sum += other.abs_err_sum;
        self.hits += other.hits;
        self.abs_hits += other.abs_hits;
        self.joints += other.joints;
        self.records += other.records;
        self
    }

    pub fn summary(&self) -> MetricSummary {
        let n = self.joints as f64;
        let (m, am, p, ap) = if self.joints == 0 {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        } else {
            (self.err_sum / n, self.abs_err_sum / n, 100.0 * self.hits as f64 / n, 100.0 * self.abs_hits as f64 / n)
        };
        MetricSummary { mpjpe_mm: m, a_mpjpe_mm: am, pck150_pct: p, a_pck150_pct: ap, count: self.records }
    }
}

/// Records in id order, so sums do not depend on input order.
fn by_id(records: &[EvaluationRecord]) -> Vec<&EvaluationRecord> {
    let mut v: Vec<&EvaluationRecord> = records.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

/// Pooled summary of `records`. Per-record errors are computed in parallel
/// and merged in id order.
pub fn summarize(records: &[EvaluationRecord], root_index: usize) -> Result<MetricSummary> {
    let parts = by_id(records)
        .into_par_iter()
        .map(|r| {
            let mut a = MetricAccumulator::default();
            a.add(r, root_index)?;
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().fold(MetricAccumulator::default(), MetricAccumulator::merge).summary())
}

/// Metrics of the records whose MPJA falls in `[bin_lo_deg, bin_lo_deg + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin_lo_deg: f64,
    #[serde(flatten)]
    pub summary: MetricSummary,
}

fn bin_count(bin_width: f64) -> usize {
    (180.0 / bin_width).ceil() as usize
}

/// Index of the MPJA bin; 180 deg falls into the last bin.
pub fn bin_index(mpja: AngleDeg, bin_width: f64) -> usize {
    ((mpja.value() / bin_width).floor() as usize).min(bin_count(bin_width) - 1)
}

/// Partitions records into MPJA bins covering `[0, 180]`; empty bins are
/// kept with count 0.
pub fn bin_by_mpja(records: &[EvaluationRecord], bin_width: f64, root_index: usize) -> Result<Vec<BinSummary>> {
    if !(bin_width > 0.0 && bin_width <= 180.0) {
        return Err(Error::InvalidInput(format!("bin width {bin_width} outside (0, 180]")));
    }
    let n = bin_count(bin_width);
    let mut acc = vec![MetricAccumulator::default(); n];
    for r in by_id(records) {
        acc[bin_index(r.mpja, bin_width)].add(r, root_index)?;
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, a)| BinSummary { bin_lo_deg: i as f64 * bin_width, summary: a.summary() })
        .collect())
}

/// Which angle drives the hybrid choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridSource {
    Mpja,
    Mbba,
}

impl HybridSource {
    fn tag(self) -> &'static str {
        match self {
            HybridSource::Mpja => "MPJA",
            HybridSource::Mbba => "MBBA",
        }
    }
}

pub fn hybrid_label(source: HybridSource, alpha_t: f64) -> String {
    format!("H-{}@{}", source.tag(), alpha_t)
}

/// Builds the hybrid run: per id, the PH record when the driving angle is
/// below `alpha_t`, the DS record otherwise. Ids whose chosen record is
/// missing, or lacking MBBA when it drives the choice, are left out.
pub fn compose_hybrid(
    ph: &[EvaluationRecord],
    ds: &[EvaluationRecord],
    alpha_t: f64,
    source: HybridSource,
) -> Vec<EvaluationRecord> {
    let mut pairs: BTreeMap<&str, (Option<&EvaluationRecord>, Option<&EvaluationRecord>)> = BTreeMap::new();
    for r in ph {
        pairs.entry(r.id.as_str()).or_default().0 = Some(r);
    }
    for r in ds {
        pairs.entry(r.id.as_str()).or_default().1 = Some(r);
    }
    pairs
        .into_values()
        .filter_map(|(p, d)| {
            let any = p.or(d)?;
            let angle = match source {
                HybridSource::Mpja => any.mpja,
                HybridSource::Mbba => p.and_then(|r| r.mbba).or(d.and_then(|r| r.mbba))?,
            };
            let chosen = match spatial::select_projection(angle, alpha_t).kind {
                ModelKind::PH => p,
                _ => d,
            };
            chosen.cloned()
        })
        .collect()
}

/// How often MPJA and MBBA pick the same projection at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub alpha_t: f64,
    pub agree: usize,
    pub total: usize,
    pub rate: f64,
}

pub fn choice_agreement(records: &[EvaluationRecord], alpha_t: f64) -> Agreement {
    let (mut agree, mut total) = (0, 0);
    for r in records {
        if let Some(m) = r.mbba {
            total += 1;
            let a = spatial::select_projection(r.mpja, alpha_t).kind;
            let b = spatial::select_projection(m, alpha_t).kind;
            agree += usize::from(a == b);
        }
    }
    let rate = if total == 0 { f64::NAN } else { agree as f64 / total as f64 };
    Agreement { alpha_t, agree, total, rate }
}

/// Everything a run produces: overall summaries and MPJA curves per
/// projection label, and MPJA-vs-MBBA agreement per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summaries: BTreeMap<String, MetricSummary>,
    pub curves: BTreeMap<String, Vec<BinSummary>>,
    pub agreement: Vec<Agreement>,
    pub skipped: usize,
    pub total: usize,
    pub root_index: usize,
    pub bin_width_deg: f64,
}

impl Report {
    /// Curves as CSV rows: `projection, bin_lo_deg, count, mpjpe_mm,
    /// a_mpjpe_mm, pck150, a_pck150`. Empty-bin metrics are left blank.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("projection,bin_lo_deg,count,mpjpe_mm,a_mpjpe_mm,pck150,a_pck150\n");
        let fmt = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
        for (label, bins) in &self.curves {
            for b in bins {
                let s = &b.summary;
                out.push_str(&format!(
                    "{label},{},{},{},{},{},{}\n",
                    b.bin_lo_deg,
                    s.count,
                    fmt(s.mpjpe_mm),
                    fmt(s.a_mpjpe_mm),
                    fmt(s.pck150_pct),
                    fmt(s.a_pck150_pct)
                ));
            }
        }
        out
    }
}

/// Summaries and curves for every fixed-projection run in `by_kind`, plus
/// MPJA- and MBBA-driven hybrids for each threshold when PH and DS runs are
/// both present.
pub fn build_report(
    by_kind: &BTreeMap<ModelKind, Vec<EvaluationRecord>>,
    alpha_ts: &[f64],
    root_index: usize,
    bin_width: f64,
) -> Result<Report> {
    let mut groups: Vec<(String, Vec<EvaluationRecord>)> =
        by_kind.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    let mut agreement = Vec::new();
    if let (Some(ph), Some(ds)) = (by_kind.get(&ModelKind::PH), by_kind.get(&ModelKind::DS)) {
        for &t in alpha_ts {
            if !(0.0..=180.0).contains(&t) {
                return Err(Error::InvalidInput(format!("alpha_t {t} outside [0, 180]")));
            }
            for source in [HybridSource::Mpja, HybridSource::Mbba] {
                groups.push((hybrid_label(source, t), compose_hybrid(ph, ds, t, source)));
            }
            agreement.push(choice_agreement(ph, t));
        }
    }
    let mut summaries = BTreeMap::new();
    let mut curves = BTreeMap::new();
    for (label, recs) in groups {
        summaries.insert(label.clone(), summarize(&recs, root_index)?);
        curves.insert(label, bin_by_mpja(&recs, bin_width, root_index)?);
    }
    let total = by_kind.values().map(Vec::len).sum();
    Ok(Report { summaries, curves, agreement, skipped: 0, total, root_index, bin_width_deg: bin_width })
}

/// Ground-truth line: `{"id", "pose": [[x, y, z], ...]}` in world mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub id: String,
    pub pose: Vec<[f64; 3]>,
}

/// Prediction line as written by pose recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredRecord {
    pub id: String,
    pub projection: ModelKind,
    pub abs_pose_world: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbba_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
}

/// Joins ground truth and predictions into evaluation records.
///
/// Predictions whose id has no ground truth, or whose joint count
/// disagrees, are skipped and counted. MPJA is taken in the camera frame
/// given by `extrinsics`; MBBA comes from `mbba_deg` or from `bbox` under
/// `camera`.
pub fn join_records(
    gt: &[GtRecord],
    preds: &[PredRecord],
    camera: Option<&CameraModel>,
    extrinsics: &Extrinsics,
) -> Result<(BTreeMap<ModelKind, Vec<EvaluationRecord>>, usize)> {
    let mut gt_by_id: HashMap<&str, (Pose3D, AngleDeg)> = HashMap::with_capacity(gt.len());
    for g in gt {
        let pose = Pose3D::from_arrays(&g.pose, crate::pose::Frame::World)?;
        let angle = spatial::mpja(&pose.to_camera(extrinsics))?;
        gt_by_id.insert(g.id.as_str(), (pose, angle));
    }
    let mut skipped = 0;
    let mut out: BTreeMap<ModelKind, Vec<EvaluationRecord>> = BTreeMap::new();
    for p in preds {
        let Some((gt_pose, mpja)) = gt_by_id.get(p.id.as_str()) else {
            log::warn!("prediction '{}' has no ground truth; skipped", p.id);
            skipped += 1;
            continue;
        };
        if p.abs_pose_world.len() != gt_pose.len() {
            log::warn!("prediction '{}' joint count mismatch; skipped", p.id);
            skipped += 1;
            continue;
        }
        let mbba = match (p.mbba_deg, &p.bbox, camera) {
            (Some(m), _, _) => Some(AngleDeg::new(m)?),
            (None, Some(b), Some(cam)) => Some(spatial::mbba(b, cam)?.angle),
            _ => None,
        };
        out.entry(p.projection).or_default().push(EvaluationRecord {
            id: p.id.clone(),
            gt_pose: gt_pose.clone(),
            pred_pose: Pose3D::from_arrays(&p.abs_pose_world, crate::pose::Frame::World)?,
            mpja: *mpja,
            mbba,
            projection_used: p.projection,
        });
    }
    Ok((out, skipped))
}

/// Fails when more than [`MAX_SKIP_FRACTION`] of `total` records were skipped.
pub fn check_skips(skipped: usize, total: usize) -> Result<()> {
    if total > 0 && skipped as f64 > MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::TooManySkipped { skipped, total });
    }
    Ok(())
}

/// Evaluates prediction and ground-truth JSONL files against each other.
pub fn evaluate_run(
    gt_file: &Path,
    pred_file: &Path,
    cam_file: Option<&Path>,
    alpha_ts: &[f64],
    root_index: usize,
) -> Result<Report> {
    let gt: Vec<GtRecord> = read_jsonl(gt_file)?;
    let preds: Vec<PredRecord> = read_jsonl(pred_file)?;
    let cam = cam_file.map(CameraFile::load).transpose()?;
    let (camera, ext) = match &cam {
        Some(c) => (Some(&c.camera), c.extrinsics),
        None => (None, Extrinsics::identity()),
    };
    let (by_kind, skipped) = join_records(&gt, &preds, camera, &ext)?;
    if skipped > 0 {
        log::warn!("skipped {skipped} of {} prediction records", preds.len());
    }
    check_skips(skipped, preds.len())?;
    let mut report = build_report(&by_kind, alpha_ts, root_index, DEFAULT_BIN_WIDTH_DEG)?;
    report.skipped = skipped;
    report.total = preds.len();
    Ok(report)
}
