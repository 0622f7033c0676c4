//! Multi-view triangulation with heterogeneous camera models.
//!
//! Each view contributes the residual `c · (project(cam, world_to_camera(X)) - kp)`
//! (confidence `c`), passed through a Huber loss on its squared norm. The
//! skeleton solve adds `λ_sym (|bone_l| - |bone_r|)²` per symmetric bone pair.
//! Both are minimized with Levenberg-Marquardt.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::error::{Error, Result};
use crate::geometry::{Extrinsics, Rotation};
use crate::pose::Pose3D;
use crate::skeleton::SkeletonTopology;

pub const HUBER_DELTA_PX: f64 = 2.0;
pub const MAX_ITERATIONS: usize = 50;
/// Iteration cap for the joint skeleton solve.
pub const SKELETON_MAX_ITERATIONS: usize = 200;
pub const STEP_TOL_MM: f64 = 1e-9;
/// Relative Newton decrement below which the solve counts as converged.
pub const COST_RTOL: f64 = 1e-14;

const MIN_VIEWS: usize = 2;
const PARALLEL_TOL: f64 = 1e-9;

/// One camera's 2D detections of a skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewObservation {
    pub camera: CameraModel,
    pub extrinsics: Extrinsics,
    pub keypoints2d: Vec<Pixel>,
    /// Per-joint confidence in `[0, 1]`; 0 marks a missing detection.
    pub confidence: Vec<f64>,
}

impl ViewObservation {
    pub fn new(
        camera: CameraModel,
        extrinsics: Extrinsics,
        keypoints2d: Vec<Pixel>,
        confidence: Vec<f64>,
    ) -> Result<Self> {
        if keypoints2d.len() != confidence.len() {
            return Err(Error::JointCountMismatch(keypoints2d.len(), confidence.len()));
        }
        if let Some(c) = confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidInput(format!("confidence {c} outside [0, 1]")));
        }
        Ok(Self { camera, extrinsics, keypoints2d, confidence })
    }

    fn joint(&self, j: usize) -> Option<SingleView<'_>> {
        let conf = self.confidence[j];
        let kp = self.keypoints2d[j];
        (conf > 0.0 && kp.is_finite()).then_some(SingleView {
            camera: &self.camera,
            extrinsics: &self.extrinsics,
            keypoint: kp,
            confidence: conf,
        })
    }
}

/// A single joint seen by one camera.
#[derive(Debug, Clone, Copy)]
pub struct SingleView<'a> {
    pub camera: &'a CameraModel,
    pub extrinsics: &'a Extrinsics,
    pub keypoint: Pixel,
    pub confidence: f64,
}

impl SingleView<'_> {
    fn ray(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let r = self.camera.unproject(&self.keypoint)?;
        Some((self.extrinsics.translation, self.extrinsics.rotation.apply(r.dir())))
    }

    /// Weighted residual and its Jacobian with respect to the world point.
    fn residual(&self, x: &Vector3<f64>) -> Option<(nalgebra::Vector2<f64>, Matrix2x3<f64>)> {
        let pc = self.extrinsics.world_to_camera(x);
        let (px, jac) = self.camera.project_with_jacobian(&pc)?;
        let r = nalgebra::Vector2::new(px.u - self.keypoint.u, px.v - self.keypoint.v);
        let rt: Matrix3<f64> = self.extrinsics.rotation.transpose().matrix().to_owned();
        Some((self.confidence * r, self.confidence * jac * rt))
    }
}

/// Huber loss on a squared residual norm and its derivative.
pub fn huber(s: f64, delta: f64) -> (f64, f64) {
    let d2 = delta * delta;
    if s <= d2 {
        (s, 1.0)
    } else {
        let n = s.sqrt();
        (2.0 * delta * n - d2, delta / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSolution {
    pub point: Vector3<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub cost_history: Vec<f64>,
}

struct LmOutcome {
    x: DVector<f64>,
    converged: bool,
    iterations: usize,
    cost_history: Vec<f64>,
}

/// Cost, gradient and Hessian; `None` when the point leaves a
/// camera's domain.
type Linearization = (f64, DVector<f64>, DMatrix<f64>);

fn levenberg_marquardt<F>(x0: DVector<f64>, max_iterations: usize, eval: F) -> Result<LmOutcome>
where
    F: Fn(&DVector<f64>) -> Option<Linearization>,
{
    let (mut cost, mut g, mut h) =
        eval(&x0).ok_or_else(|| Error::DegenerateGeometry("initial estimate outside a camera's domain".into()))?;
    let mut x = x0;
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut history = vec![cost];
    let n = x.len();
    for it in 1..=max_iterations {
        let scale = (h.trace() / n as f64).abs().max(1e-12);
        let mut m = h.clone();
        if m.clone().cholesky().is_none() {
            // indefinite: mirror negative curvature
            let eig = m.symmetric_eigen();
            let vals = eig.eigenvalues.map(|e| e.abs().max(1e-9 * scale));
            m = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        }
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += lambda * scale;
        }
        let step = match a.clone().cholesky() {
            Some(c) => c.solve(&(-&g)),
            None => match a.svd(true, true).solve(&(-&g), 1e-14) {
                Ok(s) => s,
                Err(_) => return Err(Error::RankDeficient("singular normal equations".into())),
            },
        };
        if step.amax() < STEP_TOL_MM {
            return Ok(LmOutcome { x, converged: true, iterations: it, cost_history: history });
        }
        let predicted = -(g.dot(&step) + 0.5 * step.dot(&(&m * &step)));
        if let Some(newton) = m.clone().cholesky().map(|c| c.solve(&(-&g))) {
            if -0.5 * g.dot(&newton) <= COST_RTOL * cost {
                // decrease below float resolution: final Newton step
                let trial = &x + &newton;
                if let Some((c, _, _)) = eval(&trial) {
                    x = trial;
                    if c <= cost {
                        history.push(c);
                    }
                }
                return Ok(LmOutcome { x, converged: true, iterations: it, cost_history: history });
            }
        }
        let trial = &x + &step;
        match eval(&trial) {
            Some((c, g2, h2)) if c < cost => {
                let rho = if predicted > 0.0 { (cost - c) / predicted } else { 0.0 };
                x = trial;
                cost = c;
                g = g2;
                h = h2;
                history.push(cost);
                lambda = (lambda * (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3))).max(1e-12);
                nu = 2.0;
            }
            _ => {
                lambda *= nu;
                nu *= 2.0;
            }
        }
    }
    Ok(LmOutcome { x, converged: false, iterations: max_iterations, cost_history: history })
}

fn closest_point_midpoint(
    (c1, d1): (Vector3<f64>, Vector3<f64>),
    (c2, d2): (Vector3<f64>, Vector3<f64>),
) -> Option<Vector3<f64>> {
    let w = c1 - c2;
    let b = d1.dot(&d2);
    let denom = 1.0 - b * b;
    if denom < PARALLEL_TOL {
        return None;
    }
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    Some(0.5 * ((c1 + s * d1) + (c2 + t * d2)))
}

fn initial_point(views: &[SingleView<'_>]) -> Result<Vector3<f64>> {
    let c0 = views[0].extrinsics.translation;
    let scale = views.iter().map(|v| v.extrinsics.translation.norm()).fold(1.0_f64, f64::max);
    if views.iter().all(|v| (v.extrinsics.translation - c0).norm() <= 1e-9 * scale) {
        return Err(Error::RankDeficient("all views share one camera center".into()));
    }
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by(|&a, &b| views[b].confidence.total_cmp(&views[a].confidence));
    let rays: Vec<_> = order.iter().map(|&i| (i, views[i].ray())).collect();
    for (k, (i, ri)) in rays.iter().enumerate() {
        let Some(ri) = ri else { continue };
        for (j, rj) in &rays[k + 1..] {
            let Some(rj) = rj else { continue };
            if (views[*i].extrinsics.translation - views[*j].extrinsics.translation).norm() <= 1e-9 * scale {
                continue;
            }
            if let Some(p) = closest_point_midpoint(*ri, *rj) {
                return Ok(p);
            }
        }
    }
    Err(Error::RankDeficient("no pair of non-parallel rays from distinct centers".into()))
}

fn accumulate_views(
    views: &[SingleView<'_>],
    x: &Vector3<f64>,
    offset: usize,
    g: &mut DVector<f64>,
    h: &mut DMatrix<f64>,
) -> Option<f64> {
    let mut cost = 0.0;
    for v in views {
        let (r, j) = v.residual(x)?;
        let sq = r.norm_squared();
        let (rho, drho) = huber(sq, HUBER_DELTA_PX);
        cost += rho;
        let jt = j.transpose();
        let gi = 2.0 * drho * jt * r;
        // in the linear Huber region the loss has no curvature along r
        let w = if drho < 1.0 { drho * (Matrix2::identity() - r * r.transpose() / sq) } else { Matrix2::identity() };
        let hi = 2.0 * jt * w * j;
        for a in 0..3 {
            g[offset + a] += gi[a];
            for b in 0..3 {
                h[(offset + a, offset + b)] += hi[(a, b)];
            }
        }
    }
    Some(cost)
}

/// Robust triangulation of one world point from at least two views.
pub fn triangulate_point(views: &[SingleView<'_>]) -> Result<PointSolution> {
    let views: Vec<SingleView<'_>> = views.iter().copied().filter(|v| v.confidence > 0.0).collect();
    if views.len() < MIN_VIEWS {
        return Err(Error::NotEnoughJoints { found: views.len(), needed: MIN_VIEWS });
    }
    let x0 = initial_point(&views)?;
    let out = levenberg_marquardt(DVector::from_column_slice(x0.as_slice()), MAX_ITERATIONS, |x| {
        let p = Vector3::new(x[0], x[1], x[2]);
        let mut g = DVector::zeros(3);
        let mut h = DMatrix::zeros(3, 3);
        let cost = accumulate_views(&views, &p, 0, &mut g, &mut h)?;
        Some((cost, g, h))
    })?;
    if !out.converged {
        log::warn!("point triangulation did not converge in {MAX_ITERATIONS} iterations");
    }
    Ok(PointSolution {
        point: Vector3::new(out.x[0], out.x[1], out.x[2]),
        converged: out.converged,
        iterations: out.iterations,
        cost_history: out.cost_history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSolution {
    /// World-frame joints; invalid joints hold their best estimate or zeros.
    pub pose: Pose3D,
    pub valid: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
}

/// Joint triangulation of a skeleton with a soft bone-symmetry penalty.
///
/// Joints with fewer than two usable views are flagged invalid and left
/// out of the solve; afterwards both endpoints of every bone whose length
/// falls outside its range are flagged.
pub fn triangulate_skeleton(
    views: &[ViewObservation],
    topology: &SkeletonTopology,
    lambda_sym: f64,
) -> Result<SkeletonSolution> {
    let Some(first) = views.first() else {
        return Err(Error::InvalidInput("no views".into()));
    };
    let nj = first.keypoints2d.len();
    if let Some(v) = views.iter().find(|v| v.keypoints2d.len() != nj) {
        return Err(Error::JointCountMismatch(nj, v.keypoints2d.len()));
    }
    if !(lambda_sym >= 0.0 && lambda_sym.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda_sym {lambda_sym} must be >= 0")));
    }
    topology.validate(nj)?;

    let per_joint: Vec<Vec<SingleView<'_>>> =
        (0..nj).map(|j| views.iter().filter_map(|v| v.joint(j)).collect()).collect();

    // per-joint solutions seed the coupled solve
    let mut joints = vec![Vector3::zeros(); nj];
    let mut valid = vec![false; nj];
    let mut all_converged = true;
    for (j, obs) in per_joint.iter().enumerate() {
        if obs.len() < MIN_VIEWS {
            log::debug!("joint {j}: {} usable views, flagged invalid", obs.len());
            continue;
        }
        match triangulate_point(obs) {
            Ok(sol) => {
                joints[j] = sol.point;
                valid[j] = true;
                all_converged &= sol.converged;
            }
            Err(e) => log::debug!("joint {j}: {e}"),
        }
    }

    let active: Vec<usize> = (0..nj).filter(|&j| valid[j]).collect();
    let mut slot = vec![usize::MAX; nj];
    for (k, &j) in active.iter().enumerate() {
        slot[j] = k;
    }
    let pairs: Vec<((usize, usize), (usize, usize))> = topology
        .symmetric_pairs
        .iter()
        .map(|&(l, r)| (topology.bones[l], topology.bones[r]))
        .filter(|((a, b), (c, d))| valid[*a] && valid[*b] && valid[*c] && valid[*d])
        .collect();

    let (mut converged, mut iterations, mut cost_history) = (all_converged, 0, Vec::new());
    if !active.is_empty() && (lambda_sym > 0.0 && !pairs.is_empty()) {
        let n = 3 * active.len();
        let x0 = DVector::from_iterator(n, active.iter().flat_map(|&j| joints[j].iter().copied().collect::<Vec<_>>()));
        let sqrt_l = lambda_sym.sqrt();
        let out = levenberg_marquardt(x0, SKELETON_MAX_ITERATIONS, |x| {
            let at = |j: usize| {
                let k = 3 * slot[j];
                Vector3::new(x[k], x[k + 1], x[k + 2])
            };
            let mut g = DVector::zeros(n);
            let mut h = DMatrix::zeros(n, n);
            let mut cost = 0.0;
            for &j in &active {
                cost += accumulate_views(&per_joint[j], &at(j), 3 * slot[j], &mut g, &mut h)?;
            }
            for &((a, b), (c, d)) in &pairs {
                let bl = at(a) - at(b);
                let br = at(c) - at(d);
                let (ll, lr) = (bl.norm(), br.norm());
                if ll == 0.0 || lr == 0.0 {
                    return None;
                }
                let e = sqrt_l * (ll - lr);
                cost += e * e;
                // sparse Jacobian row of e over the four endpoints
                let ul = sqrt_l * bl / ll;
                let ur = sqrt_l * br / lr;
                let terms = [(a, ul), (b, -ul), (c, -ur), (d, ur)];
                for &(ja, va) in &terms {
                    let ka = 3 * slot[ja];
                    for i in 0..3 {
                        g[ka + i] += 2.0 * e * va[i];
                    }
                    for &(jb, vb) in &terms {
                        let kb = 3 * slot[jb];
                        for i in 0..3 {
                            for k in 0..3 {
                                h[(ka + i, kb + k)] += 2.0 * va[i] * vb[k];
                            }
                        }
                    }
                }
                // curvature of the bone lengths, 2 e d²e
                for (p, q, u, len, sign) in [(a, b, bl / ll, ll, 1.0), (c, d, br / lr, lr, -1.0)] {
                    let block = (Matrix3::identity() - u * u.transpose()) * (sign * 2.0 * e * sqrt_l / len);
                    for (ja, jb, s) in [(p, p, 1.0), (q, q, 1.0), (p, q, -1.0), (q, p, -1.0)] {
                        let (ka, kb) = (3 * slot[ja], 3 * slot[jb]);
                        for i in 0..3 {
                            for k in 0..3 {
                                h[(ka + i, kb + k)] += s * block[(i, k)];
                            }
                        }
                    }
                }
            }
            Some((cost, g, h))
        })?;
        for &j in &active {
            let k = 3 * slot[j];
            joints[j] = Vector3::new(out.x[k], out.x[k + 1], out.x[k + 2]);
        }
        converged = out.converged;
        iterations = out.iterations;
        cost_history = out.cost_history;
    }
    if !converged {
        log::warn!("skeleton triangulation did not converge");
    }

    let pose = Pose3D::world(joints);
    for (bone, &(lo, hi)) in topology.bone_ranges_mm.iter().enumerate() {
        let (a, b) = topology.bones[bone];
        if !(valid[a] && valid[b]) {
            continue;
        }
        let len = topology.bone_length(&pose, bone);
        if len < lo || len > hi {
            log::debug!("bone {bone} length {len:.1} mm outside [{lo}, {hi}]");
            valid[a] = false;
            valid[b] = false;
        }
    }
    Ok(SkeletonSolution { pose, valid, converged, iterations, cost_history })
}

/// Camera entry of a rig file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigCamera {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: CameraModel,
    pub extrinsics: Extrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rig {
    pub cameras: Vec<RigCamera>,
}

/// Detections of one camera inside a detection record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDetection {
    /// Index into the rig's camera list.
    pub camera: usize,
    pub kp2d: Vec<[f64; 2]>,
    pub conf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub views: Vec<ViewDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangulatedRecord {
    pub id: String,
    pub pose: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
    pub converged: bool,
}

impl Rig {
    pub fn observations(&self, rec: &DetectionRecord) -> Result<Vec<ViewObservation>> {
        rec.views
            .iter()
            .map(|v| {
                let cam = self
                    .cameras
                    .get(v.camera)
                    .ok_or_else(|| Error::InvalidInput(format!("record '{}': unknown camera {}", rec.id, v.camera)))?;
                ViewObservation::new(
                    cam.model,
                    cam.extrinsics,
                    v.kp2d.iter().map(|p| Pixel::new(p[0], p[1])).collect(),
                    v.conf.clone(),
                )
            })
            .collect()
    }

    /// Triangulates every record in parallel; failures stay per record.
    pub fn triangulate_all(
        &self,
        records: &[DetectionRecord],
        topology: &SkeletonTopology,
        lambda_sym: f64,
    ) -> Vec<Result<TriangulatedRecord>> {
        records
            .par_iter()
            .map(|rec| {
                let sol = triangulate_skeleton(&self.observations(rec)?, topology, lambda_sym)?;
                Ok(TriangulatedRecord {
                    id: rec.id.clone(),
                    pose: sol.pose.joints.iter().map(|j| [j.x, j.y, j.z]).collect(),
                    valid: sol.valid,
                    converged: sol.converged,
                })
            })
            .collect()
    }
}

/// Extrinsics of a camera at `center` looking at `target` with world -y up.
pub fn look_at_extrinsics(center: Vector3<f64>, target: Vector3<f64>) -> Result<Extrinsics> {
    Extrinsics::looking_at(center, target, -Vector3::y())
        .or_else(|_| Extrinsics::looking_at(center, target, Vector3::z()))
}

/// Applies a world rigid motion to every view (used by equivariance checks).
pub fn transform_views(views: &[ViewObservation], rot: &Rotation, trans: &Vector3<f64>) -> Vec<ViewObservation> {
    views.iter().map(|v| ViewObservation { extrinsics: v.extrinsics.transformed(rot, trans), ..v.clone() }).collect()
}
