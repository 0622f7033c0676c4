use fishrepro_core::evaluation::{bin_by_mpja, mpjpe, pck, EvaluationRecord};
use fishrepro_core::recovery::recover_translation;
use fishrepro_core::skeleton::{template_pose, SkeletonTopology};
use fishrepro_core::spatial::mpja;
use fishrepro_core::triangulation::{
    look_at_extrinsics, transform_views, triangulate_point, triangulate_skeleton, SingleView, ViewObservation,
};
use fishrepro_core::{
    AngleDeg, CameraConfig, CameraModel, Extrinsics, Intrinsics, ModelKind, Pixel, Pose3D, Prediction, Projection,
    Rotation,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ModelKind> {
    prop::sample::select(ModelKind::ALL.to_vec())
}

fn camera(kind: ModelKind, xi: f64, alpha: f64) -> CameraModel {
    let k = Intrinsics::new(420.0, 400.0, 300.0, 260.0, 640, 520).unwrap();
    CameraModel::new(Projection::with_kind(kind, xi, alpha).unwrap(), k).unwrap()
}

fn point() -> impl Strategy<Value = Vector3<f64>> {
    (-5000.0..5000.0, -5000.0..5000.0, -5000.0..5000.0)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z))
        .prop_filter("away from the center", |v| v.norm() > 1.0)
}

fn front_pose(n: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec((-800.0..800.0, -900.0..900.0, 1500.0..6000.0), n)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect())
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (point(), -3.0..3.0).prop_map(|(axis, a)| Rotation::from_axis_angle(&axis.normalize(), a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn round_trip_and_scale_invariance(k in kind(), xi in 0.0..1.5, alpha in 0.0..1.0, p in point(), s in 0.01..100.0) {
        let cam = camera(k, xi, alpha);
        let a = cam.project(&p).unwrap();
        let b = cam.project(&(p * s)).unwrap();
        prop_assert_eq!(a.in_domain, b.in_domain);
        if a.in_domain {
            prop_assert!(a.pixel.distance(&b.pixel) < 1e-7);
            if let Some(r) = cam.unproject(&a.pixel) {
                let d = p.normalize();
                prop_assert!(r.dir().cross(&d).norm().atan2(r.dir().dot(&d)) < 1e-9);
            }
        }
    }

    #[test]
    fn camera_config_json_round_trip(k in kind(), xi in 0.0..2.0, alpha in 0.0..1.0) {
        let cam = camera(k, xi, alpha);
        let json = serde_json::to_string(&cam).unwrap();
        let back: CameraModel = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, cam);
        let cfg: CameraConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(cfg.xi.is_some(), k == ModelKind::DS);
    }

    #[test]
    fn mpja_scale_and_permutation_invariant(joints in front_pose(6), s in 0.1..20.0, shift in 0usize..6) {
        let pose = Pose3D::camera(joints.clone());
        let m = mpja(&pose).unwrap().value();
        prop_assert!((mpja(&pose.scaled(s)).unwrap().value() - m).abs() < 1e-10);
        let mut rotated = joints;
        rotated.rotate_left(shift);
        prop_assert_eq!(mpja(&Pose3D::camera(rotated)).unwrap().value(), m);
    }

    #[test]
    fn mpjpe_ignores_global_offset(gt in front_pose(8), pred in front_pose(8), dx in -1e3..1e3, dy in -1e3..1e3, dz in -1e3..1e3) {
        let gt = Pose3D::world(gt);
        let pred = Pose3D::world(pred);
        let shifted = pred.translated(&Vector3::new(dx, dy, dz));
        let a = mpjpe(&gt, &pred, false, 0).unwrap();
        let b = mpjpe(&gt, &shifted, false, 0).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        prop_assert!(mpjpe(&gt, &pred, true, 0).unwrap() >= 0.0);
        prop_assert_eq!(mpjpe(&gt, &gt, true, 0).unwrap(), 0.0);
    }

    #[test]
    fn pck_monotone_in_threshold(gt in front_pose(10), pred in front_pose(10), t1 in 0.0..3000.0, t2 in 0.0..3000.0) {
        let (gt, pred) = (Pose3D::world(gt), Pose3D::world(pred));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        for absolute in [false, true] {
            let a = pck(&gt, &pred, lo, absolute, 0).unwrap();
            let b = pck(&gt, &pred, hi, absolute, 0).unwrap();
            prop_assert!(a <= b);
            prop_assert!((0.0..=100.0).contains(&a));
        }
    }

    #[test]
    fn bins_partition_records(angles in prop::collection::vec(0.0..=180.0, 0..40), width in 1.0..60.0) {
        let pose = Pose3D::world(vec![Vector3::new(0.0, 0.0, 1000.0), Vector3::new(10.0, 0.0, 1000.0)]);
        let recs: Vec<_> = angles
            .iter()
            .enumerate()
            .map(|(i, &a)| EvaluationRecord {
                id: i.to_string(),
                gt_pose: pose.clone(),
                pred_pose: pose.clone(),
                mpja: AngleDeg::new(a).unwrap(),
                mbba: None,
                projection_used: ModelKind::DS,
            })
            .collect();
        let bins = bin_by_mpja(&recs, width, 0).unwrap();
        prop_assert_eq!(bins.iter().map(|b| b.summary.count).sum::<usize>(), recs.len());
    }

    #[test]
    fn recovery_equivariant_and_optimal(joints in front_pose(7), d in point(), probe in point()) {
        let cam = CameraModel::pinhole(Intrinsics::new(500.0, 500.0, 128.0, 128.0, 256, 256).unwrap()).unwrap();
        let pose = Pose3D::camera(joints);
        let c = pose.centroid();
        let kps: Vec<Pixel> = pose.joints.iter().map(|j| cam.project(j).unwrap().pixel).collect();
        let rel = pose.translated(&-c);
        let t = recover_translation(&Prediction::new(rel.clone(), kps.clone()).unwrap(), &cam).unwrap();
        prop_assert!((t - c).norm() < 1e-6 * c.norm());

        // shifting the relative pose shifts the translation the other way
        let t2 = recover_translation(&Prediction::new(rel.translated(&d), kps.clone()).unwrap(), &cam).unwrap();
        prop_assert!((t2 - (t - d)).norm() < 1e-6 * (c.norm() + d.norm()));

        // noisy keypoints: any other translation has a larger residual
        let noisy: Vec<Pixel> = kps.iter().enumerate().map(|(i, p)| Pixel::new(p.u + (i as f64 * 1.7).sin() * 3.0, p.v + (i as f64 * 2.3).cos() * 3.0)).collect();
        let t3 = recover_translation(&Prediction::new(rel.clone(), noisy.clone()).unwrap(), &cam).unwrap();
        let cost = |t: &Vector3<f64>| -> f64 {
            rel.joints.iter().zip(&noisy).map(|(j, k)| {
                let m = cam.normalized_coords(k).unwrap();
                (m.x * (j.z + t.z) - (j.x + t.x)).powi(2) + (m.y * (j.z + t.z) - (j.y + t.y)).powi(2)
            }).sum()
        };
        let other = t3 + probe.normalize() * 10.0;
        prop_assert!(cost(&t3) <= cost(&other) * (1.0 + 1e-12));
    }

    #[test]
    fn rotation_serde_round_trip(r in rotation()) {
        let json = serde_json::to_string(&r).unwrap();
        let back: Rotation = serde_json::from_str(&json).unwrap();
        prop_assert!((back.matrix() - r.matrix()).norm() < 1e-15);
    }
}

fn rig_views(pose: &Pose3D) -> Vec<ViewObservation> {
    let ph = CameraModel::pinhole(Intrinsics::new(900.0, 900.0, 640.0, 512.0, 1280, 1024).unwrap()).unwrap();
    let ds = CameraModel::double_sphere(Intrinsics::new(300.0, 300.0, 640.0, 512.0, 1280, 1024).unwrap(), 0.2, 0.55)
        .unwrap();
    [Vector3::new(3500.0, -800.0, 200.0), Vector3::new(-3000.0, -600.0, 1500.0), Vector3::new(300.0, -900.0, -3500.0)]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let cam = if i == 1 { ds } else { ph };
            let ext = look_at_extrinsics(*c, Vector3::zeros()).unwrap();
            let kps = pose.joints.iter().map(|j| cam.project(&ext.world_to_camera(j)).unwrap().pixel).collect();
            ViewObservation::new(cam, ext, kps, vec![1.0; pose.len()]).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn triangulation_frame_equivariant(r in rotation(), t in point(), noise in prop::collection::vec(-8.0..8.0, 102)) {
        let pose = template_pose();
        let mut views = rig_views(&Pose3D::world(pose.joints.clone()));
        for (v, chunk) in views.iter_mut().zip(noise.chunks(34)) {
            for (k, n) in v.keypoints2d.iter_mut().zip(chunk.chunks(2)) {
                k.u += n[0];
                k.v += n[1];
            }
        }
        let topo = SkeletonTopology::default();
        let a = triangulate_skeleton(&views, &topo, 1.0).unwrap();
        let b = triangulate_skeleton(&transform_views(&views, &r, &t), &topo, 1.0).unwrap();
        prop_assert!(a.converged && b.converged);
        for (pa, pb) in a.pose.joints.iter().zip(&b.pose.joints) {
            prop_assert!((r.apply(pa) + t - pb).norm() < 1e-4, "{}", (r.apply(pa) + t - pb).norm());
        }
        for w in a.cost_history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn point_objective_non_increasing(x in (-500.0..500.0, -500.0..500.0, -500.0..500.0), noise in prop::collection::vec(-20.0..20.0, 6)) {
        let x = Vector3::new(x.0, x.1, x.2);
        let views = rig_views(&Pose3D::world(vec![x]));
        let singles: Vec<_> = views
            .iter()
            .zip(noise.chunks(2))
            .map(|(v, n)| SingleView {
                camera: &v.camera,
                extrinsics: &v.extrinsics,
                keypoint: Pixel::new(v.keypoints2d[0].u + n[0], v.keypoints2d[0].v + n[1]),
                confidence: 1.0,
            })
            .collect();
        let sol = triangulate_point(&singles).unwrap();
        prop_assert!(!sol.cost_history.is_empty());
        for w in sol.cost_history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn identity_extrinsics_default() {
    assert_eq!(Extrinsics::default(), Extrinsics::identity());
}
