//! Shared fixtures for the criterion benchmarks.

use fishrepro_core::harness::{generate_scene, synthetic_bbox, SyntheticScene};
use fishrepro_core::{BoundingBox, CameraModel, ImageBuffer, Intrinsics, Pose3D};

/// 1280x1024 double sphere fisheye used as the input camera in benches.
pub fn fisheye_camera() -> CameraModel {
    let k = Intrinsics::new(300.0, 300.0, 640.0, 512.0, 1280, 1024).expect("valid intrinsics");
    CameraModel::double_sphere(k, 0.2, 0.55).expect("valid DS parameters")
}

/// Gradient RGB image matching [`fisheye_camera`].
pub fn test_image() -> ImageBuffer {
    let (w, h) = (1280u32, 1024u32);
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&[(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
        }
    }
    ImageBuffer::new(w, h, 3, data).expect("consistent buffer")
}

/// Small seeded scene on the default rig.
pub fn scene(n: usize) -> SyntheticScene {
    generate_scene(42, n, (30.0, 150.0)).expect("reachable range")
}

/// First skeleton of `scene` in the primary camera frame, with its bbox.
pub fn staged(scene: &SyntheticScene) -> (Pose3D, BoundingBox) {
    let cam = scene.primary();
    let pose = scene.skeletons[0].to_camera(&cam.extrinsics);
    let bbox = synthetic_bbox(&cam.model, &pose).expect("visible skeleton");
    (pose, bbox)
}
