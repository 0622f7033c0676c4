use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fishrepro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fishrepro")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fishrepro(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn synth(dir: &Path, n: &str) {
    ok(&["synth", "--seed", "4", "-n", n, "--mpja-min", "20", "--mpja-max", "150", "--out", s(dir)]);
}

#[test]
fn synth_then_triangulate_recovers_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "6");
    let out = tmp.path().join("tri.jsonl");
    ok(&[
        "triangulate",
        "--rig",
        s(&scene.join("rig.json")),
        "--detections",
        s(&scene.join("detections.jsonl")),
        "--topology",
        s(&scene.join("topology.json")),
        "--lambda-sym",
        "1.0",
        "--out",
        s(&out),
    ]);
    let tri = jsonl(&out);
    let gt = jsonl(&scene.join("gt.jsonl"));
    assert_eq!(tri.len(), 6);
    for (t, g) in tri.iter().zip(&gt) {
        assert_eq!(t["id"], g["id"]);
        assert_eq!(t["converged"], true);
        for (a, b) in t["pose"].as_array().unwrap().iter().zip(g["pose"].as_array().unwrap()) {
            for k in 0..3 {
                assert!((a[k].as_f64().unwrap() - b[k].as_f64().unwrap()).abs() < 1e-3);
            }
        }
    }
}

#[test]
fn run_records_evaluate_back_to_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "12");
    let run = tmp.path().join("run");
    ok(&["run", "--scene", s(&scene.join("scene.json")), "--projection", "all", "--out", s(&run)]);
    for f in ["report.json", "curves.csv", "records.jsonl"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let report = tmp.path().join("eval.json");
    let curves = tmp.path().join("curves.csv");
    ok(&[
        "evaluate",
        "--gt",
        s(&scene.join("gt.jsonl")),
        "--pred",
        s(&run.join("records.jsonl")),
        "--camera",
        s(&scene.join("camera.json")),
        "--alpha-t",
        "0,110,180",
        "--out",
        s(&report),
        "--curves",
        s(&curves),
    ]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for kind in ["PH", "EF", "DS", "CC", "EC"] {
        let a = r["summaries"][kind]["a_mpjpe_mm"].as_f64().unwrap();
        assert!(a < 1e-4, "{kind}: {a}");
    }
    assert_eq!(r["summaries"]["H-MPJA@0"], r["summaries"]["DS"]);
    assert_eq!(r["summaries"]["H-MPJA@180"], r["summaries"]["PH"]);
    let csv = std::fs::read_to_string(&curves).unwrap();
    assert!(csv.lines().next().unwrap().contains("bin_lo_deg,count,mpjpe_mm,a_mpjpe_mm,pck150,a_pck150"));
}

#[test]
fn run_config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"projection": "DS", "n_records": 5, "seed": 9, "noise": {"sigma_2d_px": 2.0, "sigma_3d_mm": 0.0}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(&["run", "--config", s(&cfg), "-n", "8", "--out", s(&out)]);
    let recs = jsonl(&out.join("records.jsonl"));
    assert_eq!(recs.len(), 8);
    assert!(recs.iter().all(|r| r["projection"] == "DS"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["summaries"]["DS"]["a_mpjpe_mm"].as_f64().unwrap() > 0.0);

    std::fs::write(&cfg, r#"{"projection": "DS", "bogus": 1}"#).unwrap();
    assert!(!fishrepro(&["run", "--config", s(&cfg)]).status.success());
    assert!(!fishrepro(&["run", "-n", "2", "--alpha-t", "200"]).status.success());
}

#[test]
fn evaluate_fails_when_most_predictions_are_unmatched() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "4");
    let preds: String = jsonl(&scene.join("gt.jsonl"))
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let id = if i == 0 { g["id"].as_str().unwrap().to_string() } else { format!("x{i}") };
            format!("{}\n", serde_json::json!({"id": id, "projection": "PH", "abs_pose_world": g["pose"]}))
        })
        .collect();
    let pred = tmp.path().join("pred.jsonl");
    std::fs::write(&pred, preds).unwrap();
    let out = fishrepro(&["evaluate", "--gt", s(&scene.join("gt.jsonl")), "--pred", s(&pred)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));
}

#[test]
fn angles_csv_with_and_without_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "5");
    let cam = scene.join("camera.json");
    let gt = scene.join("gt.jsonl");
    let out = ok(&["angles", "--camera", s(&cam), "--poses", s(&gt)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "id,MPJA_deg,MBBA_deg,CoMD_mm,H_choice");
    assert_eq!(rows.len(), 6);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let m: f64 = f[1].parse().unwrap();
        assert!((20.0..=150.0).contains(&m));
        assert_eq!(f[2], "");
        assert_eq!(f[4], if m < 110.0 { "PH" } else { "DS" });
    }

    let boxes = tmp.path().join("boxes.jsonl");
    std::fs::write(&boxes, r#"{"id": "rec-000000", "bbox": {"x_min": 600, "y_min": 480, "x_max": 680, "y_max": 560}}"#)
        .unwrap();
    let out = ok(&["angles", "--camera", s(&cam), "--poses", s(&gt), "--bboxes", s(&boxes), "--alpha-t", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(first[2].parse::<f64>().unwrap() > 0.0);
    assert_eq!(first[4], "DS");
}

#[test]
fn reproject_png_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "1");
    let input = tmp.path().join("in.png");
    let img = image::RgbImage::from_fn(1280, 1024, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 128]));
    img.save(&input).unwrap();
    let output = tmp.path().join("out.png");
    let side = tmp.path().join("crop.json");
    ok(&[
        "reproject",
        "--camera",
        s(&scene.join("camera.json")),
        "--bbox",
        "500,400,240,300",
        "--out-kind",
        "EC",
        "--out-size",
        "96",
        "--sidecar",
        s(&side),
        s(&input),
        s(&output),
    ]);
    let crop = image::open(&output).unwrap();
    assert_eq!((crop.width(), crop.height()), (96, 96));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(&side).unwrap()).unwrap();
    assert_eq!(meta["output_camera"]["kind"], "EC");
    assert_eq!(meta["rotation"].as_array().unwrap().len(), 9);

    let bad =
        fishrepro(&["reproject", "--camera", s(&scene.join("camera.json")), "--bbox", "1,2,3", s(&input), s(&output)]);
    assert!(!bad.status.success());
}

#[test]
fn zero_threads_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_fishrepro"))
        .args(["run", "-n", "1"])
        .env("FISHREPRO_THREADS", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
