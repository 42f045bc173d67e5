mod common;

use std::path::Path;
use std::process::{Command, Output};

use layertext::io::{load_image, load_image_with_alpha, save_image, save_layer, save_mask};
use layertext::metrics::MetricReport;
use layertext::{BinaryMask, RasterImage};

fn layertext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layertext")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn evaluate_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.png");
    save_image(&common::smooth_image(16, 12), &img).unwrap();
    let report = dir.path().join("r.json");
    let out = layertext(&[
        "evaluate", "--edited", s(&img), "--reference", s(&img), "--pred", "Hello", "--target", "Hello", "--out", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: MetricReport = serde_json::from_slice(&out.stdout).unwrap();
    let saved: MetricReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert_eq!(printed.bc, 0.0);
    assert_eq!(printed.cs, 0.0);
    assert!((printed.corr - 1.0).abs() < 1e-12);
    assert!((printed.inter - 3.0).abs() < 1e-12);
    assert_eq!(printed.sa, Some(1.0));
    assert_eq!(printed.ned, Some(1.0));
}

#[test]
fn validation_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(layertext(&["run", s(&missing)]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"input_image": "x.png", "bogus": 1}"#).unwrap();
    let out = layertext(&["run", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let img = dir.path().join("a.png");
    save_image(&RasterImage::new(4, 4), &img).unwrap();
    let other = dir.path().join("b.png");
    save_image(&RasterImage::new(5, 4), &other).unwrap();
    let out = layertext(&["evaluate", "--edited", s(&img), "--reference", s(&other), "--mask", s(&img)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_final_image() {
    let dir = tempfile::tempdir().unwrap();
    // ink covers two thirds of the box so it is the majority cluster
    let img = RasterImage::from_fn(40, 20, |x, y| if (4..20).contains(&x) && (4..10).contains(&y) && x % 3 != 0 { [0, 0, 0] } else { [220, 220, 220] });
    save_image(&img, dir.path().join("in.png")).unwrap();
    let script = dir.path().join("edit.json");
    std::fs::write(
        &script,
        r#"{
  "input_image": "in.png",
  "detections": [{"bbox": [4, 4, 16, 6], "text": "abc"}],
  "regions": [{"transforms": [{"translate": [18, 8]}]}],
  "output_dir": "out"
}"#,
    )
    .unwrap();
    let out = layertext(&["run", s(&script)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result = load_image(dir.path().join("out/final.png")).unwrap();
    assert_eq!(result.pixel(22, 12), [0, 0, 0]);
    assert_eq!(result.pixel(4, 4), [220, 220, 220]);
}

#[test]
fn stage_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bg = RasterImage::filled(20, 10, [100, 100, 100]);
    let bg_path = d.join("bg.png");
    save_image(&bg, &bg_path).unwrap();

    // inpaint: a flat image stays flat
    let mask_path = d.join("m.png");
    save_mask(&BinaryMask::from_fn(20, 10, |x, y| (5..9).contains(&x) && (3..6).contains(&y)), &mask_path).unwrap();
    let filled = d.join("filled.png");
    let out = layertext(&["inpaint", "--image", s(&bg_path), "--mask", s(&mask_path), "--out", s(&filled)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_image(&filled).unwrap(), bg);

    // transform: a 2x1 block moves right by 3
    let layer_path = d.join("layer.png");
    let layer_mask = BinaryMask::from_fn(20, 10, |x, y| (2..4).contains(&x) && y == 5);
    save_layer(&RasterImage::filled(20, 10, [9, 8, 7]), &layer_mask, &layer_path).unwrap();
    let moved = d.join("moved.png");
    let out = layertext(&["transform", "--layer", s(&layer_path), "--op", r#"{"translate": [3, 0]}"#, "--out", s(&moved)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, alpha) = load_image_with_alpha(&moved).unwrap();
    let m = BinaryMask::from_fn(20, 10, |x, y| alpha.as_ref().unwrap()[y * 20 + x] >= 128);
    assert_eq!(m, BinaryMask::from_fn(20, 10, |x, y| (5..7).contains(&x) && y == 5));

    // compose without adjustment pastes the layer as is
    let composed = d.join("c.png");
    let out = layertext(&[
        "compose", "--background", s(&bg_path), "--layer", s(&moved), "--method", "none", "--out", s(&composed),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = load_image(&composed).unwrap();
    assert_eq!(c.pixel(5, 5), [9, 8, 7]);
    assert_eq!(c.pixel(2, 5), [100, 100, 100]);

    // mismatched depth flags are a usage error
    let out = layertext(&["compose", "--background", s(&bg_path), "--layer", s(&moved), "--bg-depth", s(&bg_path), "--out", s(&composed)]);
    assert_eq!(out.status.code(), Some(2));
}
