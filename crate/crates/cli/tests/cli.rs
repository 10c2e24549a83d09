use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::GrayImage;
use spw_cli::io::{write_class_image, ClassImage};
use spw_cli::pfm;
use spw_cli::record::Record;
use spw_core::RealGrid;
use tempfile::TempDir;

fn spw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spw")).args(args).env_remove("SPW_THREADS").output().unwrap()
}

fn spw_ok(args: &[&str]) -> String {
    let out = spw(args);
    assert!(out.status.success(), "spw {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn class_png(dir: &Path, name: &str, h: usize, w: usize, ids: Vec<u32>) -> PathBuf {
    let path = dir.join(name);
    write_class_image(&path, &ClassImage { height: h, width: w, ids }).unwrap();
    path
}

fn float_map(dir: &Path, name: &str, grid: &RealGrid) -> PathBuf {
    let path = dir.join(name);
    pfm::write(&path, grid).unwrap();
    path
}

fn value(record: &str, key: &str) -> f64 {
    Record::parse(record).get(key).unwrap_or_else(|| panic!("missing {key} in\n{record}")).parse().unwrap()
}

#[test]
fn unreadable_image_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let bogus = dir.path().join("not_an_image.png");
    fs::write(&bogus, b"plain text").unwrap();
    let out = spw(&["decompose", s(&bogus), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_an_image.png"));
}

#[test]
fn usage_errors_exit_with_code_two() {
    assert_eq!(spw(&["metrics"]).status.code(), Some(2));
    assert_eq!(spw(&["bench", "--reps", "0", "--sizes", "8"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_spw"))
        .args(["bench", "--sizes", "8", "--reps", "1"])
        .env("SPW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metrics_hand_case_and_identity() {
    let dir = TempDir::new().unwrap();
    let gt = class_png(dir.path(), "gt.png", 2, 2, vec![0, 0, 1, 1]);
    let pred = class_png(dir.path(), "pred.png", 2, 2, vec![0, 1, 1, 1]);
    let rec = spw_ok(&["metrics", s(&gt), s(&pred)]);
    assert!((value(&rec, "miou") - 7.0 / 12.0).abs() < 1e-12);
    assert!((value(&rec, "mdice") - 11.0 / 15.0).abs() < 1e-12);
    assert_eq!(Record::parse(&rec).get("exclude_background"), Some("false"));

    let same = spw_ok(&["metrics", s(&gt), s(&gt)]);
    assert_eq!([value(&same, "miou"), value(&same, "mdice"), value(&same, "vi"), value(&same, "ari")], [1.0, 1.0, 0.0, 1.0]);
    let flagged = spw_ok(&["metrics", "--exclude-background", s(&gt), s(&pred)]);
    assert_eq!(Record::parse(&flagged).get("exclude_background"), Some("true"));
}

#[test]
fn metrics_size_mismatch_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let a = class_png(dir.path(), "a.png", 2, 2, vec![0, 1, 1, 0]);
    let b = class_png(dir.path(), "b.png", 3, 2, vec![0; 6]);
    let out = spw(&["metrics", s(&a), s(&b)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size mismatch"));
}

#[test]
fn decompose_pads_and_writes_every_map() {
    let dir = TempDir::new().unwrap();
    let img = GrayImage::from_fn(100, 100, |x, y| image::Luma([((x * 7 + y * 3) % 256) as u8]));
    let input = dir.path().join("in.png");
    img.save(&input).unwrap();
    let out = dir.path().join("maps");
    let rec = spw_ok(&["decompose", s(&input), "--out", s(&out)]);
    assert_eq!(Record::parse(&rec).get("size.padded"), Some("104x104"));
    assert_eq!(value(&rec, "outputs"), 18.0);

    let pfms: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pfm"))
        .collect();
    assert_eq!(pfms.len(), 18);
    assert_eq!(pfm::read(&out.join("highpass.pfm")).unwrap().size().to_string(), "100x100");
    for (level, side) in [(1, 100), (2, 50), (3, 25), (4, 13)] {
        for k in 1..=4 {
            let g = pfm::read(&out.join(format!("band_l{level}_o{k}.pfm"))).unwrap();
            assert_eq!((g.height(), g.width()), (side, side));
            assert!(g.min() >= 0.0, "envelopes are moduli");
        }
    }
    assert_eq!(pfm::read(&out.join("lowpass.pfm")).unwrap().size().to_string(), "13x13");
    assert!(out.join("manifest.txt").exists());
    assert!(out.join("band_l2_o3.png").exists());
}

fn ce_oracle(ids: &[u32], fg: &RealGrid) -> f64 {
    ids.iter()
        .zip(fg.data())
        .map(|(&c, &p)| {
            let p_true = if c == 1 { p } else { 1.0 - p };
            -p_true.max(1e-12).ln()
        })
        .sum()
}

#[test]
fn loss_with_zero_lambda_is_plain_cross_entropy() {
    let dir = TempDir::new().unwrap();
    let label = class_png(dir.path(), "label.png", 1, 2, vec![1, 0]);
    let pred = float_map(dir.path(), "pred.pfm", &RealGrid::new(1, 2, vec![0.5, 0.75]).unwrap());
    let rec = spw_ok(&["loss", s(&label), s(&pred), "--lambda", "0", "--reduction", "sum"]);
    // -(ln 0.5 + ln 0.25)
    assert!((value(&rec, "loss") - 2.0794415416798357).abs() < 1e-9);

    let (h, w) = (24, 20);
    let ids: Vec<u32> = (0..h * w).map(|i| u32::from((i * 7919) % 13 < 5)).collect();
    let fg = RealGrid::from_fn(h, w, |r, c| 0.05 + 0.9 * (((r * 31 + c * 17) % 97) as f64 / 96.0));
    let label = class_png(dir.path(), "label2.png", h, w, ids.clone());
    let pred = float_map(dir.path(), "pred2.pfm", &fg);
    // The oracle reads the stored single-precision values back.
    let stored = pfm::read(&pred).unwrap();
    for reduction in ["sum", "mean"] {
        let rec = spw_ok(&["loss", s(&label), s(&pred), "--lambda", "0", "--reduction", reduction]);
        let mut expected = ce_oracle(&ids, &stored);
        if reduction == "mean" {
            expected /= (h * w) as f64;
        }
        assert!((value(&rec, "loss") - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }
}

#[test]
fn loss_records_are_deterministic_and_echo_config() {
    let dir = TempDir::new().unwrap();
    let ids: Vec<u32> = (0..32 * 32).map(|i| u32::from((i % 32) > 12 && (i / 32) < 20)).collect();
    let label = class_png(dir.path(), "label.png", 32, 32, ids);
    let pred = float_map(dir.path(), "pred.pfm", &RealGrid::from_fn(32, 32, |r, c| ((r + 2 * c) % 9) as f64 / 9.0));
    let args = ["loss", s(&label), s(&pred), "--beta", "0.8", "--class-weights", "invfreq"];
    let a = Record::parse(&spw_ok(&args)).without_timings();
    let b = Record::parse(&spw_ok(&args)).without_timings();
    assert_eq!(a, b);
    assert_eq!(a.get("config.beta"), Some("0.8"));
    assert_eq!(a.get("config.class_weights"), Some("invfreq"));
    assert!(Record::parse(&spw_ok(&args)).get("time_ms.weights").is_some());
}

#[test]
fn class_count_mismatch_is_reported() {
    let dir = TempDir::new().unwrap();
    let label = class_png(dir.path(), "label.png", 2, 2, vec![0, 1, 2, 1]);
    let pred = float_map(dir.path(), "pred.pfm", &RealGrid::filled(2, 2, 0.5));
    let out = spw(&["loss", s(&label), s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("class-count mismatch"));
}

#[test]
fn weightmap_trivial_cases_are_all_ones() {
    let dir = TempDir::new().unwrap();
    let constant = class_png(dir.path(), "constant.png", 16, 16, vec![1; 256]);
    let out = dir.path().join("w.pfm");
    spw_ok(&["weightmap", s(&constant), "--out", s(&out)]);
    assert!(pfm::read(&out).unwrap().data().iter().all(|&v| v == 1.0));

    let edge = class_png(dir.path(), "edge.png", 16, 16, (0..256).map(|i| u32::from(i % 16 >= 8)).collect());
    spw_ok(&["weightmap", s(&edge), "--lambda", "0", "--out", s(&out)]);
    assert!(pfm::read(&out).unwrap().data().iter().all(|&v| v == 1.0));
    assert!(out.with_extension("png").exists());
}

#[test]
fn no_pred_map_matches_label_only_weights() {
    let dir = TempDir::new().unwrap();
    let ids: Vec<u32> = (0..40 * 40).map(|i| u32::from(((i % 40) as i32 - 20).pow(2) + ((i / 40) as i32 - 18).pow(2) < 150)).collect();
    let label = class_png(dir.path(), "label.png", 40, 40, ids);
    let pred = float_map(dir.path(), "pred.pfm", &RealGrid::from_fn(40, 40, |r, c| ((r * c) % 11) as f64 / 10.0));
    let (a, b, c) = (dir.path().join("a.pfm"), dir.path().join("b.pfm"), dir.path().join("c.pfm"));
    spw_ok(&["weightmap", s(&label), "--out", s(&a)]);
    spw_ok(&["weightmap", s(&label), s(&pred), "--no-pred-map", "--out", s(&b)]);
    spw_ok(&["weightmap", s(&label), s(&pred), "--out", s(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn demo_train_degenerates_and_ignores_thread_count() {
    let small = ["--samples", "12", "--size", "32", "--steps", "4", "--seed", "7"];
    let ce = spw_ok(&[&["demo-train", "--loss", "ce"][..], &small].concat());
    let spw0 = spw_ok(&[&["demo-train", "--loss", "spw", "--lambda", "0"][..], &small].concat());
    assert_eq!(ce, spw0);
    assert_eq!(ce.lines().filter(|l| l.starts_with("step=")).count(), 4);

    let args = [&["demo-train", "--loss", "spw"][..], &small].concat();
    let single = spw_ok(&args);
    let threaded = Command::new(env!("CARGO_BIN_EXE_spw")).args(&args).env("SPW_THREADS", "3").output().unwrap();
    assert_eq!(String::from_utf8(threaded.stdout).unwrap(), single);
    assert_ne!(single, ce);
}

#[test]
fn bench_reports_each_size() {
    let out = spw_ok(&["bench", "--sizes", "16,32", "--reps", "3"]);
    assert!(out.starts_with("size\tweights_ms\tspw_loss_ms\tce_ms\tdelta_to_ce\n"));
    assert!(out.contains("\n16\t") && out.contains("\n32\t"));
    assert!(out.contains("growth 16->32"));
    assert!(out.contains("exponent vs HW log HW"));
}
