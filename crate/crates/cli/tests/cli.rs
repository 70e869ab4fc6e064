use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rawmark_core::codec::CodecParams;
use rawmark_core::pngio::{load_rgb_png, read_fingerprint, save_raw_png};
use rawmark_core::BayerRaw;
use rawmark_nn::models::{load_bundle, save_bundle};

const TINY: &str = r#"
crop_size = 32
batch_size = 2
stage_epochs = [1, 1, 1]
encoder = { base_channels = 4, depth = 2 }
decoder = { width = 4, hidden = 16 }
disc = { base_channels = 2 }
isp = { base_channels = 4, depth = 2, epochs = 1 }
eval = { images = 3 }
"#;

fn rawmark(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawmark"))
        .args(args)
        .current_dir(dir)
        .env_remove("RAWIW_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rawmark(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn failure(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = rawmark(dir, args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// A 12-pair synthetic dataset and a bundle with its ISP fitted.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(d, &["synth", "--out", "data", "--n", "12", "--crop", "32", "--scenes", "4", "--scene-size", "64"]);
    ok(d, &["--config", "tiny.toml", "isp-train", "--data", "data", "--out", "isp.bundle"]);
    let raw = fs::read_dir(d.join("data"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with("_raw.png"))
        .min()
        .unwrap();
    (tmp, raw)
}

#[test]
fn invalid_inputs_exit_with_one_and_name_the_input() {
    let (tmp, raw) = workspace();
    let d = tmp.path();
    let raw = raw.to_str().unwrap();
    let (code, err) = failure(d, &["embed", "--raw", raw, "--payload", "0000", "--bundle", "isp.bundle", "--out", "x.png"]);
    assert_eq!(code, 1);
    assert!(err.contains("--payload"), "{err}");
    let (code, err) = failure(d, &["develop", "--raw", raw, "--isp", "deep", "--out", "x.png"]);
    assert_eq!(code, 1);
    assert!(err.contains("--bundle"), "{err}");
    let (code, err) = failure(d, &["develop", "--raw", raw, "--isp", "magic", "--out", "x.png"]);
    assert_eq!(code, 1);
    assert!(err.contains("magic"), "{err}");
    assert_eq!(failure(d, &["frobnicate"]).0, 1);
    let (code, err) = failure(d, &["--set", "nonsense=1", "develop", "--raw", raw, "--isp", "classical:auto", "--out", "x.png"]);
    assert_eq!(code, 1);
    assert!(err.contains("nonsense"), "{err}");
    let (code, err) = failure(d, &["train", "--data", "data", "--bundle", "isp.bundle", "--stage", "4"]);
    assert_eq!(code, 1);
    assert!(err.contains("--stage 4"), "{err}");
}

#[test]
fn missing_files_exit_with_two() {
    let (tmp, _) = workspace();
    let d = tmp.path();
    let (code, err) = failure(d, &["extract", "--rgb", "absent.png", "--bundle", "isp.bundle"]);
    assert_eq!(code, 2);
    assert!(err.contains("absent.png"), "{err}");
    let (code, err) = failure(d, &["develop", "--raw", "absent_raw.png", "--isp", "classical:auto", "--out", "x.png"]);
    assert_eq!(code, 2);
    assert!(err.contains("absent_raw.png"), "{err}");
    let (code, err) = failure(d, &["eval", "--data", "data", "--bundle", "absent.bundle", "--out", "r.json"]);
    assert_eq!(code, 2);
    assert!(err.contains("absent.bundle"), "{err}");
}

#[test]
fn bundle_with_another_codec_is_refused() {
    let (tmp, raw) = workspace();
    let d = tmp.path();
    let mut bundle = load_bundle(d.join("isp.bundle")).unwrap();
    bundle.codec = CodecParams {
        t: 3,
        ..CodecParams::default()
    };
    save_bundle(&bundle, d.join("other.bundle")).unwrap();
    let raw = raw.to_str().unwrap();
    ok(d, &["develop", "--raw", raw, "--isp", "classical:auto", "--out", "rgb.png"]);
    let (code, err) = failure(d, &["extract", "--rgb", "rgb.png", "--bundle", "other.bundle"]);
    assert_eq!(code, 1);
    assert!(err.contains("incompatible"), "{err}");
    let (code, _) = failure(d, &["embed", "--raw", raw, "--payload", "00000000000000", "--bundle", "other.bundle", "--out", "e.png"]);
    assert_eq!(code, 1);
}

#[test]
fn classical_auto_keeps_a_gray_scene_gray() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    save_raw_png(&BayerRaw::constant(0.25, 32, 32).unwrap(), d.join("gray_raw.png"), None).unwrap();
    ok(d, &["develop", "--raw", "gray_raw.png", "--isp", "classical:auto", "--out", "gray.png"]);
    let rgb = load_rgb_png(d.join("gray.png")).unwrap();
    for p in rgb.data().chunks_exact(3) {
        assert!(p[0] == p[1] && p[1] == p[2], "{p:?}");
    }
}

#[test]
fn pure_commands_are_byte_reproducible_and_stamped() {
    let (tmp, raw) = workspace();
    let d = tmp.path();
    let raw = raw.to_str().unwrap();
    let fp = load_bundle(d.join("isp.bundle")).unwrap().config.fingerprint();
    for out in ["e1.png", "e2.png"] {
        ok(d, &["embed", "--raw", raw, "--text", "hi", "--bundle", "isp.bundle", "--out", out]);
    }
    assert_eq!(fs::read(d.join("e1.png")).unwrap(), fs::read(d.join("e2.png")).unwrap());
    assert_eq!(read_fingerprint(d.join("e1.png")).unwrap().as_deref(), Some(fp.as_str()));
    for out in ["d1.png", "d2.png"] {
        ok(d, &["develop", "--raw", "e1.png", "--isp", "deep", "--bundle", "isp.bundle", "--jpeg", "90", "--out", out]);
    }
    assert_eq!(fs::read(d.join("d1.png")).unwrap(), fs::read(d.join("d2.png")).unwrap());
    assert_eq!(read_fingerprint(d.join("d1.png")).unwrap().as_deref(), Some(fp.as_str()));
    let a = ok(d, &["extract", "--rgb", "d1.png", "--bundle", "isp.bundle", "--truth", "00000000000000"]);
    let b = ok(d, &["extract", "--rgb", "d1.png", "--bundle", "isp.bundle", "--truth", "00000000000000"]);
    assert_eq!(a, b);
    assert!(a.starts_with("payload ") && a.contains("ecc ") && a.contains("ber "), "{a}");
}

#[test]
fn training_runs_in_order_and_respects_resume() {
    let (tmp, _) = workspace();
    let d = tmp.path();
    let (code, err) = failure(d, &["train", "--data", "data", "--bundle", "isp.bundle", "--stage", "2"]);
    assert_eq!(code, 1);
    assert!(err.contains("stage 1"), "{err}");
    ok(d, &["train", "--data", "data", "--bundle", "isp.bundle", "--stage", "1", "--out", "s1.bundle"]);
    let (code, err) = failure(d, &["train", "--data", "data", "--bundle", "s1.bundle"]);
    assert_eq!(code, 1);
    assert!(err.contains("--resume"), "{err}");
    let (code, err) = failure(d, &["--set", "encoder.depth=3", "train", "--data", "data", "--bundle", "s1.bundle", "--resume"]);
    assert_eq!(code, 1);
    assert!(err.contains("encoder.depth"), "{err}");
    let out = ok(
        d,
        &["--set", "distortion_enabled=false", "train", "--data", "data", "--bundle", "s1.bundle", "--resume", "--out", "s3.bundle", "--telemetry", "t.jsonl"],
    );
    assert!(out.contains("stage 2 epoch 0") && out.contains("stage 3 epoch 0"), "{out}");
    let b = load_bundle(d.join("s3.bundle")).unwrap();
    assert_eq!(b.training_stage_completed, 3);
    assert!(!b.config.distortion_enabled);
    let isp = load_bundle(d.join("isp.bundle")).unwrap();
    assert_eq!(b.isp_hash().unwrap(), isp.isp_hash().unwrap());
    assert!(fs::read_to_string(d.join("t.jsonl")).unwrap().lines().count() > 0);
}

#[test]
fn eval_and_sweep_write_stamped_reports() {
    let (tmp, _) = workspace();
    let d = tmp.path();
    let args = ["eval", "--data", "data", "--split", "train", "--bundle", "isp.bundle", "--seed", "4"];
    ok(d, &[&args[..], &["--out", "r1.json"]].concat());
    ok(d, &[&args[..], &["--out", "r2.json"]].concat());
    let r1 = fs::read(d.join("r1.json")).unwrap();
    assert_eq!(r1, fs::read(d.join("r2.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&r1).unwrap();
    let fp = load_bundle(d.join("isp.bundle")).unwrap().config.fingerprint();
    assert_eq!(report["config_fingerprint"], fp.as_str());
    let isps: Vec<&str> = report["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["isp"].as_str().unwrap())
        .collect();
    assert_eq!(isps, ["deep", "classical:auto", "classical:daylight"]);
    assert_eq!(report["reports"][0]["n_images"], 3);

    ok(d, &["sweep", "--data", "data", "--split", "train", "--bundle", "isp.bundle", "--kinds", "noise", "--out", "sw"]);
    let csv = fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    assert!(csv.contains(&fp));
    assert_eq!(csv.lines().filter(|l| l.starts_with("noise,")).count(), 10);
    assert!(d.join("sw/ber_noise.png").exists());
}

#[test]
fn ingest_reports_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "data", "--n", "3", "--crop", "32", "--scenes", "2", "--scene-size", "48"]);
    fs::remove_file(d.join("data/manifest.jsonl")).unwrap();
    let out = ok(d, &["ingest", "--root", "data"]);
    assert!(out.starts_with("3 pairs, 0 rejected"), "{out}");
    assert!(d.join("data/manifest.jsonl").exists());
}
