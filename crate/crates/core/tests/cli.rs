//! The `deeplight` binary: verbs, determinism and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn deeplight(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deeplight"))
        .args(args)
        .current_dir(cwd)
        .env("DEEPLIGHT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = walkdir::WalkDir::new(dir)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().display().to_string();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

const GEN_SMALL: [&str; 12] = ["--scenes", "8", "--seed", "7", "--hr-size", "64", "--val-frac", "0.25", "--test-frac", "0.25", "--set", "warp_max_px=4"];

#[test]
fn gen_is_reproducible_and_reports_darkness() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["gen", "--out", out];
        args.extend(GEN_SMALL);
        let o = deeplight(&args, tmp.path());
        assert_eq!(code(&o), 0, "{}", text(&o));
        let line = text(&o);
        let frac: f64 = line.split("dark fraction ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert!(frac >= 0.9, "{line}");
    }
    assert_eq!(tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
}

#[test]
fn gen_rejects_zero_scenes_and_unwritable_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let o = deeplight(&["gen", "--out", "d", "--scenes", "0"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("need ≥ 1 scene"), "{}", text(&o));

    std::fs::write(tmp.path().join("file"), b"x").unwrap();
    let o = deeplight(&["gen", "--out", "file/sub", "--scenes", "2", "--hr-size", "64", "--set", "warp_max_px=4"], tmp.path());
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&deeplight(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&deeplight(&["train", "--out", "x", "--ablation", "no-fun"], tmp.path())), 1);
    std::fs::write(tmp.path().join("bad.cfg"), "steps = 0\n").unwrap();
    let o = deeplight(&["train", "--config", "bad.cfg", "--out", "x"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("steps"));
    assert_eq!(code(&deeplight(&["--help"], tmp.path())), 0);
}

#[test]
fn train_eval_and_metrics_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["gen", "--out", "data"];
    args.extend(GEN_SMALL);
    assert_eq!(code(&deeplight(&args, tmp.path())), 0);
    let cfg = "model.lr_h = 8\nmodel.lr_w = 8\nmodel.base_channels = 8\nmodel.num_res_blocks = 1\nsteps = 6\neval_every = 3\n";
    std::fs::write(tmp.path().join("run.cfg"), cfg).unwrap();

    let o = deeplight(&["train", "--data", "data", "--config", "run.cfg", "--out", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let o = deeplight(
        &["eval", "--data", "data", "--ckpt", "run/final.dlck", "--split", "test", "--report", "r.json", "--baseline", "bicubic"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("r.json")).unwrap()).unwrap();
    assert!(doc["model"]["aggregate"]["psnr"].as_f64().unwrap().is_finite());
    assert!(doc["baseline_bicubic"]["aggregate"]["psnr"].as_f64().is_some());

    let o = deeplight(&["metrics", "data/scene_0000/hr_ntl.dlt", "data/scene_0000/hr_ntl.dlt", "--report", "m.json"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(text(&o).contains("exact_match"));

    // data and format problems exit with 2
    let o = deeplight(&["eval", "--data", "nowhere", "--ckpt", "run/final.dlck", "--report", "r.json"], tmp.path());
    assert_eq!(code(&o), 2);
    std::fs::write(tmp.path().join("junk.dlck"), b"not a checkpoint").unwrap();
    let o = deeplight(&["eval", "--data", "data", "--ckpt", "junk.dlck", "--report", "r.json"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("byte 0"), "{}", text(&o));

    // a diverging run exits with 3 and leaves the last finite parameters
    std::fs::write(tmp.path().join("nan.cfg"), format!("{cfg}optim.lr = 1e30\n")).unwrap();
    let o = deeplight(&["train", "--data", "data", "--config", "nan.cfg", "--out", "nan"], tmp.path());
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(tmp.path().join("nan/last_finite.dlck").exists());
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_deeplight"))
        .args(["metrics", "a", "b"])
        .current_dir(tmp.path())
        .env("DEEPLIGHT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("DEEPLIGHT_THREADS"));
}
