//! End-to-end runs of the requant binary over a temp workspace: pool
//! handling, the synthesize -> train -> classify/evaluate/localize chain,
//! determinism of artifacts, and error exits.

use std::path::Path;
use std::process::{Command, Output};

fn requant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_requant"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = requant(args);
    assert!(
        out.status.success(),
        "requant {:?} failed:\n{}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn qpool_roundtrip_and_split_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let pool_a = dir.path().join("a.json");
    let pool_b = dir.path().join("b.json");
    ok(&["qpool", "make", "--out", pool_a.to_str().unwrap(), "--size", "60", "--seed", "9"]);
    ok(&["qpool", "make", "--out", pool_b.to_str().unwrap(), "--size", "60", "--seed", "9"]);
    assert_eq!(read(&pool_a), read(&pool_b), "pool generation must be seeded");

    let train1 = dir.path().join("train1.json");
    let test1 = dir.path().join("test1.json");
    let train2 = dir.path().join("train2.json");
    let test2 = dir.path().join("test2.json");
    for (tr, te) in [(&train1, &test1), (&train2, &test2)] {
        ok(&[
            "qpool", "split",
            "--qpool", pool_a.to_str().unwrap(),
            "--qpool-split", "7:40",
            "--out-train", tr.to_str().unwrap(),
            "--out-test", te.to_str().unwrap(),
        ]);
    }
    assert_eq!(read(&train1), read(&train2));
    assert_eq!(read(&test1), read(&test2));

    let show = ok(&["qpool", "show", "--qpool", pool_a.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&show.stdout).contains("60 matrices"));
}

#[test]
fn synthesize_train_classify_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "synthesize", "--kind", "patches",
        "--out", data.to_str().unwrap(),
        "--count", "8", "--patch-size", "32", "--seed", "5",
    ]);
    assert!(data.join("manifest.json").is_file());
    let index: serde_json::Value =
        serde_json::from_slice(&read(&data.join("index.json"))).unwrap();
    assert_eq!(index["entries"].as_array().unwrap().len(), 16);

    // byte-identical resynthesis under the same seed
    let data2 = dir.path().join("data2");
    ok(&[
        "synthesize", "--kind", "patches",
        "--out", data2.to_str().unwrap(),
        "--count", "8", "--patch-size", "32", "--seed", "5",
    ]);
    assert_eq!(read(&data.join("index.json")), read(&data2.join("index.json")));
    assert_eq!(
        read(&data.join("patches/000000.jpg")),
        read(&data2.join("patches/000000.jpg"))
    );

    let run = |out: &Path| {
        ok(&[
            "train",
            "--data", data.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--b", "20", "--toy",
            "--epochs", "2", "--batch-size", "4",
            "--split", "50/50", "--seed", "1",
        ]);
    };
    let train_dir = dir.path().join("run");
    run(&train_dir);
    for file in ["model.ckpt", "history.json", "metrics.json", "manifest.json"] {
        assert!(train_dir.join(file).is_file(), "missing {file}");
    }

    // identical command + seed => byte-identical metrics
    let train_dir2 = dir.path().join("run2");
    run(&train_dir2);
    assert_eq!(read(&train_dir.join("metrics.json")), read(&train_dir2.join("metrics.json")));
    assert_eq!(read(&train_dir.join("history.json")), read(&train_dir2.join("history.json")));

    let model = train_dir.join("model.ckpt");
    let classify = ok(&[
        "classify",
        data.join("patches/000000.jpg").to_str().unwrap(),
        "--model", model.to_str().unwrap(),
    ]);
    let line = String::from_utf8(classify.stdout).unwrap();
    let mut parts = line.trim().split(' ');
    let label = parts.next().unwrap();
    let prob = parts.next().unwrap();
    assert!(label == "single" || label == "double", "label {label:?}");
    assert!(
        prob.len() == 6 && prob[2..].chars().all(|c| c.is_ascii_digit()),
        "P(double) must print with 4 decimals, got {prob:?}"
    );

    let eval_dir = dir.path().join("eval");
    let eval = ok(&[
        "evaluate",
        "--data", data.to_str().unwrap(),
        "--model", model.to_str().unwrap(),
        "--out", eval_dir.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&eval.stdout).contains("accuracy"));
    assert!(eval_dir.join("metrics.json").is_file());
    assert!(eval_dir.join("manifest.json").is_file());

    // feature dumps
    let feat_dir = dir.path().join("features");
    ok(&[
        "extract-features",
        "--data", data.to_str().unwrap(),
        "--out", feat_dir.to_str().unwrap(),
        "--b", "20",
    ]);
    assert!(feat_dir.join("000000.dqf").is_file());
    assert!(feat_dir.join("manifest.json").is_file());

    // localization over a small forged image, scored against its mask
    let forgery_dir = dir.path().join("forgeries");
    ok(&[
        "synthesize", "--kind", "blur",
        "--out", forgery_dir.to_str().unwrap(),
        "--count", "1", "--image-size", "320", "--region-size", "128",
        "--seed", "11",
    ]);
    let case = forgery_dir.join("case_000");
    let loc_dir = dir.path().join("loc");
    ok(&[
        "localize",
        case.join("forged.jpg").to_str().unwrap(),
        "--model", model.to_str().unwrap(),
        "--out", loc_dir.to_str().unwrap(),
        "--mask", case.join("mask.pgm").to_str().unwrap(),
    ]);
    for file in ["heatmap.pgm", "tamper_map.json", "metrics.json", "manifest.json"] {
        assert!(loc_dir.join(file).is_file(), "missing {file}");
    }
}

#[test]
fn evaluate_on_empty_dataset_fails_with_typed_message() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(
        data.join("index.json"),
        "{\"patch_size\": 32, \"entries\": []}",
    )
    .unwrap();

    // a model to point at
    let patches = dir.path().join("patches");
    ok(&[
        "synthesize", "--kind", "patches",
        "--out", patches.to_str().unwrap(),
        "--count", "4", "--patch-size", "32", "--seed", "2",
    ]);
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data", patches.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
        "--b", "20", "--toy", "--epochs", "1", "--batch-size", "4",
        "--split", "50/50", "--seed", "1",
    ]);

    let out = requant(&[
        "evaluate",
        "--data", data.to_str().unwrap(),
        "--model", run.join("model.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("empty test set"), "stderr: {stderr}");
}

#[test]
fn unknown_flags_exit_with_usage_error() {
    let out = requant(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_var_provides_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_requant"))
        .args(["synthesize", "--kind", "patches", "--count", "2", "--patch-size", "16", "--seed", "4"])
        .env("REQUANT_OUT", dir.path())
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("synthesize/index.json").is_file());
    assert!(dir.path().join("synthesize/manifest.json").is_file());

    // without --out and without the env var the command must fail cleanly
    let out = Command::new(env!("CARGO_BIN_EXE_requant"))
        .args(["synthesize", "--kind", "patches", "--count", "1"])
        .env_remove("REQUANT_OUT")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("REQUANT_OUT"));
}
