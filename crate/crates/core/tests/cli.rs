use std::path::Path;
use std::process::{Command, Output};

fn selfadapt(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfadapt"))
        .env("SAT_OUTPUT_ROOT", root)
        .args(args)
        .output()
        .expect("binary runs")
}

const TINY: &[&str] = &[
    "--set", "data.per_class=30",
    "--set", "data.dim=6",
    "--set", "data.val_count=60",
    "--set", "model.hidden=8",
    "--set", "train.epochs=3",
    "--set", "train.batch_size=32",
];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    TINY.iter().chain(extra).copied().collect()
}

#[test]
fn train_is_repeatable_through_the_cli() {
    let root = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        let mut args = vec!["train"];
        args.extend(with(&["--set", "sat.start_epoch=1"]));
        let set = format!("output.dir={dir}");
        args.extend(["--set", &set]);
        let out = selfadapt(root.path(), &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["trial_0/epochs.csv", "trial_0/recovery_confusion.csv", "trial_0/recovery_weights.csv"] {
        let a = std::fs::read(root.path().join("a").join(file)).unwrap();
        let b = std::fs::read(root.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn config_errors_exit_with_one() {
    let root = tempfile::tempdir().unwrap();
    let out = selfadapt(root.path(), &["train", "--set", "optim.momentum=1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = selfadapt(root.path(), &["train", "--set", "no.such.key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no.such.key"));
}

#[test]
fn divergence_exits_with_two() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend(with(&["--set", "optim.lr=1e200", "--set", "optim.momentum=0"]));
    let out = selfadapt(root.path(), &args);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupt_then_eval_and_recover() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend(with(&["--set", "output.dir=run"]));
    assert!(selfadapt(root.path(), &args).status.success());

    let snap = root.path().join("ds.satd");
    let mut args = vec!["corrupt", "--out", snap.to_str().unwrap()];
    args.extend(TINY);
    assert!(selfadapt(root.path(), &args).status.success());

    let model = root.path().join("run/trial_0/model.satm");
    let out = selfadapt(
        root.path(),
        &["eval", "--model", model.to_str().unwrap(), "--data", snap.to_str().unwrap(),
          "--epsilon", "0.05", "--lo", "-100", "--hi", "100", "--steps", "3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["robust"]["robust_accuracy"].as_f64().unwrap() <= report["clean_accuracy"].as_f64().unwrap());

    let targets = root.path().join("run/trial_0/targets.satt");
    let train = root.path().join("run/train.satd");
    let report_dir = root.path().join("report");
    let out = selfadapt(
        root.path(),
        &["recover-report", "--targets", targets.to_str().unwrap(), "--data", train.to_str().unwrap(),
          "--out", report_dir.to_str().unwrap()],
    );
    assert!(out.status.success());
    assert!(report_dir.join("confusion.csv").exists());
}
