use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cutleak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutleak")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

const BLOBS: &[&str] = &[
    "--dataset",
    "blobs",
    "--blob-classes",
    "3",
    "--blob-dim",
    "6",
    "--blob-counts",
    "40,30,20",
    "--blob-centroid-scale",
    "3",
    "--blob-within-std",
    "0.5",
    "--widths",
    "6,16,8,3",
    "--epochs",
    "2",
    "--batch",
    "10",
];

fn with_blobs<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(BLOBS).chain(tail).copied().collect()
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let out = cutleak(&["train", "--data-dir", missing.to_str().unwrap(), "--tape", &path(dir.path(), "t")]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains(&missing.join("train-images-idx3-ubyte").display().to_string()), "{err}");
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "cut = 1\ncutt = 2\n").unwrap();
    let out = cutleak(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`cutt`"), "{}", stderr(&out));
}

#[test]
fn zero_learning_rate_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (tape, model) = (path(dir.path(), "t.sltape"), path(dir.path(), "m.json"));
    let out = cutleak(&with_blobs(&["train"], &["--lr", "0", "--tape", &tape, "--model", &model]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning: lr is 0, model will not learn"));
    assert!(PathBuf::from(&tape).exists() && PathBuf::from(&model).exists());
}

#[test]
fn train_then_attack_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let (tape, model) = (path(dir.path(), "t.sltape"), path(dir.path(), "m.json"));
    let out = cutleak(&with_blobs(&["train"], &["--tape", &tape, "--model", &model]));
    assert!(out.status.success(), "{}", stderr(&out));
    let recorded = cutleak::Tape::load(Path::new(&tape)).unwrap();
    let first_epoch = recorded.entries.iter().filter(|e| e.epoch == 0).count();
    assert_eq!(recorded.len(), 2 * first_epoch);

    let csv = path(dir.path(), "attack.csv");
    let summary = path(dir.path(), "summary.json");
    let out = cutleak(&with_blobs(&["attack"], &["--tape", &tape, "--out", &csv, "--summary", &summary]));
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + first_epoch);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let accuracy = json["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));

    let out = cutleak(&["inspect-tape", &tape]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(&recorded.len().to_string()), "{text}");
}

#[test]
fn anchor_free_with_a_balanced_prior_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (tape, model) = (path(dir.path(), "t.sltape"), path(dir.path(), "m.json"));
    assert!(cutleak(&with_blobs(&["train"], &["--tape", &tape, "--model", &model])).status.success());
    let out = cutleak(&with_blobs(
        &["attack"],
        &["--tape", &tape, "--anchor-free", "true", "--class-prior", "1,1,1", "--out", &path(dir.path(), "a.csv")],
    ));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("requires strictly biased class prior"), "{}", stderr(&out));
}

#[test]
fn sweep_reports_failed_arms_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "sweep.csv");
    let out = cutleak(&with_blobs(&["sweep"], &["--axis", "cut", "--values", "1,2,7", "--out", &csv]));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "axis,value,source,accuracy,model_test_accuracy,error");
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines.iter().filter(|l| l.starts_with("cut,7,")).all(|l| !l.ends_with(',')));
}
