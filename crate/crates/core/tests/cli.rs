use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mtsrl::cli::{main_with, EXIT_CONFIG, EXIT_DATA, EXIT_OK};
use mtsrl::data::{write_long_csv, Dataset, Labels};
use mtsrl::synthetic::{sinusoid_classes, SinusoidClassConfig};
use mtsrl::trainer::read_loss_log;

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("mtsrl").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small labelled sinusoid split written as long CSV.
fn small_sinusoids(dir: &Path, n: usize, m: usize) -> (PathBuf, PathBuf) {
    let (train, test) = sinusoid_classes(&SinusoidClassConfig {
        n_train: n,
        n_test: n,
        length: 48,
        dims: m,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let (a, b) = (dir.join("train.csv"), dir.join("test.csv"));
    write_long_csv(&train, &a).unwrap();
    write_long_csv(&test, &b).unwrap();
    (a, b)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

const QUICK: &str = "[train]\niterations = 6\nbatch_size = 4\n[train.encoder]\nhidden = 8\nrepr_dims = 8\ndepth = 2\n";

fn pretrain_quick(dir: &Path, data: &Path, extra: &[&str]) -> PathBuf {
    let cfg = write_config(dir, QUICK);
    let out = dir.join("out");
    let mut args = vec!["pretrain", "--config", s(&cfg), "--data", s(data), "--output-dir", s(&out)];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), EXIT_OK);
    out
}

#[test]
fn pretrain_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = small_sinusoids(dir.path(), 12, 3);
    let out = pretrain_quick(dir.path(), &train, &[]);
    for f in ["checkpoint.bin", "loss_log.csv", "pretrain.resolved.toml"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(read_loss_log(out.join("loss_log.csv")).unwrap().len(), 6);
}

#[test]
fn resolved_snapshot_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = small_sinusoids(dir.path(), 8, 2);
    let out = pretrain_quick(dir.path(), &train, &["--seed", "9"]);
    let snapshot = out.join("pretrain.resolved.toml");
    let again = dir.path().join("again");
    assert_eq!(
        run(&["pretrain", "--config", s(&snapshot), "--output-dir", s(&again)]),
        EXIT_OK
    );
    for f in ["checkpoint.bin", "loss_log.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_train_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out = dir.path().join("out");
    assert_eq!(
        run(&["pretrain", "--config", s(&cfg), "--output-dir", s(&out)]),
        EXIT_CONFIG
    );
}

#[test]
fn binary_reports_the_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mtsrl"))
        .args(["pretrain", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.train"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[train]\nlearning_rate = 0.1\n");
    assert_eq!(run(&["pretrain", "--config", s(&cfg)]), EXIT_CONFIG);
}

#[test]
fn ablated_task_logs_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = small_sinusoids(dir.path(), 8, 2);
    let out = pretrain_quick(dir.path(), &train, &["--ablate", "temp"]);
    let log = read_loss_log(out.join("loss_log.csv")).unwrap();
    assert!(log.iter().all(|r| r.bundle.temp == 0.0));
    assert!(log.iter().any(|r| r.bundle.trans != 0.0));
}

#[test]
fn encode_writes_one_row_per_instance_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = small_sinusoids(dir.path(), 4, 3);
    let out = pretrain_quick(dir.path(), &train, &[]);
    let ckpt = out.join("checkpoint.bin");
    let mut bytes = Vec::new();
    for k in 0..2 {
        let reps = dir.path().join(format!("reps{k}.csv"));
        let code = run(&[
            "encode",
            "--checkpoint",
            s(&ckpt),
            "--data",
            s(&test),
            "--out",
            s(&reps),
            "--output-dir",
            s(&out),
        ]);
        assert_eq!(code, EXIT_OK);
        bytes.push(fs::read(&reps).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("instance_id,r1,"));
    assert_eq!(lines[1].split(',').count(), 1 + 8);
}

#[test]
fn encode_rejects_wrong_variable_count() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = small_sinusoids(dir.path(), 4, 3);
    let out = pretrain_quick(dir.path(), &train, &[]);
    let other = tempfile::tempdir().unwrap();
    let (wrong, _) = small_sinusoids(other.path(), 4, 2);
    let code = run(&[
        "encode",
        "--checkpoint",
        s(&out.join("checkpoint.bin")),
        "--data",
        s(&wrong),
        "--output-dir",
        s(&out),
    ]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn classification_report_has_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = small_sinusoids(dir.path(), 12, 3);
    let out = pretrain_quick(dir.path(), &train, &[]);
    let cfg = write_config(
        dir.path(),
        &format!("[data]\ntrain = {train:?}\ntest = {test:?}\n[eval]\ncheckpoint = {:?}\n", out.join("checkpoint.bin")),
    );
    assert_eq!(run(&["eval", "cls", "--config", s(&cfg), "--output-dir", s(&out)]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report_cls.json")).unwrap()).unwrap();
    let acc = report["metrics"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn zero_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[data]\ntest = \"series.csv\"\n[eval]\ncheckpoint = \"checkpoint.bin\"\n[eval.forecast]\nhorizon = 0\n",
    );
    assert_eq!(run(&["eval", "forecast", "--config", s(&cfg)]), EXIT_CONFIG);
}

#[test]
fn anomaly_without_labels_emits_scores_and_a_note() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_eq!(run(&["generate", "spikes", "--out", s(&gen), "--seed", "2"]), EXIT_OK);
    // the unlabelled prefix, shortened to keep the test quick
    let prefix = mtsrl::data::load_dataset(gen.join("prefix.csv"), &Default::default()).unwrap();
    let short = Dataset::single(prefix.instances[0].values.slice_rows(0, 300)).unwrap();
    assert!(matches!(short.labels, Labels::None));
    let series = dir.path().join("short.csv");
    write_long_csv(&short, &series).unwrap();
    let out = pretrain_quick(dir.path(), &series, &[]);
    let cfg = write_config(
        dir.path(),
        &format!(
            "[data]\ntest = {series:?}\n[eval]\ncheckpoint = {:?}\n[eval.anomaly]\ncontext = 16\n",
            out.join("checkpoint.bin")
        ),
    );
    assert_eq!(run(&["eval", "anomaly", "--config", s(&cfg), "--output-dir", s(&out)]), EXIT_OK);
    let scores = fs::read_to_string(out.join("anomaly_scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 301);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report_anomaly.json")).unwrap()).unwrap();
    assert!(report["metrics"].get("f1").is_none());
    assert!(report["notes"][0].as_str().unwrap().contains("no anomaly labels"));
}

#[test]
fn generate_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["generate", "ar1", "--out", s(dir.path()), "--seed", "1"]), EXIT_OK);
    let ds = mtsrl::data::load_dataset(
        dir.path().join("series.csv"),
        &mtsrl::data::LoadOptions {
            labels: mtsrl::data::LabelKind::Target,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!((ds.len(), ds.min_len(), ds.dims()), (1, 2000, 1));
    assert!(dir.path().join("generate.resolved.toml").is_file());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = mtsrl::cli::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
    }
}
