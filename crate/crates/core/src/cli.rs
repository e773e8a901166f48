//! Command-line front end: `pretrain`, `encode`, `eval` and `generate`.
//!
//! Every command reads an optional TOML [`RunConfig`], applies flag
//! overrides, validates the result and writes it back as
//! `<output_dir>/<command>.resolved.toml` before doing any work. Exit codes:
//! 0 success, 2 configuration error, 3 data error, 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    load_dataset, normalize, write_long_csv, DataFormat, Dataset, LabelKind, Labels, LoadOptions, MissingPolicy,
    TimeSeriesInstance,
};
use crate::downstream::{
    anomaly_scores, detect, encode_dataset, eval_forecast, fit_probe, AnomalyConfig, ForecastConfig, ProbeConfig,
    Report,
};
use crate::error::{Error, Result};
use crate::synthetic::{ar1, sinusoid_classes, spiky_sinusoid, split_windows, SinusoidClassConfig, SpikeConfig};
use crate::trainer::{load_checkpoint, pretrain, save_checkpoint, save_loss_log, Checkpoint, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Default window length when a single long series is pretrained on.
pub const DEFAULT_PRETRAIN_WINDOW: usize = 128;

/// Where data comes from and how to read it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset id used in reports; defaults to the file stem.
    pub name: Option<String>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub format: DataFormat,
    pub missing: MissingPolicy,
    pub labels: LabelKind,
    /// Pretraining window for long series; single-series datasets are
    /// always windowed.
    pub window: Option<usize>,
}

impl DataSection {
    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            missing: self.missing,
            labels: self.labels,
        }
    }

    fn dataset_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.train
                .as_ref()
                .or(self.test.as_ref())
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "unnamed".into())
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeSection {
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<output_dir>/representations.csv`.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub probe: ProbeConfig,
    pub forecast: ForecastConfig,
    pub anomaly: AnomalyConfig,
}

/// Top-level configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `train.seed` and `eval.probe.seed` when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub encode: EncodeSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: default_output_dir(),
            data: DataSection::default(),
            train: TrainConfig::default(),
            encode: EncodeSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pushes the top-level seed into the sections that consume one.
    fn resolve_seed(&mut self) {
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.eval.probe.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.forecast.validate()?;
        self.eval.anomaly.validate()?;
        if self.eval.probe.folds < 2 {
            return Err(Error::Config("eval.probe.folds must be ≥ 2".into()));
        }
        if self.data.window.is_some_and(|w| w < 4) {
            return Err(Error::Config("data.window must be ≥ 4".into()));
        }
        Ok(())
    }

    fn snapshot(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join(format!("{command}.resolved.toml"));
        fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}

fn require<'a>(value: &'a Option<PathBuf>, field: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{field} is required (set it in the config file or by flag)")))
}

#[derive(Parser, Debug)]
#[command(name = "mtsrl", version, about = "Multi-task self-supervised time-series representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pretrain an encoder and write checkpoint, loss log and config snapshot.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Training dataset (overrides `data.train`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Disable a component: cont, temp, trans or uw. Repeatable.
        #[arg(long)]
        ablate: Vec<String>,
    },
    /// Write instance-level representations as CSV.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset to encode (overrides `data.train`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a downstream task.
    Eval {
        task: EvalTask,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write a bundled synthetic dataset.
    Generate {
        kind: SyntheticKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    Cls,
    Forecast,
    Anomaly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SyntheticKind {
    /// Three-class multivariate sinusoids (`train.csv`, `test.csv`).
    Sinusoid,
    /// A single AR(1) series (`series.csv`).
    Ar1,
    /// A sinusoid with labelled spikes (`series.csv`) and its clean prefix (`prefix.csv`).
    Spikes,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::NonFiniteLoss { .. } | Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    cfg.resolve_seed();
    Ok(cfg)
}

/// Runs a parsed command and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Pretrain { common, data, ablate } => {
            let mut cfg = resolve(&common)?;
            if data.is_some() {
                cfg.data.train = data;
            }
            for a in &ablate {
                cfg.train.tasks.ablate(a)?;
            }
            cmd_pretrain(cfg)
        }
        Command::Encode {
            common,
            checkpoint,
            data,
            out,
        } => {
            let mut cfg = resolve(&common)?;
            if checkpoint.is_some() {
                cfg.encode.checkpoint = checkpoint;
            }
            if data.is_some() {
                cfg.data.train = data;
            }
            if out.is_some() {
                cfg.encode.out = out;
            }
            cmd_encode(cfg)
        }
        Command::Eval {
            task,
            common,
            checkpoint,
        } => {
            let mut cfg = resolve(&common)?;
            if checkpoint.is_some() {
                cfg.eval.checkpoint = checkpoint;
            }
            cmd_eval(task, cfg)
        }
        Command::Generate { kind, out, seed } => cmd_generate(kind, &out, seed),
    }
}

/// Parses arguments, runs, prints errors and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Splits single-series datasets (or all, when `window` is set) into
/// pretraining windows.
fn pretraining_view(ds: Dataset, window: Option<usize>) -> Result<Dataset> {
    let w = match (window, ds.len()) {
        (Some(w), _) => w,
        (None, 1) => DEFAULT_PRETRAIN_WINDOW,
        _ => return Ok(ds),
    };
    let mut instances = Vec::new();
    for inst in &ds.instances {
        instances.extend(split_windows(&inst.values, w, w / 2)?.instances);
    }
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.id = i as i64;
    }
    Dataset::new(instances, Labels::None)
}

pub fn cmd_pretrain(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let path = require(&cfg.data.train, "data.train")?.clone();
    let raw = load_dataset(&path, &cfg.data.load_options())?;
    let ds = normalize(&pretraining_view(raw, cfg.data.window)?)?;
    cfg.train.iterations = Some(cfg.train.resolved_iterations(&ds));
    let snapshot = cfg.snapshot("pretrain")?;
    let out = pretrain(&ds, &cfg.train)?;
    let ckpt = cfg.output_dir.join("checkpoint.bin");
    let log = cfg.output_dir.join("loss_log.csv");
    save_checkpoint(&out.checkpoint, &ckpt)?;
    save_loss_log(&out.log, &log)?;
    Ok(vec![ckpt, log, snapshot])
}

/// Applies the checkpoint's normalization, or fits one on `ds` itself.
fn normalized_for(ds: &Dataset, ckpt: &Checkpoint) -> Result<Dataset> {
    if ds.dims() != ckpt.input_dims() {
        return Err(Error::DimensionMismatch {
            expected: ckpt.input_dims(),
            found: ds.dims(),
        });
    }
    match &ckpt.normalization {
        Some(n) => ds.normalized_with(n),
        None => normalize(ds),
    }
}

pub fn cmd_encode(cfg: RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ckpt_path = require(&cfg.encode.checkpoint, "encode.checkpoint")?;
    let data_path = require(&cfg.data.train, "data.train")?;
    let snapshot = cfg.snapshot("encode")?;
    let ckpt = load_checkpoint(ckpt_path)?;
    let ds = normalized_for(&load_dataset(data_path, &cfg.data.load_options())?, &ckpt)?;
    let reps = encode_dataset(&ds, &ckpt.model.encoder)?;
    let out = cfg
        .encode
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("representations.csv"));
    let mut w = csv::Writer::from_path(&out).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["instance_id".to_string()];
    header.extend((1..=reps.cols()).map(|j| format!("r{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, inst) in ds.instances.iter().enumerate() {
        let mut rec = vec![inst.id.to_string()];
        rec.extend(reps.row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(vec![out, snapshot])
}

fn single_series(ds: &Dataset, what: &str) -> Result<crate::autodiff::Tensor> {
    if ds.len() != 1 {
        return Err(Error::Data(format!("{what} expects a single series, found {} instances", ds.len())));
    }
    Ok(ds.instances[0].values.clone())
}

pub fn cmd_eval(task: EvalTask, cfg: RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ckpt_path = require(&cfg.eval.checkpoint, "eval.checkpoint")?;
    let name = match task {
        EvalTask::Cls => "cls",
        EvalTask::Forecast => "forecast",
        EvalTask::Anomaly => "anomaly",
    };
    if task == EvalTask::Cls {
        require(&cfg.data.train, "data.train")?;
        require(&cfg.data.test, "data.test")?;
    } else if cfg.data.test.is_none() {
        require(&cfg.data.train, "data.test")?;
    }
    let snapshot = cfg.snapshot(&format!("eval_{name}"))?;
    let ckpt = load_checkpoint(ckpt_path)?;
    let opts = cfg.data.load_options();
    let mut report = Report::new(name, &cfg.data.dataset_name(), &ckpt.fingerprint);
    let mut written = Vec::new();
    match task {
        EvalTask::Cls => {
            let opts = LoadOptions {
                labels: LabelKind::Class,
                ..opts
            };
            let train = normalized_for(&load_dataset(require(&cfg.data.train, "data.train")?, &opts)?, &ckpt)?;
            let test = normalized_for(&load_dataset(require(&cfg.data.test, "data.test")?, &opts)?, &ckpt)?;
            let (ytr, yte) = match (train.class_labels(), test.class_labels()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Data("classification needs a label column in train and test".into())),
            };
            let enc = &ckpt.model.encoder;
            let probe = fit_probe(&encode_dataset(&train, enc)?, ytr, &cfg.eval.probe)?;
            let pred = probe.predict(&encode_dataset(&test, enc)?)?;
            let hits = pred.iter().zip(yte).filter(|(a, b)| a == b).count();
            report = report
                .metric("accuracy", hits as f64 / yte.len() as f64)
                .metric("n_train", ytr.len() as f64)
                .metric("n_test", yte.len() as f64);
            if let Some(c) = probe.c {
                report = report.metric("probe_c", c);
            }
        }
        EvalTask::Forecast => {
            let path = cfg.data.test.as_ref().or(cfg.data.train.as_ref()).expect("checked above");
            let opts = LoadOptions {
                labels: LabelKind::Target,
                ..opts
            };
            let series = single_series(&load_dataset(path, &opts)?, "forecast")?;
            let r = eval_forecast(&series, &ckpt.model.encoder, &cfg.eval.forecast)?;
            report = report
                .metric("mse", r.mse)
                .metric("mae", r.mae)
                .metric("rmse", r.rmse())
                .metric("baseline_mse", r.baseline_mse)
                .metric("baseline_mae", r.baseline_mae)
                .metric("ridge_alpha", r.alpha)
                .metric("horizon", cfg.eval.forecast.horizon as f64);
        }
        EvalTask::Anomaly => {
            let path = cfg.data.test.as_ref().or(cfg.data.train.as_ref()).expect("checked above");
            let opts = LoadOptions {
                labels: LabelKind::Anomaly,
                ..opts
            };
            let ds = normalized_for(&load_dataset(path, &opts)?, &ckpt)?;
            let series = single_series(&ds, "anomaly detection")?;
            let labels = match &ds.labels {
                Labels::Anomaly(a) => Some(a[0].as_slice()),
                _ => None,
            };
            let scores = anomaly_scores(&series, &ckpt.model.encoder, &cfg.eval.anomaly)?;
            let d = detect(&scores, labels, &cfg.eval.anomaly)?;
            let scores_path = cfg.output_dir.join("anomaly_scores.csv");
            let mut w = csv::Writer::from_path(&scores_path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
            w.write_record(["timestamp", "score", "flag"]).map_err(csv_err)?;
            for (t, (s, f)) in scores.iter().zip(&d.flags).enumerate() {
                w.write_record([t.to_string(), s.to_string(), u8::from(*f).to_string()])
                    .map_err(csv_err)?;
            }
            w.flush()?;
            written.push(scores_path);
            report = report
                .metric("threshold", d.threshold)
                .metric("flagged", d.flags.iter().filter(|f| **f).count() as f64);
            match d.metrics {
                Some(m) => {
                    report = report
                        .metric("precision", m.precision)
                        .metric("recall", m.recall)
                        .metric("f1", m.f1);
                }
                None => report
                    .notes
                    .push("no anomaly labels in the data; precision, recall and f1 omitted".into()),
            }
        }
    }
    let report_path = cfg.output_dir.join(format!("report_{name}.json"));
    report.save(&report_path)?;
    written.push(report_path);
    written.push(snapshot);
    Ok(written)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GeneratorSnapshot {
    Sinusoid(SinusoidClassConfig),
    Ar1 { length: usize, phi: f64, seed: u64 },
    Spikes(SpikeConfig),
}

pub fn cmd_generate(kind: SyntheticKind, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let snapshot = match kind {
        SyntheticKind::Sinusoid => {
            let cfg = SinusoidClassConfig {
                seed,
                ..Default::default()
            };
            let (train, test) = sinusoid_classes(&cfg)?;
            for (ds, file) in [(&train, "train.csv"), (&test, "test.csv")] {
                write_long_csv(ds, out.join(file))?;
                written.push(out.join(file));
            }
            GeneratorSnapshot::Sinusoid(cfg)
        }
        SyntheticKind::Ar1 => {
            let (length, phi) = (2000, 0.9);
            let ds = Dataset::single(ar1(length, phi, seed)?)?;
            write_long_csv(&ds, out.join("series.csv"))?;
            written.push(out.join("series.csv"));
            GeneratorSnapshot::Ar1 { length, phi, seed }
        }
        SyntheticKind::Spikes => {
            let cfg = SpikeConfig {
                seed,
                ..Default::default()
            };
            let (x, labels) = spiky_sinusoid(&cfg)?;
            let prefix = Dataset::single(x.slice_rows(0, cfg.clean_prefix))?;
            write_long_csv(&prefix, out.join("prefix.csv"))?;
            let full = Dataset::new(vec![TimeSeriesInstance { id: 0, values: x }], Labels::Anomaly(vec![labels]))?;
            write_long_csv(&full, out.join("series.csv"))?;
            written.push(out.join("prefix.csv"));
            written.push(out.join("series.csv"));
            GeneratorSnapshot::Spikes(cfg)
        }
    };
    let path = out.join("generate.resolved.toml");
    fs::write(&path, toml::to_string(&snapshot).map_err(|e| Error::Config(e.to_string()))?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[train]\nlearning_rate = 0.1"), Err(Error::Config(_))));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::from_toml("seed = 7\n[train]\nlr = 0.002\n[eval.forecast]\nhorizon = 12").unwrap();
        cfg.resolve_seed();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.eval.probe.seed, 7);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.train.fingerprint(), cfg.train.fingerprint());
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::DimensionMismatch {
                expected: 1,
                found: 2
            }),
            EXIT_DATA
        );
        assert_eq!(exit_code(&Error::Numeric("x".into())), EXIT_NUMERIC);
    }

    #[test]
    fn zero_horizon_fails_validation() {
        let cfg = RunConfig::from_toml("[eval.forecast]\nhorizon = 0").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
