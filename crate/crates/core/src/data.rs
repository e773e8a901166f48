//! Dataset ingestion, normalization and batching.
//!
//! Two on-disk layouts are understood:
//!
//! * long CSV with a header `instance_id,timestamp,v1,...,vm[,label]`, one
//!   row per (instance, timestamp);
//! * tab-separated matrices, one instance per `*.tsv` file in a directory
//!   (optionally with a `labels.txt` of one integer class per line), or
//!   several matrices in one file separated by blank lines.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SeededRng, Stream};

/// One multivariate series `[T, m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesInstance {
    pub id: i64,
    pub values: Tensor,
}

impl TimeSeriesInstance {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    None,
    /// One class per instance.
    Class(Vec<i64>),
    /// One flag per timestamp per instance.
    Anomaly(Vec<Vec<bool>>),
    /// One real target per timestamp per instance.
    Target(Vec<Vec<f64>>),
}

/// Per-variable z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Variables with (numerically) zero variance are only centered.
    pub zero_variance: Vec<bool>,
}

const ZERO_VARIANCE: f64 = 1e-12;

impl Normalization {
    /// Fits statistics over every timestamp of every instance (population std).
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let m = ds.dims();
        let mut sum = vec![0.0; m];
        let mut count = 0usize;
        for inst in &ds.instances {
            for r in 0..inst.len() {
                for (s, v) in sum.iter_mut().zip(inst.values.row(r)) {
                    *s += v;
                }
            }
            count += inst.len();
        }
        if count == 0 {
            return Err(Error::Data("cannot normalize an empty dataset".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; m];
        for inst in &ds.instances {
            for r in 0..inst.len() {
                for ((s, v), mu) in sq.iter_mut().zip(inst.values.row(r)).zip(&mean) {
                    *s += (v - mu) * (v - mu);
                }
            }
        }
        let std: Vec<f64> = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        let zero_variance = std
            .iter()
            .zip(&mean)
            .map(|(s, mu)| *s <= ZERO_VARIANCE * mu.abs().max(1.0))
            .collect();
        Ok(Self {
            mean,
            std,
            zero_variance,
        })
    }

    pub fn apply_value(&self, j: usize, v: f64) -> f64 {
        if self.zero_variance[j] {
            v - self.mean[j]
        } else {
            (v - self.mean[j]) / self.std[j]
        }
    }

    pub fn invert_value(&self, j: usize, v: f64) -> f64 {
        if self.zero_variance[j] {
            v + self.mean[j]
        } else {
            v * self.std[j] + self.mean[j]
        }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let c = x.cols();
        for row in out.data_mut().chunks_mut(c) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.apply_value(j, *v);
            }
        }
        out
    }

    pub fn invert(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let c = x.cols();
        for row in out.data_mut().chunks_mut(c) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.invert_value(j, *v);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub instances: Vec<TimeSeriesInstance>,
    pub labels: Labels,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    /// Builds a dataset, checking shared width, `T ≥ 2`, finiteness and
    /// label alignment.
    pub fn new(instances: Vec<TimeSeriesInstance>, labels: Labels) -> Result<Self> {
        if let Some(first) = instances.first() {
            let m = first.dims();
            if m == 0 {
                return Err(Error::Data("instances need at least one variable".into()));
            }
            for inst in &instances {
                if inst.dims() != m {
                    return Err(Error::Data(format!(
                        "instance {} has {} variables, expected {m}",
                        inst.id,
                        inst.dims()
                    )));
                }
                if inst.len() < 2 {
                    return Err(Error::Data(format!(
                        "instance {} has {} timestamps; at least 2 are required",
                        inst.id,
                        inst.len()
                    )));
                }
                if !inst.values.all_finite() {
                    return Err(Error::Data(format!("instance {} has non-finite values", inst.id)));
                }
            }
        }
        let n = instances.len();
        let aligned = match &labels {
            Labels::None => true,
            Labels::Class(c) => c.len() == n,
            Labels::Anomaly(a) => a.len() == n && a.iter().zip(&instances).all(|(l, i)| l.len() == i.len()),
            Labels::Target(y) => y.len() == n && y.iter().zip(&instances).all(|(l, i)| l.len() == i.len()),
        };
        if !aligned {
            return Err(Error::Data("labels are not aligned with instances".into()));
        }
        Ok(Self {
            instances,
            labels,
            normalization: None,
        })
    }

    /// Single-series dataset (forecasting / anomaly data).
    pub fn single(values: Tensor) -> Result<Self> {
        Self::new(vec![TimeSeriesInstance { id: 0, values }], Labels::None)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Number of variables `m` (0 for an empty dataset).
    pub fn dims(&self) -> usize {
        self.instances.first().map_or(0, TimeSeriesInstance::dims)
    }

    pub fn min_len(&self) -> usize {
        self.instances.iter().map(TimeSeriesInstance::len).min().unwrap_or(0)
    }

    /// Total number of scalar observations `Σ T_i · m`.
    pub fn observation_count(&self) -> usize {
        self.instances.iter().map(|i| i.values.len()).sum()
    }

    pub fn class_labels(&self) -> Option<&[i64]> {
        match &self.labels {
            Labels::Class(c) => Some(c),
            _ => None,
        }
    }

    /// Applies previously fitted statistics (e.g. from the training split).
    pub fn normalized_with(&self, norm: &Normalization) -> Result<Dataset> {
        if norm.mean.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: norm.mean.len(),
                found: self.dims(),
            });
        }
        let instances = self
            .instances
            .iter()
            .map(|i| TimeSeriesInstance {
                id: i.id,
                values: norm.apply(&i.values),
            })
            .collect();
        Ok(Dataset {
            instances,
            labels: self.labels.clone(),
            normalization: Some(norm.clone()),
        })
    }
}

/// Fits per-variable z-scores on `ds` and applies them.
pub fn normalize(ds: &Dataset) -> Result<Dataset> {
    let norm = Normalization::fit(ds)?;
    ds.normalized_with(&norm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    #[default]
    Csv,
    Tsv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    ForwardFill,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    #[default]
    Class,
    Anomaly,
    Target,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadOptions {
    pub format: DataFormat,
    pub missing: MissingPolicy,
    pub labels: LabelKind,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "nan" | "NaN" | "NAN" | "NA" | "null")
}

fn parse_cell(path: &Path, cell: &str, line: usize, column: &str) -> Result<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(Error::ingest(
            path,
            format!("non-numeric value {cell:?} at line {line}, column {column}"),
        )),
    }
}

/// Resolves missing cells of a `[T, m]` series according to `policy`.
/// `lines[r]` is the source line of row `r`, used in error messages.
fn fill_missing(
    path: &Path,
    rows: Vec<Vec<Option<f64>>>,
    lines: &[usize],
    columns: &[String],
    policy: MissingPolicy,
) -> Result<Tensor> {
    let t = rows.len();
    let m = columns.len();
    let mut data = vec![0.0; t * m];
    for j in 0..m {
        let mut last: Option<f64> = None;
        let mut leading = 0usize;
        for (r, row) in rows.iter().enumerate() {
            match (row[j], policy) {
                (Some(v), _) => {
                    if last.is_none() {
                        // back-fill leading gaps with the first observation
                        for k in 0..leading {
                            data[k * m + j] = v;
                        }
                    }
                    data[r * m + j] = v;
                    last = Some(v);
                }
                (None, MissingPolicy::Reject) => {
                    return Err(Error::ingest(
                        path,
                        format!("missing value at line {}, column {}", lines[r], columns[j]),
                    ));
                }
                (None, MissingPolicy::ForwardFill) => match last {
                    Some(v) => data[r * m + j] = v,
                    None => leading += 1,
                },
            }
        }
        if last.is_none() {
            return Err(Error::ingest(path, format!("column {} has no observed values", columns[j])));
        }
    }
    Tensor::matrix(t, m, data)
}

/// Reads a dataset from `path`.
pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::ingest(path, "file does not exist"));
    }
    match opts.format {
        DataFormat::Csv => load_long_csv(path, opts),
        DataFormat::Tsv if path.is_dir() => load_tsv_dir(path, opts),
        DataFormat::Tsv => load_tsv_file(path, opts),
    }
}

struct PendingInstance {
    id: i64,
    rows: Vec<(f64, Vec<Option<f64>>, usize, Option<String>)>,
}

fn load_long_csv(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::ingest(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ingest(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 || header[0] != "instance_id" || header[1] != "timestamp" {
        return Err(Error::ingest(
            path,
            "header must start with instance_id,timestamp followed by value columns",
        ));
    }
    let has_label = header.last().is_some_and(|h| h == "label");
    let value_cols: Vec<String> = header[2..header.len() - usize::from(has_label)].to_vec();
    if value_cols.is_empty() {
        return Err(Error::ingest(path, "no value columns"));
    }

    let mut order: Vec<i64> = Vec::new();
    let mut pending: HashMap<i64, PendingInstance> = HashMap::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::ingest(path, format!("line {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::ingest(
                path,
                format!("line {line} has {} fields, expected {}", rec.len(), header.len()),
            ));
        }
        let id: i64 = rec[0]
            .parse()
            .map_err(|_| Error::ingest(path, format!("bad instance_id {:?} at line {line}", &rec[0])))?;
        let ts: f64 = rec[1]
            .parse()
            .map_err(|_| Error::ingest(path, format!("bad timestamp {:?} at line {line}", &rec[1])))?;
        let values = value_cols
            .iter()
            .enumerate()
            .map(|(j, name)| parse_cell(path, &rec[2 + j], line, name))
            .collect::<Result<Vec<_>>>()?;
        let label = has_label.then(|| rec[header.len() - 1].to_string());
        pending
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                PendingInstance { id, rows: Vec::new() }
            })
            .rows
            .push((ts, values, line, label));
    }
    if order.is_empty() {
        return Err(Error::ingest(path, "no data rows"));
    }

    let mut instances = Vec::with_capacity(order.len());
    let mut class = Vec::new();
    let mut anomaly = Vec::new();
    let mut target = Vec::new();
    for id in order {
        let mut p = pending.remove(&id).expect("recorded id");
        p.rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lines: Vec<usize> = p.rows.iter().map(|r| r.2).collect();
        let labels: Vec<Option<String>> = p.rows.iter().map(|r| r.3.clone()).collect();
        let rows = p.rows.into_iter().map(|r| r.1).collect();
        let values = fill_missing(path, rows, &lines, &value_cols, opts.missing)?;
        if has_label {
            let parse_err = |s: &str, line: usize| Error::ingest(path, format!("bad label {s:?} at line {line}"));
            match opts.labels {
                LabelKind::Class => {
                    let first = labels[0].as_deref().unwrap_or_default();
                    if labels.iter().any(|l| l.as_deref() != Some(first)) {
                        return Err(Error::ingest(path, format!("instance {} has more than one class label", p.id)));
                    }
                    class.push(first.parse::<i64>().map_err(|_| parse_err(first, lines[0]))?);
                }
                LabelKind::Anomaly => anomaly.push(
                    labels
                        .iter()
                        .zip(&lines)
                        .map(|(l, &line)| {
                            let s = l.as_deref().unwrap_or_default();
                            match s {
                                "0" | "false" => Ok(false),
                                "1" | "true" => Ok(true),
                                _ => Err(parse_err(s, line)),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
                LabelKind::Target => target.push(
                    labels
                        .iter()
                        .zip(&lines)
                        .map(|(l, &line)| {
                            let s = l.as_deref().unwrap_or_default();
                            s.parse::<f64>().map_err(|_| parse_err(s, line))
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
            }
        }
        instances.push(TimeSeriesInstance { id: p.id, values });
    }
    let labels = match (has_label, opts.labels) {
        (false, _) => Labels::None,
        (true, LabelKind::Class) => Labels::Class(class),
        (true, LabelKind::Anomaly) => Labels::Anomaly(anomaly),
        (true, LabelKind::Target) => Labels::Target(target),
    };
    Dataset::new(instances, labels).map_err(|e| Error::ingest(path, e.to_string()))
}

fn parse_tsv_block(path: &Path, lines: &[(usize, &str)], opts: &LoadOptions) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(lines.len());
    let mut width = None;
    for &(line, text) in lines {
        let cells: Vec<&str> = text.split('\t').collect();
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w {
            return Err(Error::ingest(
                path,
                format!("line {line} has {} columns, expected {w}", cells.len()),
            ));
        }
        let row = cells
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(path, c, line, &format!("v{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let columns: Vec<String> = (1..=width.unwrap_or(0)).map(|j| format!("v{j}")).collect();
    let line_numbers: Vec<usize> = lines.iter().map(|l| l.0).collect();
    fill_missing(path, rows, &line_numbers, &columns, opts.missing)
}

fn load_tsv_file(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut blocks: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !blocks.last().expect("nonempty").is_empty() {
                blocks.push(Vec::new());
            }
        } else {
            blocks.last_mut().expect("nonempty").push((k + 1, line));
        }
    }
    blocks.retain(|b| !b.is_empty());
    if blocks.is_empty() {
        return Err(Error::ingest(path, "no data rows"));
    }
    let instances = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            Ok(TimeSeriesInstance {
                id: i as i64,
                values: parse_tsv_block(path, b, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(instances, Labels::None).map_err(|e| Error::ingest(path, e.to_string()))
}

fn load_tsv_dir(dir: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tsv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::ingest(dir, "directory contains no .tsv files"));
    }
    let mut instances = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        let text = fs::read_to_string(f)?;
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| (k + 1, l))
            .collect();
        if lines.is_empty() {
            return Err(Error::ingest(f, "empty instance file"));
        }
        instances.push(TimeSeriesInstance {
            id: i as i64,
            values: parse_tsv_block(f, &lines, opts)?,
        });
    }
    let label_file = dir.join("labels.txt");
    let labels = if label_file.exists() {
        let text = fs::read_to_string(&label_file)?;
        let classes = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, l)| {
                l.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::ingest(&label_file, format!("bad label at line {}", k + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Labels::Class(classes)
    } else {
        Labels::None
    };
    Dataset::new(instances, labels).map_err(|e| Error::ingest(dir, e.to_string()))
}

/// Writes a dataset in the long CSV layout.
pub fn write_long_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let m = ds.dims();
    let mut header = vec!["instance_id".to_string(), "timestamp".to_string()];
    header.extend((1..=m).map(|j| format!("v{j}")));
    if !matches!(ds.labels, Labels::None) {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| Error::ingest(path, e.to_string()))?;
    for (i, inst) in ds.instances.iter().enumerate() {
        for t in 0..inst.len() {
            let mut rec = vec![inst.id.to_string(), t.to_string()];
            rec.extend(inst.values.row(t).iter().map(|v| v.to_string()));
            match &ds.labels {
                Labels::None => {}
                Labels::Class(c) => rec.push(c[i].to_string()),
                Labels::Anomaly(a) => rec.push(u8::from(a[i][t]).to_string()),
                Labels::Target(y) => rec.push(y[i][t].to_string()),
            }
            w.write_record(&rec).map_err(|e| Error::ingest(path, e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Endless sequence of batches of instance indices. Each epoch is a fresh
/// seeded permutation split into batches of at most `batch_size`.
pub struct BatchIter {
    n: usize,
    batch_size: usize,
    rng: SeededRng,
    current: Vec<Vec<usize>>,
}

impl BatchIter {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        Self::with_rng(n, batch_size, stream_rng(seed, Stream::Batch))
    }

    pub fn with_rng(n: usize, batch_size: usize, rng: SeededRng) -> Result<Self> {
        if n == 0 {
            return Err(Error::Data("cannot batch an empty dataset".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        Ok(Self {
            n,
            batch_size,
            rng,
            current: Vec::new(),
        })
    }

    /// Batches of the next epoch.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let mut perm: Vec<usize> = (0..self.n).collect();
        perm.shuffle(&mut self.rng);
        perm.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.current.is_empty() {
            self.current = self.epoch();
            self.current.reverse();
        }
        self.current.pop()
    }
}

/// Epoch-structured batches of `ds`.
pub fn batch_iter(ds: &Dataset, batch_size: usize, seed: u64) -> Result<BatchIter> {
    BatchIter::new(ds.len(), batch_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn three_line_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "instance_id,timestamp,v1,v2\n0,0,1,2\n0,1,3,4\n0,2,5,6\n");
        let ds = load_dataset(&p, &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.instances[0].values.shape(), &[3, 2]);
        assert_eq!(ds.instances[0].values.data(), &[1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn nan_cell_is_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "instance_id,timestamp,v1,v2\n0,0,1,2\n0,1,NaN,4\n");
        let err = load_dataset(&p, &LoadOptions::default()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("v1"), "{err}");
    }

    #[test]
    fn forward_fill_imputes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "instance_id,timestamp,v1\n0,0,\n0,1,2\n0,2,nan\n0,3,5\n");
        let opts = LoadOptions {
            missing: MissingPolicy::ForwardFill,
            ..Default::default()
        };
        let ds = load_dataset(&p, &opts).unwrap();
        assert_eq!(ds.instances[0].values.data(), &[2., 2., 2., 5.]);
    }

    #[test]
    fn ragged_and_non_numeric_rows_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "instance_id,timestamp,v1,v2\n0,0,1,2\n0,1,3\n");
        assert!(load_dataset(&p, &LoadOptions::default()).is_err());
        let p = write(dir.path(), "b.csv", "instance_id,timestamp,v1\n0,0,1\n0,1,abc\n");
        let err = load_dataset(&p, &LoadOptions::default()).unwrap_err().to_string();
        assert!(err.contains("non-numeric"), "{err}");
    }

    #[test]
    fn class_labels_and_instance_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            "instance_id,timestamp,v1,label\n7,1,1,2\n3,0,5,1\n7,0,0,2\n3,1,6,1\n",
        );
        let ds = load_dataset(&p, &LoadOptions::default()).unwrap();
        assert_eq!(ds.instances[0].id, 7);
        assert_eq!(ds.instances[0].values.data(), &[0., 1.]);
        assert_eq!(ds.labels, Labels::Class(vec![2, 1]));
    }

    #[test]
    fn tsv_directory_of_instances() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..4 {
            let body: String = (0..50).map(|t| format!("{t}\t{}\n", t * i)).collect();
            write(dir.path(), &format!("inst{i}.tsv"), &body);
        }
        write(dir.path(), "labels.txt", "0\n1\n0\n1\n");
        let opts = LoadOptions {
            format: DataFormat::Tsv,
            ..Default::default()
        };
        let ds = load_dataset(dir.path(), &opts).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.instances.iter().all(|i| i.len() == 50 && i.dims() == 2));
        assert_eq!(ds.labels, Labels::Class(vec![0, 1, 0, 1]));
    }

    #[test]
    fn tsv_single_file_blocks() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "all.tsv", "1\t2\n3\t4\n\n5\t6\n7\t8\n9\t10\n");
        let opts = LoadOptions {
            format: DataFormat::Tsv,
            ..Default::default()
        };
        let ds = load_dataset(&p, &opts).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.instances[1].len(), 3);
    }

    #[test]
    fn constant_column_is_centered_and_flagged() {
        let x = Tensor::matrix(3, 2, vec![5., 0., 5., 2., 5., 4.]).unwrap();
        let ds = normalize(&Dataset::single(x).unwrap()).unwrap();
        let norm = ds.normalization.as_ref().unwrap();
        assert_eq!(norm.zero_variance, vec![true, false]);
        assert_eq!(ds.instances[0].values.column(0), vec![0.0; 3]);
    }

    #[test]
    fn two_point_column_maps_to_unit_scores() {
        let x = Tensor::matrix(2, 1, vec![0., 2.]).unwrap();
        let ds = normalize(&Dataset::single(x).unwrap()).unwrap();
        assert_eq!(ds.instances[0].values.data(), &[-1., 1.]);
        let back = ds.normalization.as_ref().unwrap().invert(&ds.instances[0].values);
        assert_eq!(back.data(), &[0., 2.]);
    }

    #[test]
    fn batch_partition_sizes() {
        let mut it = BatchIter::new(8, 8, 0).unwrap();
        assert_eq!(it.epoch().len(), 1);
        let sizes: Vec<usize> = BatchIter::new(10, 8, 0).unwrap().epoch().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![8, 2]);
        let a: Vec<Vec<usize>> = BatchIter::new(10, 3, 42).unwrap().take(12).collect();
        let b: Vec<Vec<usize>> = BatchIter::new(10, 3, 42).unwrap().take(12).collect();
        assert_eq!(a, b);
        assert!(BatchIter::new(0, 3, 0).is_err());
        assert!(BatchIter::new(3, 0, 0).is_err());
    }
}
