//! Multi-task pretraining: one optimizer step over all objectives, the
//! pretraining loop with its loss log, and checkpoints.

mod checkpoint;

use std::io::Write;
use std::path::Path;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Segment, Tensor, Var};
use crate::data::{BatchIter, Dataset, TimeSeriesInstance};
use crate::encoder::{init_encoder_with, sample_mask, EncoderConfig, EncoderParams, MaskConfig};
use crate::error::{Error, Result};
use crate::heads::{init_discriminator, init_projection, project, DiscriminatorParams, HeadsConfig, ProjectionParams};
use crate::losses::{
    equal_weight_loss, hierarchical_contextual_loss, temporal_loss, total_loss, transformation_loss,
    TaskLossBundle, TemporalLossConfig, TransformationLossConfig, UncertaintyWeights,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stream_rng, SeededRng, Stream};
use crate::sampler::{
    crop_pair, find_neighborhood, sample_non_neighbor, strong_augment, weak_augment, AnchorChoice, AugmentConfig,
    CropSpec, NeighborhoodConfig,
};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};

/// Observations (`N·T·m`) below which the short schedule is used.
pub const SCHEDULE_THRESHOLD: usize = 100_000;
pub const SHORT_SCHEDULE: usize = 200;
pub const LONG_SCHEDULE: usize = 600;

/// Which objectives take part in training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskFlags {
    pub use_cont: bool,
    pub use_temp: bool,
    pub use_trans: bool,
    /// Learned uncertainty weights; off means a plain sum of the losses.
    pub use_uw: bool,
}

impl Default for TaskFlags {
    fn default() -> Self {
        Self {
            use_cont: true,
            use_temp: true,
            use_trans: true,
            use_uw: true,
        }
    }
}

impl TaskFlags {
    /// Per-loss switches in the order of [`TASK_NAMES`].
    pub fn enabled(&self) -> [bool; 4] {
        [self.use_cont, self.use_cont, self.use_temp, self.use_trans]
    }

    /// Turns one component off by name (`cont`, `temp`, `trans` or `uw`).
    pub fn ablate(&mut self, name: &str) -> Result<()> {
        match name {
            "cont" => self.use_cont = false,
            "temp" => self.use_temp = false,
            "trans" => self.use_trans = false,
            "uw" => self.use_uw = false,
            other => return Err(Error::Config(format!("unknown component {other:?} (cont, temp, trans, uw)"))),
        }
        Ok(())
    }
}

/// Optional per-concern seeds; unset streams derive from the master seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSeeds {
    pub init: Option<u64>,
    pub batch: Option<u64>,
    pub crop: Option<u64>,
    pub mask: Option<u64>,
    pub augment: Option<u64>,
    pub neighborhood: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// `None` picks 200 or 600 from the dataset size.
    pub iterations: Option<usize>,
    /// Maximum crop length as a fraction of the series length.
    pub crop_ratio: f64,
    pub seed: u64,
    pub mask: MaskConfig,
    pub temporal: TemporalLossConfig,
    pub transformation: TransformationLossConfig,
    pub augment: AugmentConfig,
    pub neighborhood: NeighborhoodConfig,
    pub encoder: EncoderConfig,
    pub heads: HeadsConfig,
    pub tasks: TaskFlags,
    pub seeds: StreamSeeds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            lr: 1e-3,
            iterations: None,
            crop_ratio: 0.5,
            seed: 0,
            mask: MaskConfig::default(),
            temporal: TemporalLossConfig::default(),
            transformation: TransformationLossConfig::default(),
            augment: AugmentConfig::default(),
            neighborhood: NeighborhoodConfig::default(),
            encoder: EncoderConfig::default(),
            heads: HeadsConfig::default(),
            tasks: TaskFlags::default(),
            seeds: StreamSeeds::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.iterations == Some(0) {
            return Err(Error::Config("iterations must be ≥ 1".into()));
        }
        if !(self.crop_ratio > 0.0 && self.crop_ratio <= 1.0) {
            return Err(Error::Config(format!("crop_ratio {} outside (0, 1]", self.crop_ratio)));
        }
        self.adam().validate()?;
        self.mask.validate()?;
        self.temporal.validate()?;
        self.transformation.validate()?;
        self.augment.validate()?;
        self.neighborhood.validate()?;
        self.encoder.validate()?;
        self.heads.validate()?;
        if !self.tasks.enabled().iter().any(|&e| e) {
            return Err(Error::Config("at least one task must be enabled".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Number of optimizer steps for `ds`.
    pub fn resolved_iterations(&self, ds: &Dataset) -> usize {
        self.iterations.unwrap_or(if ds.observation_count() < SCHEDULE_THRESHOLD {
            SHORT_SCHEDULE
        } else {
            LONG_SCHEDULE
        })
    }

    fn stream(&self, s: Stream) -> SeededRng {
        let o = &self.seeds;
        let seed = match s {
            Stream::Init => o.init,
            Stream::Batch => o.batch,
            Stream::Crop => o.crop,
            Stream::Mask => o.mask,
            Stream::Augment => o.augment,
            Stream::Neighborhood => o.neighborhood,
            _ => None,
        };
        stream_rng(seed.unwrap_or(self.seed), s)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Every trainable quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub encoder: EncoderParams,
    pub disc: DiscriminatorParams,
    pub proj: ProjectionParams,
    pub weights: UncertaintyWeights,
}

impl ModelState {
    /// Seeded initialization; `α = 1` for every task.
    pub fn init(input_dims: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut rng = cfg.stream(Stream::Init);
        let encoder = init_encoder_with(input_dims, cfg.encoder, &mut rng)?;
        let k = cfg.encoder.repr_dims;
        let disc = init_discriminator(k, cfg.heads.disc_hidden_factor * k, &mut rng);
        let proj = init_projection(k, cfg.heads.proj_hidden_for(k), cfg.heads.proj_out, &mut rng);
        Ok(Self {
            encoder,
            disc,
            proj,
            weights: UncertaintyWeights::default(),
        })
    }

    fn param_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.encoder.named_tensors().iter().map(|(_, t)| t.len()).collect();
        sizes.extend(self.disc.tensors().iter().map(|t| t.len()));
        sizes.extend(self.proj.tensors().iter().map(|t| t.len()));
        sizes.extend([1; 4]);
        sizes
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite() && self.disc.all_finite() && self.proj.all_finite() && self.weights.all_valid()
    }
}

/// Random streams consumed during training steps.
pub struct StepRngs {
    pub crop: SeededRng,
    pub mask: SeededRng,
    pub augment: SeededRng,
    pub neighborhood: SeededRng,
}

impl StepRngs {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            crop: cfg.stream(Stream::Crop),
            mask: cfg.stream(Stream::Mask),
            augment: cfg.stream(Stream::Augment),
            neighborhood: cfg.stream(Stream::Neighborhood),
        }
    }
}

/// Parameters plus optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: ModelState,
    pub adam: Adam,
    pub step: u64,
}

impl TrainState {
    pub fn new(model: ModelState, cfg: &TrainConfig) -> Self {
        let adam = Adam::new(cfg.adam(), &model.param_sizes());
        Self { model, adam, step: 0 }
    }
}

/// Losses of one step, with the weights that were applied to them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub bundle: TaskLossBundle,
    pub alphas: [f64; 4],
    pub total: f64,
}

fn rows(x: &Tensor, a: usize, b: usize) -> Tensor {
    // 1-based inclusive [a, b]
    x.slice_rows(a - 1, b + 1 - a)
}

fn pooled(g: &mut Graph, out: Var, seg: Segment) -> Result<Var> {
    let s = g.slice_rows(out, seg.start, seg.len)?;
    g.max_pool_rows(s, seg.len)
}

/// Runs one optimizer update on `batch` and returns the losses it saw.
pub fn train_step(
    state: &mut TrainState,
    batch: &[&TimeSeriesInstance],
    cfg: &TrainConfig,
    rngs: &mut StepRngs,
) -> Result<StepRecord> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let m = state.model.encoder.input_dims;
    if let Some(bad) = batch.iter().find(|x| x.dims() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: bad.dims(),
        });
    }
    let flags = cfg.tasks;
    let enabled = flags.enabled();
    let b = batch.len();
    let t_min = batch.iter().map(|x| x.len()).min().expect("nonempty");

    // one crop geometry per batch, shifted independently per instance
    let base = crop_pair(t_min, cfg.crop_ratio, &mut rngs.crop)?;
    let crops: Vec<CropSpec> = batch
        .iter()
        .map(|x| {
            let lo = -(base.a1 as i64 - 1);
            let hi = (x.len() - base.b2) as i64;
            base.shifted(rngs.crop.random_range(lo..=hi) as isize)
        })
        .collect();
    let n_o = base.overlap_len();

    let mut parts: Vec<Tensor> = Vec::new();
    let need_views = flags.use_cont || flags.use_temp;
    if need_views {
        for (x, c) in batch.iter().zip(&crops) {
            parts.push(rows(&x.values, c.a1, c.b1));
        }
        for (x, c) in batch.iter().zip(&crops) {
            parts.push(rows(&x.values, c.a2, c.b2));
        }
    }
    let mut anchors: Vec<AnchorChoice> = Vec::new();
    let non_start = parts.len();
    if flags.use_temp {
        for (x, c) in batch.iter().zip(&crops) {
            let eta = find_neighborhood(&x.values, c, &cfg.neighborhood);
            let spec = sample_non_neighbor(x.len(), c, eta, &mut rngs.neighborhood)?;
            parts.push(rows(&x.values, spec.a3, spec.b3));
            anchors.push(spec.anchor);
        }
    }
    let aug_start = parts.len();
    if flags.use_trans {
        let overlaps: Vec<Tensor> = batch.iter().zip(&crops).map(|(x, c)| rows(&x.values, c.a2, c.b1)).collect();
        for o in &overlaps {
            parts.push(weak_augment(o, &cfg.augment, &mut rngs.augment));
        }
        for o in &overlaps {
            parts.push(strong_augment(o, &cfg.augment, &mut rngs.augment));
        }
    }

    let lens: Vec<usize> = parts.iter().map(Tensor::rows).collect();
    let segments: Rc<[Segment]> = Segment::from_lengths(&lens).into();
    let stacked = Tensor::vstack(&parts.iter().collect::<Vec<_>>())?;
    let mask = sample_mask(&segments, &cfg.mask, &mut rngs.mask);

    let mut g = Graph::new();
    let enc = state.model.encoder.bind(&mut g, true);
    let disc = state.model.disc.bind(&mut g, true);
    let proj = state.model.proj.bind(&mut g, true);
    let log_alpha = state.model.weights.log_alpha.map(|s| g.param(Tensor::scalar(s)));
    let x = g.constant(stacked);
    let out = enc.forward(&mut g, x, segments.clone(), Some(&mask))?;

    let zero = g.constant(Tensor::scalar(0.0));
    let mut losses = [zero; 4];
    if flags.use_cont {
        let mut r1 = Vec::with_capacity(b);
        let mut r2 = Vec::with_capacity(b);
        for i in 0..b {
            let s1 = segments[i];
            let s2 = segments[b + i];
            r1.push(g.slice_rows(out, s1.start + base.overlap_offset_in_first(), n_o)?);
            r2.push(g.slice_rows(out, s2.start, n_o)?);
        }
        let r1 = g.concat_rows(&r1)?;
        let r2 = g.concat_rows(&r2)?;
        let (ct, ci) = hierarchical_contextual_loss(&mut g, r1, r2, b)?;
        losses[0] = ct;
        losses[1] = ci;
    }
    if flags.use_temp {
        let mut anc = Vec::with_capacity(b);
        let mut nb = Vec::with_capacity(b);
        let mut non = Vec::with_capacity(b);
        for (i, anchor) in anchors.iter().enumerate() {
            let p1 = pooled(&mut g, out, segments[i])?;
            let p2 = pooled(&mut g, out, segments[b + i])?;
            let (a, n) = match anchor {
                AnchorChoice::FirstCrop => (p1, p2),
                AnchorChoice::SecondCrop => (p2, p1),
            };
            anc.push(a);
            nb.push(n);
            non.push(pooled(&mut g, out, segments[non_start + i])?);
        }
        let anc = g.concat_rows(&anc)?;
        let nb = g.concat_rows(&nb)?;
        let non = g.concat_rows(&non)?;
        losses[2] = temporal_loss(&mut g, &disc, anc, nb, non, &cfg.temporal)?;
    }
    if flags.use_trans {
        let weak: Vec<Var> = (0..b)
            .map(|i| pooled(&mut g, out, segments[aug_start + i]))
            .collect::<Result<_>>()?;
        let strong: Vec<Var> = (0..b)
            .map(|i| pooled(&mut g, out, segments[aug_start + b + i]))
            .collect::<Result<_>>()?;
        let weak = g.concat_rows(&weak)?;
        let strong = g.concat_rows(&strong)?;
        let zw = project(&mut g, &proj, weak)?;
        let zs = project(&mut g, &proj, strong)?;
        losses[3] = transformation_loss(&mut g, zw, zs, &cfg.transformation)?;
    }

    let bundle = TaskLossBundle::from_array(losses.map(|l| g.value(l).item()));
    let step = state.step + 1;
    if let Some(task) = bundle.first_non_finite() {
        return Err(Error::NonFiniteLoss { task, step });
    }
    let total = if flags.use_uw {
        total_loss(&mut g, losses, log_alpha, enabled)?
    } else {
        equal_weight_loss(&mut g, losses, enabled)?
    };
    let total_value = g.value(total).item();
    if !total_value.is_finite() {
        return Err(Error::NonFiniteLoss { task: "total", step });
    }
    let alphas = state.model.weights.alphas();

    let grads = g.backward(total)?;
    let mut grad_refs: Vec<Option<&[f64]>> = enc.vars().into_iter().map(|v| grads.raw(v)).collect();
    grad_refs.extend(disc.vars().into_iter().map(|v| if flags.use_temp { grads.raw(v) } else { None }));
    grad_refs.extend(proj.vars().into_iter().map(|v| if flags.use_trans { grads.raw(v) } else { None }));
    grad_refs.extend(
        log_alpha
            .iter()
            .zip(enabled)
            .map(|(&v, on)| if flags.use_uw && on { grads.raw(v) } else { None }),
    );

    let mut la: Vec<Tensor> = state.model.weights.log_alpha.iter().map(|&s| Tensor::scalar(s)).collect();
    {
        let model = &mut state.model;
        let mut params = model.encoder.tensors_mut();
        params.extend(model.disc.tensors_mut());
        params.extend(model.proj.tensors_mut());
        params.extend(la.iter_mut());
        state.adam.update(&mut params, &grad_refs)?;
    }
    for (s, t) in state.model.weights.log_alpha.iter_mut().zip(&la) {
        *s = t.item();
    }
    if !state.model.weights.all_valid() {
        return Err(Error::Numeric(format!("uncertainty weights left (0, ∞) at step {step}")));
    }
    if !state.model.encoder.all_finite() {
        return Err(Error::Numeric(format!("encoder weights became non-finite at step {step}")));
    }
    state.step = step;
    Ok(StepRecord {
        step,
        bundle,
        alphas,
        total: total_value,
    })
}

/// Result of [`pretrain`].
#[derive(Clone, Debug)]
pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
}

/// Trains from a seeded initialization for the configured number of steps.
pub fn pretrain(ds: &Dataset, cfg: &TrainConfig) -> Result<PretrainOutput> {
    pretrain_with(ds, cfg, |_| {})
}

/// [`pretrain`] with a callback after each step.
pub fn pretrain_with(ds: &Dataset, cfg: &TrainConfig, mut on_step: impl FnMut(&StepRecord)) -> Result<PretrainOutput> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("cannot pretrain on an empty dataset".into()));
    }
    if ds.min_len() < 4 {
        return Err(Error::Data(format!(
            "instances need at least 4 timestamps for overlapping crops, shortest has {}",
            ds.min_len()
        )));
    }
    let iterations = cfg.resolved_iterations(ds);
    let model = ModelState::init(ds.dims(), cfg)?;
    let mut state = TrainState::new(model, cfg);
    let mut rngs = StepRngs::from_config(cfg);
    let mut batches = BatchIter::with_rng(ds.len(), cfg.batch_size, cfg.stream(Stream::Batch))?;
    let mut log = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let idx = batches.next().expect("endless iterator");
        let batch: Vec<&TimeSeriesInstance> = idx.iter().map(|&i| &ds.instances[i]).collect();
        let rec = train_step(&mut state, &batch, cfg, &mut rngs)?;
        if rec.step % 20 == 0 || rec.step == 1 {
            log::info!(
                "step {} total {:.4} cont_temp {:.4} cont_inst {:.4} temp {:.4} trans {:.4}",
                rec.step,
                rec.total,
                rec.bundle.cont_temp,
                rec.bundle.cont_inst,
                rec.bundle.temp,
                rec.bundle.trans
            );
        }
        on_step(&rec);
        log.push(rec);
    }
    let checkpoint = Checkpoint {
        version: FORMAT_VERSION,
        seed: cfg.seed,
        iteration: state.step,
        fingerprint: cfg.fingerprint(),
        model: state.model,
        normalization: ds.normalization.clone(),
    };
    Ok(PretrainOutput { checkpoint, log })
}

pub const LOSS_LOG_HEADER: [&str; 10] = [
    "step", "cont_temp", "cont_inst", "temp", "trans", "alpha1", "alpha2", "alpha3", "alpha4", "total",
];

/// Writes the loss log as CSV; floats use shortest round-trip formatting.
pub fn write_loss_log<W: Write>(records: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(LOSS_LOG_HEADER).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.bundle.to_array().iter().map(f64::to_string));
        row.extend(r.alphas.iter().map(f64::to_string));
        row.push(r.total.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_loss_log(records: &[StepRecord], path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_loss_log(records, std::io::BufWriter::new(f))
}

/// Parses a loss log written by [`write_loss_log`].
pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::ingest(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != LOSS_LOG_HEADER {
        return Err(Error::ingest(path, "unexpected loss log header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::ingest(path, e.to_string()))?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::ingest(path, format!("bad number {:?}", &rec[i])))
        };
        out.push(StepRecord {
            step: rec[0].parse().map_err(|_| Error::ingest(path, "bad step"))?,
            bundle: TaskLossBundle::from_array([f(1)?, f(2)?, f(3)?, f(4)?]),
            alphas: [f(5)?, f(6)?, f(7)?, f(8)?],
            total: f(9)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{sinusoid_classes, SinusoidClassConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            iterations: Some(3),
            encoder: EncoderConfig {
                hidden: 8,
                repr_dims: 8,
                depth: 2,
                kernel_size: 3,
            },
            heads: HeadsConfig {
                proj_out: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn tiny_data() -> Dataset {
        let cfg = SinusoidClassConfig {
            n_train: 8,
            n_test: 0,
            length: 48,
            ..Default::default()
        };
        sinusoid_classes(&cfg).unwrap().0
    }

    #[test]
    fn repeated_step_from_same_state_is_identical() {
        let ds = tiny_data();
        let cfg = tiny_cfg();
        let batch: Vec<&TimeSeriesInstance> = ds.instances.iter().take(4).collect();
        let init = TrainState::new(ModelState::init(3, &cfg).unwrap(), &cfg);
        let mut s1 = init.clone();
        let mut s2 = init.clone();
        let r1 = train_step(&mut s1, &batch, &cfg, &mut StepRngs::from_config(&cfg)).unwrap();
        let r2 = train_step(&mut s2, &batch, &cfg, &mut StepRngs::from_config(&cfg)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(s1, s2);
        assert_ne!(s1.model, init.model);
    }

    #[test]
    fn disabled_temporal_task_leaves_discriminator() {
        let ds = tiny_data();
        let mut cfg = tiny_cfg();
        cfg.tasks.ablate("temp").unwrap();
        let batch: Vec<&TimeSeriesInstance> = ds.instances.iter().take(4).collect();
        let mut s = TrainState::new(ModelState::init(3, &cfg).unwrap(), &cfg);
        let before = s.model.disc.clone();
        let rec = train_step(&mut s, &batch, &cfg, &mut StepRngs::from_config(&cfg)).unwrap();
        assert_eq!(rec.bundle.temp, 0.0);
        assert_eq!(s.model.disc, before);
        assert_eq!(s.model.weights.log_alpha[2], 0.0);
    }

    #[test]
    fn reported_total_matches_weighted_sum() {
        let ds = tiny_data();
        let cfg = tiny_cfg();
        let out = pretrain(&ds, &cfg).unwrap();
        assert_eq!(out.log.len(), 3);
        for r in &out.log {
            let uw = UncertaintyWeights {
                log_alpha: r.alphas.map(f64::ln),
            };
            let recomputed = crate::losses::total_loss_value(&r.bundle, &uw);
            assert!((recomputed - r.total).abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_schedule_threshold() {
        let cfg = TrainConfig::default();
        let ds = tiny_data();
        assert_eq!(cfg.resolved_iterations(&ds), 200);
        let big = SinusoidClassConfig {
            n_train: 300,
            n_test: 0,
            length: 128,
            ..Default::default()
        };
        let (big, _) = sinusoid_classes(&big).unwrap();
        assert_eq!(cfg.resolved_iterations(&big), 600);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let ds = tiny_data();
        let out = pretrain(&ds, &tiny_cfg()).unwrap();
        let bytes = out.checkpoint.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, out.checkpoint);
        assert_eq!(back.to_bytes(), bytes);
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 7]).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        let mut future = bytes.clone();
        future[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&future),
            Err(Error::CheckpointVersion { .. })
        ));
    }

    #[test]
    fn loss_log_round_trips() {
        let ds = tiny_data();
        let out = pretrain(&ds, &tiny_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        save_loss_log(&out.log, &p).unwrap();
        assert_eq!(read_loss_log(&p).unwrap(), out.log);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.lr = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        for c in ["cont", "temp", "trans"] {
            cfg.tasks.ablate(c).unwrap();
        }
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().tasks.clone().ablate("nope").is_err());
    }
}
