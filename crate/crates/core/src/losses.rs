//! Contrastive objectives and their uncertainty-weighted combination.
//!
//! Batched representations are passed as one stacked `[B·n, K]` matrix in
//! instance-major order (rows `i·n .. (i+1)·n` belong to instance `i`).
//! Every loss is a mean over its anchors.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::heads::{discriminate, BoundMlp, PROB_CLAMP};

/// Added to row norms before cosine similarities.
pub const NORM_EPS: f64 = 1e-12;

/// Task order used throughout: contextual timestamp, contextual instance,
/// temporal, transformation.
pub const TASK_NAMES: [&str; 4] = ["cont_temp", "cont_inst", "temp", "trans"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskLossBundle {
    pub cont_temp: f64,
    pub cont_inst: f64,
    pub temp: f64,
    pub trans: f64,
}

impl TaskLossBundle {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            cont_temp: v[0],
            cont_inst: v[1],
            temp: v[2],
            trans: v[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cont_temp, self.cont_inst, self.temp, self.trans]
    }

    /// Name of the first non-finite loss, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.to_array()
            .iter()
            .zip(TASK_NAMES)
            .find(|(v, _)| !v.is_finite())
            .map(|(_, n)| n)
    }
}

/// Learnable task weights `α_i`, stored as `log α_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyWeights {
    pub log_alpha: [f64; 4],
}

impl UncertaintyWeights {
    pub fn alphas(&self) -> [f64; 4] {
        self.log_alpha.map(f64::exp)
    }

    pub fn all_valid(&self) -> bool {
        self.alphas().iter().all(|a| a.is_finite() && *a > 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalLossConfig {
    /// Positive-unlabeled weight of non-neighbor samples.
    pub w: f64,
}

impl Default for TemporalLossConfig {
    fn default() -> Self {
        Self { w: 0.05 }
    }
}

impl TemporalLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.w) {
            return Err(Error::Config(format!("temporal w={} outside [0, 1)", self.w)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformationLossConfig {
    pub tau: f64,
}

impl Default for TransformationLossConfig {
    fn default() -> Self {
        Self { tau: 0.2 }
    }
}

impl TransformationLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("temperature tau={} must be > 0", self.tau)));
        }
        Ok(())
    }
}

fn check_views(g: &Graph, r1: Var, r2: Var, batch: usize) -> Result<usize> {
    let (s1, s2) = (g.shape(r1), g.shape(r2));
    if s1.len() != 2 || s1 != s2 {
        return Err(Error::Shape(format!("misaligned views {s1:?} vs {s2:?}")));
    }
    if batch == 0 || s1[0] == 0 || s1[0] % batch != 0 {
        return Err(Error::Shape(format!(
            "{} rows cannot hold {batch} equal-length instances",
            s1[0]
        )));
    }
    Ok(s1[0] / batch)
}

/// Cross-entropy of `[pos | neg]` logits with the positive on the diagonal of
/// `pos` and the diagonal of `neg` excluded. Returns the sum over rows.
fn diagonal_contrast_sum(g: &mut Graph, anchors: Var, others: Var) -> Result<Var> {
    let n = g.value(anchors).rows();
    let pos = g.matmul_nt(anchors, others)?;
    let neg = g.matmul_nt(anchors, anchors)?;
    let diag: Vec<bool> = (0..n * n).map(|k| k / n == k % n).collect();
    let neg = g.mask_fill_neg_inf(neg, diag)?;
    let logits = g.concat_cols(pos, neg)?;
    let lse = g.logsumexp_rows(logits);
    let picked = g.pick(logits, (0..n).collect())?;
    let terms = g.sub(lse, picked)?;
    Ok(g.sum(terms))
}

fn sum_scaled(g: &mut Graph, parts: &[Var], c: f64) -> Result<Var> {
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = g.add(acc, p)?;
    }
    Ok(g.scale(acc, c))
}

/// Timestamp-wise contrast: for each instance, the same timestamp in the
/// other view is the positive; other timestamps of both views are negatives
/// (the anchor's own timestamp in its view is excluded).
pub fn contextual_timestamp_loss(g: &mut Graph, r1: Var, r2: Var, batch: usize) -> Result<Var> {
    let n = check_views(g, r1, r2, batch)?;
    let mut parts = Vec::with_capacity(batch);
    for i in 0..batch {
        let a = g.slice_rows(r1, i * n, n)?;
        let b = g.slice_rows(r2, i * n, n)?;
        parts.push(diagonal_contrast_sum(g, a, b)?);
    }
    sum_scaled(g, &parts, 1.0 / (batch * n) as f64)
}

/// Instance-wise contrast: at each timestamp, the same instance in the other
/// view is the positive; other instances of both views are negatives.
pub fn contextual_instance_loss(g: &mut Graph, r1: Var, r2: Var, batch: usize) -> Result<Var> {
    let n = check_views(g, r1, r2, batch)?;
    let mut parts = Vec::with_capacity(n);
    for t in 0..n {
        let idx: Vec<usize> = (0..batch).map(|i| i * n + t).collect();
        let a = g.select_rows(r1, idx.clone())?;
        let b = g.select_rows(r2, idx)?;
        parts.push(diagonal_contrast_sum(g, a, b)?);
    }
    sum_scaled(g, &parts, 1.0 / (batch * n) as f64)
}

/// Max-pools every instance of a stacked batch by 2 along time.
fn pool_instances(g: &mut Graph, r: Var, batch: usize) -> Result<Var> {
    let n = g.value(r).rows() / batch;
    let mut parts = Vec::with_capacity(batch);
    for i in 0..batch {
        let s = g.slice_rows(r, i * n, n)?;
        parts.push(g.max_pool_rows(s, 2)?);
    }
    g.concat_rows(&parts)
}

/// Number of scales visited by [`hierarchical_contextual_loss`] for an
/// overlap of `n` timestamps.
pub fn hierarchy_levels(mut n: usize) -> usize {
    let mut d = 1;
    while n > 1 {
        n = n.div_ceil(2);
        d += 1;
    }
    d
}

/// Contextual losses summed over a pooling ladder `n → ⌈n/2⌉ → … → 1`
/// and divided by the number of levels. The single-timestamp level only
/// contributes to the instance loss. Returns `(cont_temp, cont_inst)`.
pub fn hierarchical_contextual_loss(g: &mut Graph, r1: Var, r2: Var, batch: usize) -> Result<(Var, Var)> {
    let mut n = check_views(g, r1, r2, batch)?;
    let (mut a, mut b) = (r1, r2);
    let mut temp_parts = Vec::new();
    let mut inst_parts = Vec::new();
    let mut levels = 0usize;
    while n > 1 {
        inst_parts.push(contextual_instance_loss(g, a, b, batch)?);
        temp_parts.push(contextual_timestamp_loss(g, a, b, batch)?);
        levels += 1;
        a = pool_instances(g, a, batch)?;
        b = pool_instances(g, b, batch)?;
        n = n.div_ceil(2);
    }
    inst_parts.push(contextual_instance_loss(g, a, b, batch)?);
    levels += 1;
    let c = 1.0 / levels as f64;
    let cont_inst = sum_scaled(g, &inst_parts, c)?;
    let cont_temp = if temp_parts.is_empty() {
        g.constant(Tensor::scalar(0.0))
    } else {
        sum_scaled(g, &temp_parts, c)?
    };
    Ok((cont_temp, cont_inst))
}

/// Positive-unlabeled neighborhood discrimination over instance-level
/// representations `anchor, neighbor, non_neighbor: [B, K]`.
pub fn temporal_loss(
    g: &mut Graph,
    d: &BoundMlp,
    anchor: Var,
    neighbor: Var,
    non_neighbor: Var,
    cfg: &TemporalLossConfig,
) -> Result<Var> {
    let p_pos = discriminate(g, d, anchor, neighbor)?;
    let p_neg = discriminate(g, d, anchor, non_neighbor)?;
    temporal_loss_from_probs(g, p_pos, p_neg, cfg)
}

/// The temporal objective given pair probabilities `[B, 1]` (or `[B]`).
pub fn temporal_loss_from_probs(g: &mut Graph, p_pos: Var, p_neg: Var, cfg: &TemporalLossConfig) -> Result<Var> {
    let p_pos = g.clamp(p_pos, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let p_neg = g.clamp(p_neg, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let ones = g.constant(Tensor::full(g.shape(p_neg), 1.0));
    let q_neg = g.sub(ones, p_neg)?;
    let log_pos = g.ln(p_pos);
    let log_neg_as_pos = g.ln(p_neg);
    let log_neg_as_neg = g.ln(q_neg);
    let a = g.scale(log_neg_as_neg, 1.0 - cfg.w);
    let b = g.scale(log_neg_as_pos, cfg.w);
    let t = g.add(log_pos, a)?;
    let t = g.add(t, b)?;
    let m = g.mean(t);
    Ok(g.scale(m, -1.0))
}

/// NT-Xent over cosine similarities of weak and strong projections
/// `z_weak, z_strong: [B, K_p]`, averaged over all `2B` anchors.
pub fn transformation_loss(
    g: &mut Graph,
    z_weak: Var,
    z_strong: Var,
    cfg: &TransformationLossConfig,
) -> Result<Var> {
    let (sw, ss) = (g.shape(z_weak).to_vec(), g.shape(z_strong).to_vec());
    if sw.len() != 2 || sw != ss || sw[0] == 0 {
        return Err(Error::Shape(format!("misaligned projections {sw:?} vs {ss:?}")));
    }
    let b = sw[0];
    let z = g.concat_rows(&[z_weak, z_strong])?;
    let z = g.normalize_rows(z, NORM_EPS);
    let sim = g.matmul_nt(z, z)?;
    let sim = g.scale(sim, 1.0 / cfg.tau);
    let n = 2 * b;
    let diag: Vec<bool> = (0..n * n).map(|k| k / n == k % n).collect();
    let logits = g.mask_fill_neg_inf(sim, diag)?;
    let lse = g.logsumexp_rows(logits);
    let positives: Vec<usize> = (0..n).map(|i| (i + b) % n).collect();
    let picked = g.pick(logits, positives)?;
    let terms = g.sub(lse, picked)?;
    Ok(g.mean(terms))
}

/// `Σ_i L_i·exp(−2 s_i) + s_i` over enabled tasks, with `s_i = log α_i`.
pub fn total_loss(g: &mut Graph, losses: [Var; 4], log_alpha: [Var; 4], enabled: [bool; 4]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for i in (0..4).filter(|&i| enabled[i]) {
        let two_s = g.scale(log_alpha[i], -2.0);
        let w = g.exp(two_s);
        let weighted = g.mul(losses[i], w)?;
        let term = g.add(weighted, log_alpha[i])?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    acc.ok_or_else(|| Error::Config("at least one task must be enabled".into()))
}

/// Plain sum of the enabled losses (uncertainty weighting switched off).
pub fn equal_weight_loss(g: &mut Graph, losses: [Var; 4], enabled: [bool; 4]) -> Result<Var> {
    let parts: Vec<Var> = (0..4).filter(|&i| enabled[i]).map(|i| losses[i]).collect();
    if parts.is_empty() {
        return Err(Error::Config("at least one task must be enabled".into()));
    }
    sum_scaled(g, &parts, 1.0)
}

/// Scalar evaluation of the weighted objective over all four tasks.
pub fn total_loss_value(bundle: &TaskLossBundle, uw: &UncertaintyWeights) -> f64 {
    bundle
        .to_array()
        .iter()
        .zip(uw.alphas())
        .map(|(l, a)| l / (a * a) + a.ln())
        .sum()
}
