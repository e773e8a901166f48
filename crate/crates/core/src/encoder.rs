//! Shared time-series encoder.
//!
//! Pipeline per timestamp: fully connected input projection, timestamp
//! masking, a stack of residual blocks of dilated convolutions, and a
//! linear head to the representation width. Block `i` uses dilation `2^i`
//! and computes `y = x + conv₂(gelu(conv₁(gelu(x))))`.

use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Segment, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SeededRng, Stream};

/// Architecture hyperparameters of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub repr_dims: usize,
    pub depth: usize,
    pub kernel_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            repr_dims: 320,
            depth: 10,
            kernel_size: 3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.repr_dims == 0 || self.depth == 0 {
            return Err(Error::Config("encoder widths and depth must be ≥ 1".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("encoder kernel size must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Each timestamp is zeroed independently with probability `p`.
    #[default]
    TrainRandom,
    None,
    /// Only the final timestamp of every sequence is zeroed.
    LastOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub p: f64,
    pub mode: MaskMode,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            mode: MaskMode::TrainRandom,
        }
    }
}

impl MaskConfig {
    pub fn none() -> Self {
        Self {
            p: 0.0,
            mode: MaskMode::None,
        }
    }

    pub fn last_only() -> Self {
        Self {
            p: 0.0,
            mode: MaskMode::LastOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("mask probability {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Draws a timestamp mask over a stacked batch; `true` marks a masked row.
pub fn sample_mask(segments: &[Segment], cfg: &MaskConfig, rng: &mut SeededRng) -> Vec<bool> {
    let n: usize = segments.iter().map(|s| s.len).sum();
    match cfg.mode {
        MaskMode::None => vec![false; n],
        MaskMode::LastOnly => {
            let mut m = vec![false; n];
            for s in segments.iter().filter(|s| s.len > 0) {
                m[s.start + s.len - 1] = true;
            }
            m
        }
        MaskMode::TrainRandom => (0..n).map(|_| rng.random::<f64>() < cfg.p).collect(),
    }
}

/// Applies timestamp masking to `[T, C]` latents, returning the masked
/// latents and the mask (`true` = zeroed).
pub fn mask_timestamps(
    g: &mut Graph,
    latent: Var,
    cfg: &MaskConfig,
    rng: &mut SeededRng,
) -> Result<(Var, Vec<bool>)> {
    let t = g.value(latent).rows();
    let mask = sample_mask(&[Segment { start: 0, len: t }], cfg, rng);
    let keep = mask.iter().map(|m| !m).collect();
    Ok((g.mask_rows(latent, keep)?, mask))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub conv1: Tensor,
    pub bias1: Tensor,
    pub conv2: Tensor,
    pub bias2: Tensor,
}

/// Trainable weights of the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub input_dims: usize,
    pub proj_w: Tensor,
    pub proj_b: Tensor,
    pub blocks: Vec<BlockParams>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

pub(crate) fn uniform_tensor(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

/// Initializes encoder weights from uniform(−1/√fan_in, 1/√fan_in).
pub fn init_encoder(input_dims: usize, config: EncoderConfig, seed: u64) -> Result<EncoderParams> {
    let mut rng = stream_rng(seed, Stream::Init);
    init_encoder_with(input_dims, config, &mut rng)
}

pub(crate) fn init_encoder_with(
    input_dims: usize,
    config: EncoderConfig,
    rng: &mut SeededRng,
) -> Result<EncoderParams> {
    if input_dims == 0 {
        return Err(Error::Config("encoder needs at least one input variable".into()));
    }
    config.validate()?;
    let h = config.hidden;
    let k = config.kernel_size;
    let proj_w = uniform_tensor(&[input_dims, h], input_dims, rng);
    let proj_b = uniform_tensor(&[h], input_dims, rng);
    let blocks = (0..config.depth)
        .map(|_| BlockParams {
            conv1: uniform_tensor(&[k, h, h], k * h, rng),
            bias1: uniform_tensor(&[h], k * h, rng),
            conv2: uniform_tensor(&[k, h, h], k * h, rng),
            bias2: uniform_tensor(&[h], k * h, rng),
        })
        .collect();
    let head_w = uniform_tensor(&[h, config.repr_dims], h, rng);
    let head_b = uniform_tensor(&[config.repr_dims], h, rng);
    Ok(EncoderParams {
        config,
        input_dims,
        proj_w,
        proj_b,
        blocks,
        head_w,
        head_b,
    })
}

impl EncoderParams {
    pub fn repr_dims(&self) -> usize {
        self.config.repr_dims
    }

    pub fn dilation(block: usize) -> usize {
        1usize << block
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("encoder.proj.w".to_string(), &self.proj_w),
            ("encoder.proj.b".to_string(), &self.proj_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("encoder.block{i}.conv1.k"), &b.conv1));
            out.push((format!("encoder.block{i}.conv1.b"), &b.bias1));
            out.push((format!("encoder.block{i}.conv2.k"), &b.conv2));
            out.push((format!("encoder.block{i}.conv2.b"), &b.bias2));
        }
        out.push(("encoder.head.w".to_string(), &self.head_w));
        out.push(("encoder.head.b".to_string(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.proj_w, &mut self.proj_b];
        for b in &mut self.blocks {
            out.push(&mut b.conv1);
            out.push(&mut b.bias1);
            out.push(&mut b.conv2);
            out.push(&mut b.bias2);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Records the weights on `g`, as trainable leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundEncoder {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let proj_w = leaf(&self.proj_w);
        let proj_b = leaf(&self.proj_b);
        let blocks = self
            .blocks
            .iter()
            .map(|b| [leaf(&b.conv1), leaf(&b.bias1), leaf(&b.conv2), leaf(&b.bias2)])
            .collect();
        let head_w = leaf(&self.head_w);
        let head_b = leaf(&self.head_b);
        BoundEncoder {
            input_dims: self.input_dims,
            proj_w,
            proj_b,
            blocks,
            head_w,
            head_b,
        }
    }
}

/// Encoder weights recorded on a particular [`Graph`].
pub struct BoundEncoder {
    input_dims: usize,
    pub proj_w: Var,
    pub proj_b: Var,
    pub blocks: Vec<[Var; 4]>,
    pub head_w: Var,
    pub head_b: Var,
}

impl BoundEncoder {
    /// Every weight var in the same order as [`EncoderParams::tensors_mut`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.proj_w, self.proj_b];
        for b in &self.blocks {
            out.extend_from_slice(b);
        }
        out.push(self.head_w);
        out.push(self.head_b);
        out
    }

    /// Rebuilds a bound encoder from vars laid out as [`BoundEncoder::vars`].
    pub fn from_vars(input_dims: usize, vars: &[Var]) -> Result<Self> {
        if vars.len() < 8 || !(vars.len() - 4).is_multiple_of(4) {
            return Err(Error::Shape(format!("{} vars do not describe an encoder", vars.len())));
        }
        let n = vars.len();
        Ok(Self {
            input_dims,
            proj_w: vars[0],
            proj_b: vars[1],
            blocks: vars[2..n - 2].chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            head_w: vars[n - 2],
            head_b: vars[n - 1],
        })
    }

    /// Encodes stacked sequences `x: [Σ T_i, m]` to `[Σ T_i, K]`.
    ///
    /// `masked[r]` zeroes the latent at row `r` after the input projection.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        segments: Rc<[Segment]>,
        masked: Option<&[bool]>,
    ) -> Result<Var> {
        let tx = g.value(x);
        if tx.cols() != self.input_dims {
            return Err(Error::DimensionMismatch {
                expected: self.input_dims,
                found: tx.cols(),
            });
        }
        if !tx.all_finite() {
            return Err(Error::Numeric("encoder input contains non-finite values".into()));
        }
        let mut h = g.linear(x, self.proj_w, self.proj_b)?;
        if let Some(mask) = masked {
            if mask.iter().any(|&m| m) {
                h = g.mask_rows(h, mask.iter().map(|m| !m).collect())?;
            }
        }
        for (i, [k1, b1, k2, b2]) in self.blocks.iter().enumerate() {
            let d = EncoderParams::dilation(i);
            let a = g.gelu(h);
            let c = g.conv1d(a, *k1, d, segments.clone())?;
            let c = g.add_bias(c, *b1)?;
            let a = g.gelu(c);
            let c = g.conv1d(a, *k2, d, segments.clone())?;
            let c = g.add_bias(c, *b2)?;
            h = g.add(h, c)?;
        }
        g.linear(h, self.head_w, self.head_b)
    }
}

/// Stacks sequences into one `[Σ T_i, m]` tensor plus their segments.
pub fn stack_segments(parts: &[&Tensor]) -> Result<(Tensor, Rc<[Segment]>)> {
    let lens: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
    let stacked = Tensor::vstack(parts)?;
    Ok((stacked, Segment::from_lengths(&lens).into()))
}

/// Encodes a single `[T', m]` sequence to `[T', K]` timestamp representations.
pub fn encode(
    seg: &Tensor,
    params: &EncoderParams,
    mask_cfg: &MaskConfig,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    Ok(encode_batch(&[seg], params, mask_cfg, rng)?.remove(0))
}

/// Encodes several sequences in one stacked pass, without recording gradients.
pub fn encode_batch(
    segs: &[&Tensor],
    params: &EncoderParams,
    mask_cfg: &MaskConfig,
    rng: &mut SeededRng,
) -> Result<Vec<Tensor>> {
    if segs.iter().any(|s| s.rows() == 0) {
        return Err(Error::Shape("cannot encode an empty sequence".into()));
    }
    let (stacked, segments) = stack_segments(segs)?;
    let mask = sample_mask(&segments, mask_cfg, rng);
    let mut g = Graph::new();
    let enc = params.bind(&mut g, false);
    let x = g.constant(stacked);
    let out = enc.forward(&mut g, x, segments.clone(), Some(&mask))?;
    let out = g.value(out);
    Ok(segments
        .iter()
        .map(|s| out.slice_rows(s.start, s.len))
        .collect())
}

/// Instance-level representation: channel-wise max over all timestamps.
pub fn instance_repr(r: &Tensor) -> Result<Tensor> {
    if r.rows() == 0 {
        return Err(Error::Shape("instance_repr of an empty sequence".into()));
    }
    let mut g = Graph::new();
    let x = g.constant(r.clone());
    let p = g.max_pool_rows(x, r.rows())?;
    g.value(p).clone().reshape(vec![r.cols()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn small() -> EncoderConfig {
        EncoderConfig {
            hidden: 8,
            repr_dims: 6,
            depth: 3,
            kernel_size: 3,
        }
    }

    #[test]
    fn init_shapes_follow_config() {
        let p = init_encoder(3, EncoderConfig::default(), 1).unwrap();
        assert_eq!(p.proj_w.shape(), &[3, 64]);
        assert_eq!(p.head_w.shape(), &[64, 320]);
        assert_eq!(p.blocks.len(), 10);
        assert_eq!(p.blocks[0].conv1.shape(), &[3, 64, 64]);
        let dil: Vec<usize> = (0..10).map(EncoderParams::dilation).collect();
        assert_eq!(dil, vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512]);
    }

    #[test]
    fn init_is_seeded() {
        let a = init_encoder(2, small(), 5).unwrap();
        let b = init_encoder(2, small(), 5).unwrap();
        let c = init_encoder(2, small(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(init_encoder(1, small(), 5).is_ok());
        assert!(init_encoder(0, small(), 5).is_err());
    }

    #[test]
    fn mask_modes() {
        let segs = [Segment { start: 0, len: 5 }];
        let mut rng = seeded(0);
        assert_eq!(sample_mask(&segs, &MaskConfig::none(), &mut rng), vec![false; 5]);
        assert_eq!(
            sample_mask(&segs, &MaskConfig::last_only(), &mut rng),
            vec![false, false, false, false, true]
        );
    }

    #[test]
    fn masked_fraction_matches_probability() {
        let segs = [Segment { start: 0, len: 100 }];
        let cfg = MaskConfig::default();
        let mut rng = seeded(11);
        let mut masked = 0usize;
        for _ in 0..10_000 {
            masked += sample_mask(&segs, &cfg, &mut rng).iter().filter(|&&m| m).count();
        }
        let frac = masked as f64 / 1e6;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn mask_none_is_identity() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let (y, m) = mask_timestamps(&mut g, x, &MaskConfig::none(), &mut seeded(0)).unwrap();
        assert_eq!(g.value(y), g.value(x));
        assert_eq!(m, vec![false, false]);
    }

    #[test]
    fn encode_preserves_length_and_is_deterministic() {
        let p = init_encoder(2, small(), 3).unwrap();
        for t in [1usize, 2, 7, 33] {
            let x = Tensor::matrix(t, 2, (0..2 * t).map(|v| (v as f64).sin()).collect()).unwrap();
            let a = encode(&x, &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
            let b = encode(&x, &p, &MaskConfig::none(), &mut seeded(1)).unwrap();
            assert_eq!(a.shape(), &[t, 6]);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn default_encoder_output_width() {
        let p = init_encoder(3, EncoderConfig::default(), 3).unwrap();
        let x = Tensor::zeros(&[5, 3]);
        let r = encode(&x, &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
        assert_eq!(r.shape(), &[5, 320]);
    }

    #[test]
    fn zero_input_interior_rows_are_constant() {
        // Away from the padded edges a constant input yields a constant
        // output; rows within the receptive radius of an edge see padding.
        let cfg = EncoderConfig {
            hidden: 4,
            repr_dims: 3,
            depth: 2,
            kernel_size: 3,
        };
        let p = init_encoder(2, cfg, 9).unwrap();
        let t = 20;
        let r = encode(&Tensor::zeros(&[t, 2]), &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
        // radius = Σ 2 · dilation = 2·(1 + 2) = 6
        for i in 6..t - 6 {
            assert_eq!(r.row(i), r.row(6));
        }
    }

    #[test]
    fn stacked_batch_matches_separate_encodes() {
        let p = init_encoder(2, small(), 4).unwrap();
        let a = Tensor::matrix(5, 2, (0..10).map(|v| v as f64 * 0.1).collect()).unwrap();
        let b = Tensor::matrix(3, 2, (0..6).map(|v| (v as f64).cos()).collect()).unwrap();
        let both = encode_batch(&[&a, &b], &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
        let ra = encode(&a, &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
        let rb = encode(&b, &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
        assert!(both[0].max_abs_diff(&ra) < 1e-12);
        assert!(both[1].max_abs_diff(&rb) < 1e-12);
    }

    #[test]
    fn instance_repr_is_channel_max() {
        let r = Tensor::matrix(3, 2, vec![1., 5., 4., 2., 0., 3.]).unwrap();
        assert_eq!(instance_repr(&r).unwrap().data(), &[4., 5.]);
        let one = Tensor::matrix(1, 2, vec![7., 8.]).unwrap();
        assert_eq!(instance_repr(&one).unwrap().data(), &[7., 8.]);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let p = init_encoder(1, small(), 4).unwrap();
        let x = Tensor::vector(vec![f64::NAN]).reshape(vec![1, 1]).unwrap();
        assert!(encode(&x, &p, &MaskConfig::none(), &mut seeded(0)).is_err());
    }
}
