//! Binary checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "MTSRLCKP"
//! version    u32
//! checksum   u32      CRC-32 of everything after this field
//! seed       u64
//! iteration  u64
//! fingerprint u32 length + UTF-8
//! count      u32
//! count × { name: u32 length + UTF-8, rank: u32, dims: rank × u64, data: Π dims × f64 }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::data::Normalization;
use crate::encoder::{BlockParams, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::heads::{DiscriminatorParams, ProjectionParams};
use crate::losses::UncertaintyWeights;

use super::ModelState;

pub const MAGIC: &[u8; 8] = b"MTSRLCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Trained weights plus the metadata needed to reproduce and reuse them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub iteration: u64,
    /// Hex SHA-256 of the resolved training configuration.
    pub fingerprint: String,
    pub model: ModelState,
    /// Statistics of the pretraining data, applied again at encode time.
    pub normalization: Option<Normalization>,
}

impl Checkpoint {
    pub fn input_dims(&self) -> usize {
        self.model.encoder.input_dims
    }

    pub fn repr_dims(&self) -> usize {
        self.model.encoder.repr_dims()
    }

    fn arrays(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .model
            .encoder
            .named_tensors()
            .into_iter()
            .chain(self.model.disc.named_tensors())
            .chain(self.model.proj.named_tensors())
            .map(|(n, t)| (n, t.clone()))
            .collect();
        out.push((
            "uw.log_alpha".into(),
            Tensor::vector(self.model.weights.log_alpha.to_vec()),
        ));
        if let Some(n) = &self.normalization {
            out.push(("norm.mean".into(), Tensor::vector(n.mean.clone())));
            out.push(("norm.std".into(), Tensor::vector(n.std.clone())));
            out.push((
                "norm.zero_variance".into(),
                Tensor::vector(n.zero_variance.iter().map(|&z| f64::from(u8::from(z))).collect()),
            ));
        }
        out
    }

    /// Serializes to the binary layout described in the module docs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.seed.to_le_bytes());
        body.extend_from_slice(&self.iteration.to_le_bytes());
        put_str(&mut body, &self.fingerprint);
        let arrays = self.arrays();
        body.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, t) in &arrays {
            put_str(&mut body, name);
            body.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                body.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(body.len() + 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let stored = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
        let body = &bytes[16..];
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch (corrupt or truncated file)".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        let seed = r.u64()?;
        let iteration = r.u64()?;
        let fingerprint = r.string()?;
        let count = r.u32()? as usize;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            arrays.insert(name, Tensor::new(shape, data)?);
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after arrays".into()));
        }
        let model = rebuild_model(&mut arrays)?;
        let normalization = match (arrays.remove("norm.mean"), arrays.remove("norm.std"), arrays.remove("norm.zero_variance")) {
            (Some(mean), Some(std), Some(zero)) => Some(Normalization {
                mean: mean.into_data(),
                std: std.into_data(),
                zero_variance: zero.data().iter().map(|&z| z != 0.0).collect(),
            }),
            (None, None, None) => None,
            _ => return Err(Error::Checkpoint("incomplete normalization arrays".into())),
        };
        if let Some(name) = arrays.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected array {name}")));
        }
        Ok(Self {
            version,
            seed,
            iteration,
            fingerprint,
            model,
            normalization,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 name".into()))
    }
}

fn take(arrays: &mut BTreeMap<String, Tensor>, name: &str, rank: usize) -> Result<Tensor> {
    let t = arrays
        .remove(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
    if t.rank() != rank {
        return Err(Error::Checkpoint(format!("array {name} has rank {}, expected {rank}", t.rank())));
    }
    Ok(t)
}

fn rebuild_model(arrays: &mut BTreeMap<String, Tensor>) -> Result<ModelState> {
    let proj_w = take(arrays, "encoder.proj.w", 2)?;
    let proj_b = take(arrays, "encoder.proj.b", 1)?;
    let mut blocks = Vec::new();
    while arrays.contains_key(&format!("encoder.block{}.conv1.k", blocks.len())) {
        let i = blocks.len();
        blocks.push(BlockParams {
            conv1: take(arrays, &format!("encoder.block{i}.conv1.k"), 3)?,
            bias1: take(arrays, &format!("encoder.block{i}.conv1.b"), 1)?,
            conv2: take(arrays, &format!("encoder.block{i}.conv2.k"), 3)?,
            bias2: take(arrays, &format!("encoder.block{i}.conv2.b"), 1)?,
        });
    }
    let head_w = take(arrays, "encoder.head.w", 2)?;
    let head_b = take(arrays, "encoder.head.b", 1)?;
    let first = blocks
        .first()
        .ok_or_else(|| Error::Checkpoint("encoder has no residual blocks".into()))?;
    let config = EncoderConfig {
        hidden: proj_w.cols(),
        repr_dims: head_w.cols(),
        depth: blocks.len(),
        kernel_size: first.conv1.shape()[0],
    };
    let encoder = EncoderParams {
        config,
        input_dims: proj_w.rows(),
        proj_w,
        proj_b,
        blocks,
        head_w,
        head_b,
    };
    let disc = DiscriminatorParams {
        w1: take(arrays, "disc.w1", 2)?,
        b1: take(arrays, "disc.b1", 1)?,
        w2: take(arrays, "disc.w2", 2)?,
        b2: take(arrays, "disc.b2", 1)?,
    };
    let proj = ProjectionParams {
        w1: take(arrays, "proj.w1", 2)?,
        b1: take(arrays, "proj.b1", 1)?,
        w2: take(arrays, "proj.w2", 2)?,
        b2: take(arrays, "proj.b2", 1)?,
    };
    let la = take(arrays, "uw.log_alpha", 1)?;
    let log_alpha: [f64; 4] = la
        .data()
        .try_into()
        .map_err(|_| Error::Checkpoint("uw.log_alpha must have 4 entries".into()))?;
    Ok(ModelState {
        encoder,
        disc,
        proj,
        weights: UncertaintyWeights { log_alpha },
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, c.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}
