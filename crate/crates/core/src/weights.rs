//! Binary container for named f32 tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header   "DVQE" | u32 version | u32 variant | u64 config_hash | u32 count
//! entry    u32 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 data[prod(dims)]
//!          zero padding so the next entry starts on an 8-byte boundary
//! ```
//!
//! The header is 24 bytes, so the first entry is already aligned.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{tensor_layout, ModelConfig, TensorRole};

pub const MAGIC: &[u8; 4] = b"DVQE";
pub const FORMAT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

fn load_err(msg: impl Into<String>) -> Error {
    Error::Load(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.len() > MAX_RANK {
            return Err(load_err(format!("tensor shape {shape:?} does not fit {} values", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightMetadata {
    pub format_version: u32,
    pub variant: u32,
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    metadata: WeightMetadata,
    entries: BTreeMap<String, WeightTensor>,
}

impl WeightStore {
    pub fn new(variant: u32, config_hash: u64) -> Self {
        Self {
            metadata: WeightMetadata { format_version: FORMAT_VERSION, variant, config_hash },
            entries: BTreeMap::new(),
        }
    }

    /// Empty store stamped for `cfg`.
    pub fn for_config(cfg: &ModelConfig) -> Self {
        Self::new(cfg.variant.code(), cfg.config_hash())
    }

    pub fn metadata(&self) -> &WeightMetadata {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: WeightTensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(load_err(format!("duplicate tensor '{name}'")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightTensor> {
        self.entries.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Deterministic test weights: multiplicative weights uniform in
    /// `+-1/sqrt(fan_in)`, biases and batch-norm shifts zero, scales and
    /// variances one.
    pub fn random_init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::for_config(cfg);
        for spec in tensor_layout(cfg) {
            let n = spec.len();
            let data: Vec<f32> = match spec.role {
                TensorRole::Weight { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..=bound) as f32).collect()
                }
                TensorRole::Bias | TensorRole::BnBeta | TensorRole::BnMean => vec![0.0; n],
                TensorRole::BnGamma | TensorRole::BnVar => vec![1.0; n],
            };
            store.entries.insert(spec.name, WeightTensor { shape: spec.shape, data });
        }
        store
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.metadata.format_version.to_le_bytes());
        out.extend_from_slice(&self.metadata.variant.to_le_bytes());
        out.extend_from_slice(&self.metadata.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.resize(out.len().next_multiple_of(8), 0);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "file header")?;
        if magic != MAGIC {
            return Err(load_err("not a weight file (bad magic)"));
        }
        let version = r.u32("file header")?;
        if version != FORMAT_VERSION {
            return Err(load_err(format!(
                "weight format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let variant = r.u32("file header")?;
        let config_hash = r.u64("file header")?;
        let count = r.u32("file header")?;
        let mut store = Self::new(variant, config_hash);
        for index in 0..count {
            let ctx = format!("entry {index}");
            let name_len = r.u32(&ctx)? as usize;
            let name = std::str::from_utf8(r.take(name_len, &ctx)?)
                .map_err(|_| load_err(format!("{ctx}: tensor name is not UTF-8")))?
                .to_owned();
            let ctx = format!("tensor '{name}'");
            let rank = r.take(1, &ctx)?[0] as usize;
            if rank > MAX_RANK {
                return Err(load_err(format!("{ctx}: rank {rank} exceeds {MAX_RANK}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&ctx)? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| load_err(format!("{ctx}: shape {shape:?} is too large")))?;
            let raw = r.take(n, &ctx)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk"))).collect();
            let pad = r.pos.next_multiple_of(8) - r.pos;
            r.take(pad, &ctx)?;
            store.insert(name, WeightTensor { shape, data })?;
        }
        if r.pos != bytes.len() {
            return Err(load_err(format!("{} trailing bytes after the last tensor", bytes.len() - r.pos)));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Load(msg) => load_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, ctx: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(load_err(format!("{ctx}: file is truncated")));
        };
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, ctx: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, ctx)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, ctx: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, ctx)?.try_into().expect("8 bytes")))
    }
}
