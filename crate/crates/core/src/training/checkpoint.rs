//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `SEQMCKPT` |
//! | 4 | format version (`u32`) |
//! | 4 | header length `n` (`u32`) |
//! | n | UTF-8 JSON header |
//! | rest | `f64` payload |
//!
//! The header lists tensor names and shapes in parameter order together with
//! the model and training configuration, optimizer step, RNG position, epoch
//! counter and run history. The payload holds every parameter tensor, then
//! every first-moment buffer, then every second-moment buffer, each in
//! header order.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamState, RunHistory, TrainConfig};
use crate::autodiff::{Tensor, TensorError};
use crate::data::ZNormStats;
use crate::error::ModelError;
use crate::model::{ModelConfig, ModelParams};
use crate::persist::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEQMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(
        "corrupt checkpoint: truncated {section} (needed {needed} bytes, {available} available)"
    )]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("corrupt checkpoint: {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("corrupt checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint tensor {index} is {found_name} {found:?}, model expects {expected_name} {expected:?}")]
    Shape {
        index: usize,
        expected_name: String,
        expected: Vec<usize>,
        found_name: String,
        found: Vec<usize>,
    },
    #[error("checkpoint lists {found} tensors, model expects {expected}")]
    TensorCount { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Exact position of a ChaCha8 generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte key, hex encoded.
    pub seed: String,
    pub stream: u64,
    /// Decimal string; the value is a `u128`.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, CheckpointError> {
        use rand::SeedableRng;
        let bad = || CheckpointError::Header(format!("invalid rng seed {:?}", self.seed));
        if self.seed.len() != 64 || !self.seed.is_ascii() {
            return Err(bad());
        }
        let mut key = [0u8; 32];
        for (i, byte) in key.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let word_pos: u128 = self.word_pos.parse().map_err(|_| {
            CheckpointError::Header(format!("invalid rng word position {:?}", self.word_pos))
        })?;
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Complete trainer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub optimizer: AdamState,
    pub rng: RngState,
    /// Completed epochs.
    pub epoch: usize,
    pub best_loss: Option<f64>,
    pub stale_epochs: usize,
    pub train_config: TrainConfig,
    pub normalization: Option<ZNormStats>,
    pub history: RunHistory,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    tensors: Vec<TensorEntry>,
    optimizer_step: u64,
    rng: RngState,
    epoch: usize,
    best_loss: Option<f64>,
    stale_epochs: usize,
    train_config: TrainConfig,
    normalization: Option<ZNormStats>,
    history: RunHistory,
}

fn take<'a>(
    bytes: &mut &'a [u8],
    n: usize,
    section: &'static str,
) -> Result<&'a [u8], CheckpointError> {
    if bytes.len() < n {
        return Err(CheckpointError::Truncated {
            section,
            needed: n,
            available: bytes.len(),
        });
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], section: &'static str) -> Result<u32, CheckpointError> {
    let raw = take(bytes, 4, section)?;
    Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.model.tensors();
        let header = Header {
            model_config: self.model.config.clone(),
            tensors: self
                .model
                .tensor_names()
                .into_iter()
                .zip(&tensors)
                .map(|(name, t)| TensorEntry {
                    name,
                    shape: t.shape().to_vec(),
                })
                .collect(),
            optimizer_step: self.optimizer.step,
            rng: self.rng.clone(),
            epoch: self.epoch,
            best_loss: self.best_loss,
            stale_epochs: self.stale_epochs,
            train_config: self.train_config.clone(),
            normalization: self.normalization.clone(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let values = tensors
            .iter()
            .map(|t| t.data())
            .chain(self.optimizer.m.iter().map(Vec::as_slice))
            .chain(self.optimizer.v.iter().map(Vec::as_slice))
            .flatten();

        let mut out = Vec::with_capacity(16 + json.len() + 24 * self.model.num_parameters());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, CheckpointError> {
        let bytes = &mut bytes;
        if take(bytes, 8, "magic")? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(bytes, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = read_u32(bytes, "header length")? as usize;
        let header: Header = serde_json::from_slice(take(bytes, header_len, "header")?)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;

        header.model_config.validate()?;
        let reference = ModelParams::init(&header.model_config, 0)?;
        let expected: Vec<(String, Vec<usize>)> = reference
            .tensor_names()
            .into_iter()
            .zip(reference.tensors())
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != header.tensors.len() {
            return Err(CheckpointError::TensorCount {
                expected: expected.len(),
                found: header.tensors.len(),
            });
        }
        for (index, ((name, shape), entry)) in expected.iter().zip(&header.tensors).enumerate() {
            if name != &entry.name || shape != &entry.shape {
                return Err(CheckpointError::Shape {
                    index,
                    expected_name: name.clone(),
                    expected: shape.clone(),
                    found_name: entry.name.clone(),
                    found: entry.shape.clone(),
                });
            }
        }

        let sizes: Vec<usize> = expected.iter().map(|(_, s)| s.iter().product()).collect();
        let total: usize = sizes.iter().sum();
        let payload = take(bytes, 3 * total * 8, "payload")?;
        if !bytes.is_empty() {
            return Err(CheckpointError::TrailingBytes(bytes.len()));
        }
        let mut floats = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut next_block = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };

        let mut params = Vec::with_capacity(sizes.len());
        for ((_, shape), &n) in expected.iter().zip(&sizes) {
            params.push(Tensor::new(shape.clone(), next_block(n))?);
        }
        let m: Vec<Vec<f64>> = sizes.iter().map(|&n| next_block(n)).collect();
        let v: Vec<Vec<f64>> = sizes.iter().map(|&n| next_block(n)).collect();
        if let Some(bad) = m.iter().chain(&v).flatten().find(|x| !x.is_finite()) {
            return Err(CheckpointError::Header(format!(
                "non-finite optimizer moment {bad}"
            )));
        }

        Ok(Self {
            model: ModelParams::from_tensors(&header.model_config, params)?,
            optimizer: AdamState {
                step: header.optimizer_step,
                m,
                v,
            },
            rng: header.rng,
            epoch: header.epoch,
            best_loss: header.best_loss,
            stale_epochs: header.stale_epochs,
            train_config: header.train_config,
            normalization: header.normalization,
            history: header.history,
        })
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    checkpoint: &Checkpoint,
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    write_atomic(path, &checkpoint.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}
