//! Labelled multivariate sequences: `.ts` ingestion, synthetic motif data,
//! and the length/normalization transforms used by the experiments.

mod batch;
mod synth;
mod transform;
pub mod ts;

pub use batch::{batches, Batches};
pub use synth::{nearest_motif_class, synth_motif_dataset, SynthData, SynthSpec};
pub use transform::{pad_or_trim, pad_or_trim_dataset, znorm, ZNormStats};
pub use ts::{parse_ts, parse_ts_str, to_ts_string, TsError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error(transparent)]
    Ts(#[from] TsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("target length must be at least 1")]
    InvalidLength,
    #[error("invalid synthetic spec: {0}")]
    InvalidSynth(String),
    #[error("channel count mismatch: expected {expected}, found {found}")]
    Channels { expected: usize, found: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One sequence `[T, d]`, time-major with one column per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub values: Tensor,
    pub label: usize,
}

impl SequenceSample {
    pub fn new(values: Tensor, label: usize) -> Result<Self, DataError> {
        if values.rank() != 2 {
            return Err(DataError::Tensor(TensorError::Rank {
                op: "sample",
                expected: 2,
                shape: values.shape().to_vec(),
            }));
        }
        Ok(Self { values, label })
    }

    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub name: String,
    pub samples: Vec<SequenceSample>,
    /// Label `i` is `class_names[i]`.
    pub class_names: Vec<String>,
    pub channels: usize,
    pub split: Split,
}

impl SequenceDataset {
    pub fn new(
        name: impl Into<String>,
        samples: Vec<SequenceSample>,
        class_names: Vec<String>,
        channels: usize,
        split: Split,
    ) -> Result<Self, DataError> {
        for s in &samples {
            if s.channels() != channels {
                return Err(DataError::Channels {
                    expected: channels,
                    found: s.channels(),
                });
            }
            if s.label >= class_names.len() {
                return Err(DataError::Label {
                    label: s.label,
                    classes: class_names.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            samples,
            class_names,
            channels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Length of every sample when they all agree.
    pub fn common_length(&self) -> Option<usize> {
        let first = self.samples.first()?.len();
        self.samples
            .iter()
            .all(|s| s.len() == first)
            .then_some(first)
    }
}
