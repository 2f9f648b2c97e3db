use serde::{Deserialize, Serialize};

use super::{DataError, SequenceDataset, SequenceSample};
use crate::autodiff::Tensor;

/// Fixes a sample to exactly `target` steps: longer samples keep their
/// first `target` steps, shorter ones are padded with zero rows at the end.
pub fn pad_or_trim(sample: &SequenceSample, target: usize) -> Result<SequenceSample, DataError> {
    if target == 0 {
        return Err(DataError::InvalidLength);
    }
    let d = sample.channels();
    let mut data = sample.values.data()[..sample.len().min(target) * d].to_vec();
    data.resize(target * d, 0.0);
    Ok(SequenceSample {
        values: Tensor::new(vec![target, d], data)?,
        label: sample.label,
    })
}

pub fn pad_or_trim_dataset(
    dataset: &SequenceDataset,
    target: usize,
) -> Result<SequenceDataset, DataError> {
    let samples = dataset
        .samples
        .iter()
        .map(|s| pad_or_trim(s, target))
        .collect::<Result<_, _>>()?;
    Ok(SequenceDataset {
        samples,
        ..dataset.clone()
    })
}

/// Per-channel mean and standard deviation fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZNormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZNormStats {
    pub const STD_FLOOR: f64 = 1e-8;

    /// Population statistics over every time step of every sample.
    pub fn fit(train: &SequenceDataset) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let d = train.channels;
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for s in &train.samples {
            for row in s.values.rows() {
                for (acc, v) in sum.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            count += s.len();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; d];
        for s in &train.samples {
            for row in s.values.rows() {
                for ((acc, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    /// `(x - mean) / max(std, 1e-8)` per channel.
    pub fn apply(&self, dataset: &SequenceDataset) -> Result<SequenceDataset, DataError> {
        if dataset.channels != self.mean.len() {
            return Err(DataError::Channels {
                expected: self.mean.len(),
                found: dataset.channels,
            });
        }
        let samples = dataset
            .samples
            .iter()
            .map(|s| self.apply_sample(s))
            .collect::<Result<_, _>>()?;
        Ok(SequenceDataset {
            samples,
            ..dataset.clone()
        })
    }

    pub fn apply_sample(&self, sample: &SequenceSample) -> Result<SequenceSample, DataError> {
        let d = self.mean.len();
        let data = sample
            .values
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i % d;
                (v - self.mean[c]) / self.std[c].max(Self::STD_FLOOR)
            })
            .collect();
        Ok(SequenceSample {
            values: Tensor::new(sample.values.shape().to_vec(), data)?,
            label: sample.label,
        })
    }
}

/// Fits statistics on `train` and applies them to both splits.
pub fn znorm(
    train: &SequenceDataset,
    test: Option<&SequenceDataset>,
) -> Result<(SequenceDataset, Option<SequenceDataset>, ZNormStats), DataError> {
    let stats = ZNormStats::fit(train)?;
    let train = stats.apply(train)?;
    let test = test.map(|t| stats.apply(t)).transpose()?;
    Ok((train, test, stats))
}
