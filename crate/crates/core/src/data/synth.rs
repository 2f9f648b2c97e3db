//! Seeded motif datasets: each class owns a short multichannel pattern that
//! is added at a random offset to Gaussian background noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, SequenceDataset, SequenceSample, Split};
use crate::autodiff::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_classes: usize,
    /// Pool size per class before the 2:1 train/test split.
    pub samples_per_class: usize,
    pub length: usize,
    pub channels: usize,
    pub motif_length: usize,
    /// Standard deviation of the background noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            samples_per_class: 75,
            length: 50,
            channels: 3,
            motif_length: 10,
            noise: 0.3,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSynth(m));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.samples_per_class < 2 {
            return bad("need at least 2 samples per class to split".into());
        }
        if self.channels == 0 || self.motif_length == 0 {
            return bad("channels and motif_length must be positive".into());
        }
        if self.motif_length > self.length {
            return bad(format!(
                "motif length {} exceeds sequence length {}",
                self.motif_length, self.length
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!(
                "noise must be a finite non-negative number, got {}",
                self.noise
            ));
        }
        Ok(())
    }

    /// Training samples per class: two thirds of the pool, rounded.
    pub fn train_per_class(&self) -> usize {
        (2 * self.samples_per_class + 1) / 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: SequenceDataset,
    pub test: SequenceDataset,
    /// One `[motif_length, channels]` pattern per class.
    pub motifs: Vec<Tensor>,
}

fn class_motif(rng: &mut ChaCha8Rng, len: usize, channels: usize) -> Result<Tensor, DataError> {
    let mut data = vec![0.0; len * channels];
    for c in 0..channels {
        let amplitude = rng.random_range(1.0..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let cycles = rng.random_range(0.0..2.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        for i in 0..len {
            let envelope = (PI * (i + 1) as f64 / (len + 1) as f64).sin();
            let wave = (2.0 * PI * cycles * i as f64 / len as f64 + phase).cos();
            data[i * channels + c] = amplitude * envelope * wave;
        }
    }
    Ok(Tensor::new(vec![len, channels], data)?)
}

/// Generates the class motifs, then for every class `samples_per_class`
/// sequences; the first two thirds of each class go to train.
pub fn synth_motif_dataset(spec: &SynthSpec) -> Result<SynthData, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (len, d, m) = (spec.length, spec.channels, spec.motif_length);
    let motifs = (0..spec.num_classes)
        .map(|_| class_motif(&mut rng, m, d))
        .collect::<Result<Vec<_>, _>>()?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| DataError::InvalidSynth(e.to_string()))?;

    let n_train = spec.train_per_class();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for i in 0..spec.samples_per_class {
        // interleave classes so neither split is sorted by label
        for (label, motif) in motifs.iter().enumerate() {
            let mut data: Vec<f64> = (0..len * d).map(|_| noise.sample(&mut rng)).collect();
            let offset = rng.random_range(0..=len - m);
            for (j, v) in motif.data().iter().enumerate() {
                data[offset * d + j] += v;
            }
            let sample = SequenceSample::new(Tensor::new(vec![len, d], data)?, label)?;
            if i < n_train {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    let names: Vec<String> = (0..spec.num_classes).map(|k| format!("c{k}")).collect();
    let name = format!("synth-motif-{}", spec.seed);
    Ok(SynthData {
        train: SequenceDataset::new(name.clone(), train, names.clone(), d, Split::Train)?,
        test: SequenceDataset::new(name, test, names, d, Split::Test)?,
        motifs,
    })
}

/// Brute-force matcher: slides every motif over the sample and returns the
/// class whose best placement has the smallest squared error.
pub fn nearest_motif_class(values: &Tensor, motifs: &[Tensor]) -> usize {
    let (len, d) = (values.shape()[0], values.shape()[1]);
    let mut best = (0, f64::INFINITY);
    for (k, motif) in motifs.iter().enumerate() {
        let m = motif.shape()[0];
        if m > len {
            continue;
        }
        for offset in 0..=len - m {
            let window = &values.data()[offset * d..(offset + m) * d];
            let sse: f64 = window
                .iter()
                .zip(motif.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if sse < best.1 {
                best = (k, sse);
            }
        }
    }
    best.0
}
