//! Mini-batch Adam training with early stopping, run history and resumable
//! checkpoints.

mod adam;
mod checkpoint;
mod history;

pub use adam::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, RngState, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use history::{EpochMetrics, EpochRecord, RunHistory};

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::TensorError;
use crate::data::{batches, DataError, SequenceDataset, ZNormStats};
use crate::error::ModelError;
use crate::metrics::{confusion, report, EvalReport, MetricsError};
use crate::model::{argmax, forward, loss_and_gradients, Example, ModelParams, PROB_FLOOR};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("expected {expected} gradient tensors, found {found}")]
    GradientCount { expected: usize, found: usize },
    #[error("gradient for {tensor} has shape {found:?}, parameter has {expected:?}")]
    GradientShape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("non-finite gradient in {tensor} at element {index}")]
    NonFiniteGradient { tensor: String, index: usize },
    #[error("update made {tensor} non-finite at element {index}")]
    NonFiniteParameter { tensor: String, index: usize },
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        last_good: Box<Checkpoint>,
    },
}

/// Quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopOn {
    #[default]
    TrainLoss,
    EvalLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Epochs without improvement of the watched loss before stopping.
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub stop_on: StopOn,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 16,
            max_epochs: 200,
            seed: 0,
            patience: 10,
            clip_norm: None,
            stop_on: StopOn::TrainLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Loss and report of a model over a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub report: EvalReport,
}

impl Evaluation {
    pub fn metrics(&self) -> EpochMetrics {
        EpochMetrics::new(self.loss, &self.report)
    }
}

/// Mean cross-entropy, predictions and macro report, samples evaluated in parallel.
pub fn evaluate(params: &ModelParams, dataset: &SequenceDataset) -> Result<Evaluation, TrainError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset.into());
    }
    let outputs: Vec<(f64, usize)> = dataset
        .samples
        .par_iter()
        .map(|s| {
            let pred = forward(&s.values, params)?;
            let probs = pred.probs.data();
            let p = probs.get(s.label).ok_or(ModelError::LabelOutOfRange {
                label: s.label,
                classes: probs.len(),
            })?;
            Ok::<_, ModelError>((-p.max(PROB_FLOOR).ln(), argmax(probs)))
        })
        .collect::<Result<_, _>>()?;
    let loss = outputs.iter().map(|o| o.0).sum::<f64>() / outputs.len() as f64;
    let predictions: Vec<usize> = outputs.iter().map(|o| o.1).collect();
    let cm = confusion(&predictions, &dataset.labels(), params.config.num_classes)?;
    Ok(Evaluation {
        loss,
        predictions,
        report: report(&cm)?,
    })
}

fn check_dataset(params: &ModelParams, dataset: &SequenceDataset) -> Result<(), TrainError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset.into());
    }
    let cfg = &params.config;
    if dataset.channels != cfg.input_dim {
        return Err(ModelError::Dimension {
            what: "dataset channels",
            expected: cfg.input_dim,
            found: dataset.channels,
        }
        .into());
    }
    if let Some(&label) = dataset.labels().iter().find(|&&l| l >= cfg.num_classes) {
        return Err(ModelError::LabelOutOfRange {
            label,
            classes: cfg.num_classes,
        }
        .into());
    }
    Ok(())
}

fn is_divergence(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::NonFiniteGradient { .. }
            | TrainError::NonFiniteParameter { .. }
            | TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. }))
    )
}

/// Owns the parameters, optimizer and shuffling generator of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: ModelParams,
    config: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    best_loss: Option<f64>,
    stale_epochs: usize,
    history: RunHistory,
    normalization: Option<ZNormStats>,
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            adam: AdamState::new(&params.tensors()),
            params,
            config,
            rng,
            epoch: 0,
            best_loss: None,
            stale_epochs: 0,
            history: RunHistory::default(),
            normalization: None,
        })
    }

    /// Continues a run from `checkpoint`. `config` replaces the stored
    /// training configuration, which allows extending `max_epochs`.
    pub fn resume(checkpoint: Checkpoint, config: Option<TrainConfig>) -> Result<Self, TrainError> {
        let config = config.unwrap_or(checkpoint.train_config);
        config.validate()?;
        Ok(Self {
            rng: checkpoint.rng.restore()?,
            params: checkpoint.model,
            config,
            adam: checkpoint.optimizer,
            epoch: checkpoint.epoch,
            best_loss: checkpoint.best_loss,
            stale_epochs: checkpoint.stale_epochs,
            history: checkpoint.history,
            normalization: checkpoint.normalization,
        })
    }

    /// Stats stored alongside the weights so inference can normalize raw input.
    pub fn with_normalization(mut self, stats: Option<ZNormStats>) -> Self {
        self.normalization = stats;
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn history(&self) -> &RunHistory {
        &self.history
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn into_parts(self) -> (ModelParams, RunHistory) {
        (self.params, self.history)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.params.clone(),
            optimizer: self.adam.clone(),
            rng: RngState::capture(&self.rng),
            epoch: self.epoch,
            best_loss: self.best_loss,
            stale_epochs: self.stale_epochs,
            train_config: self.config.clone(),
            normalization: self.normalization.clone(),
            history: self.history.clone(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.max_epochs || self.stale_epochs >= self.config.patience
    }

    /// Trains until `max_epochs` or until patience runs out.
    pub fn fit(
        &mut self,
        train: &SequenceDataset,
        eval: Option<&SequenceDataset>,
    ) -> Result<(), TrainError> {
        while !self.is_finished() {
            self.run_epoch(train, eval)?;
        }
        Ok(())
    }

    /// One pass over `train` in a freshly shuffled order. On divergence the
    /// error carries the state from the start of the epoch.
    pub fn run_epoch(
        &mut self,
        train: &SequenceDataset,
        eval: Option<&SequenceDataset>,
    ) -> Result<&EpochRecord, TrainError> {
        check_dataset(&self.params, train)?;
        if let Some(e) = eval {
            check_dataset(&self.params, e)?;
        }
        if self.config.stop_on == StopOn::EvalLoss && eval.is_none() {
            return Err(TrainError::Config(
                "stopping on eval loss requires an eval set".into(),
            ));
        }
        let last_good = self.checkpoint();
        let epoch = self.epoch + 1;
        self.train_one_epoch(train, eval, epoch).map_err(|e| {
            if is_divergence(&e) {
                TrainError::Diverged {
                    epoch,
                    reason: e.to_string(),
                    last_good: Box::new(last_good),
                }
            } else {
                e
            }
        })?;
        Ok(self.history.last().expect("epoch recorded"))
    }

    fn train_one_epoch(
        &mut self,
        train: &SequenceDataset,
        eval: Option<&SequenceDataset>,
        epoch: usize,
    ) -> Result<(), TrainError> {
        let started = Instant::now();
        let names = self.params.tensor_names();
        let adam = self.config.adam();
        let shuffle_seed = self.rng.next_u64();

        let (mut loss_sum, mut preds, mut labels) = (0.0, Vec::new(), Vec::new());
        for batch in batches(&train.samples, self.config.batch_size, shuffle_seed)? {
            let examples: Vec<Example<'_>> = batch.iter().map(|s| (&s.values, s.label)).collect();
            let out = loss_and_gradients(&self.params, &examples)?;
            if !out.loss.is_finite() {
                return Err(TrainError::Model(ModelError::Tensor(
                    TensorError::NonFinite {
                        op: "batch loss",
                        index: 0,
                    },
                )));
            }
            let mut grads = out.grads;
            if let Some(max) = self.config.clip_norm {
                let (_, post) = clip_global_norm(&mut grads, max);
                debug_assert!(post <= max);
            }
            adam_step(
                &mut self.params.tensors_mut(),
                &names,
                &grads,
                &mut self.adam,
                &adam,
            )?;
            loss_sum += out.loss * batch.len() as f64;
            preds.extend(out.predictions);
            labels.extend(batch.iter().map(|s| s.label));
        }

        let loss = loss_sum / train.len() as f64;
        let train_report = report(&confusion(&preds, &labels, self.params.config.num_classes)?)?;
        let eval_metrics = eval
            .map(|e| evaluate(&self.params, e))
            .transpose()?
            .map(|e| e.metrics());

        let watched = match self.config.stop_on {
            StopOn::TrainLoss => loss,
            StopOn::EvalLoss => eval_metrics.map_or(loss, |m| m.loss),
        };
        if self.best_loss.is_none_or(|best| watched < best) {
            self.best_loss = Some(watched);
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
        }
        self.epoch = epoch;
        let record = EpochRecord {
            epoch,
            train: EpochMetrics::new(loss, &train_report),
            eval: eval_metrics,
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.6} acc {:.4}{}",
            loss,
            train_report.accuracy,
            eval_metrics
                .map(|m| format!(" eval acc {:.4}", m.accuracy))
                .unwrap_or_default()
        );
        self.history.epochs.push(record);
        Ok(())
    }
}

/// Trains `model` from scratch and returns the final parameters with the run history.
pub fn train(
    model: ModelParams,
    train_set: &SequenceDataset,
    eval_set: Option<&SequenceDataset>,
    config: &TrainConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.fit(train_set, eval_set)?;
    Ok(trainer.into_parts())
}
