//! Seeded end-to-end runs and the sequence-length and window-size sweeps.
//!
//! Every run goes through [`prepare`] (z-normalization fitted on train, then
//! optional pad/trim) and [`run_training`], so a one-point sweep reproduces
//! a plain training run exactly. Each grid point retrains from scratch with
//! the same seed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{pad_or_trim_dataset, znorm, SequenceDataset, ZNormStats};
use crate::model::{ModelConfig, ModelParams};
use crate::training::{
    evaluate, Checkpoint, Evaluation, RunHistory, StopOn, TrainConfig, TrainError, Trainer,
};

pub const DEFAULT_LENGTH_GRID: [usize; 6] = [20, 60, 100, 140, 180, 200];
pub const DEFAULT_WINDOW_GRID: [usize; 3] = [3, 7, 11];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// `input_dim` and `num_classes` are taken from the data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub normalize: bool,
    /// Pad or trim every sequence to this many steps.
    pub length: Option<usize>,
    /// Record test metrics in the history after every epoch.
    pub eval_every_epoch: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            normalize: true,
            length: None,
            eval_every_epoch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: SequenceDataset,
    pub test: Option<SequenceDataset>,
    pub stats: Option<ZNormStats>,
}

pub fn prepare(
    train: &SequenceDataset,
    test: Option<&SequenceDataset>,
    normalize: bool,
    length: Option<usize>,
) -> Result<Prepared, TrainError> {
    let (mut train, mut test, stats) = if normalize {
        let (tr, te, stats) = znorm(train, test)?;
        (tr, te, Some(stats))
    } else {
        (train.clone(), test.cloned(), None)
    };
    if let Some(len) = length {
        train = pad_or_trim_dataset(&train, len)?;
        test = test.map(|t| pad_or_trim_dataset(&t, len)).transpose()?;
    }
    Ok(Prepared { train, test, stats })
}

/// Model configuration with the data-dependent fields filled in.
pub fn model_config_for(config: &ExperimentConfig, train: &SequenceDataset) -> ModelConfig {
    ModelConfig {
        input_dim: train.channels,
        num_classes: train.num_classes(),
        ..config.model.clone()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub params: ModelParams,
    pub history: RunHistory,
    pub checkpoint: Checkpoint,
    pub test: Option<Evaluation>,
}

/// Prepares the data, trains a model initialized from `seed`, and evaluates
/// on the test split when one is given. `seed` also drives batch shuffling.
pub fn run_training(
    config: &ExperimentConfig,
    train: &SequenceDataset,
    test: Option<&SequenceDataset>,
    seed: u64,
) -> Result<RunOutcome, TrainError> {
    let data = prepare(train, test, config.normalize, config.length)?;
    let model_config = model_config_for(config, &data.train);
    let params = ModelParams::init(&model_config, seed)?;
    let train_config = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let mut trainer = Trainer::new(params, train_config)?.with_normalization(data.stats.clone());
    let per_epoch = config.eval_every_epoch || config.train.stop_on == StopOn::EvalLoss;
    trainer.fit(&data.train, data.test.as_ref().filter(|_| per_epoch))?;
    let checkpoint = trainer.checkpoint();
    let (params, history) = trainer.into_parts();
    let test = data
        .test
        .as_ref()
        .map(|t| evaluate(&params, t))
        .transpose()?;
    Ok(RunOutcome {
        params,
        history,
        checkpoint,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub result: Result<SweepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Column name of the swept quantity.
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

impl SweepTable {
    /// `<parameter>,acc,precision,recall,status,error` with metrics as
    /// fractions to four decimals; failed cells leave the metrics empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},acc,precision,recall,status,error\n", self.parameter);
        for row in &self.rows {
            let _ = match &row.result {
                Ok(m) => writeln!(
                    out,
                    "{},{:.4},{:.4},{:.4},ok,",
                    row.value, m.accuracy, m.precision, m.recall
                ),
                Err(e) => writeln!(out, "{},,,,failed,{}", row.value, csv_quote(e)),
            };
        }
        out
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }
}

fn sweep_cell(
    config: &ExperimentConfig,
    train: &SequenceDataset,
    test: &SequenceDataset,
    seed: u64,
) -> Result<SweepMetrics, String> {
    let outcome = run_training(config, train, Some(test), seed).map_err(|e| e.to_string())?;
    let r = &outcome.test.expect("test split evaluated").report;
    Ok(SweepMetrics {
        accuracy: r.accuracy,
        precision: r.precision,
        recall: r.recall,
    })
}

/// Retrains and evaluates once per target length.
pub fn sweep_length(
    config: &ExperimentConfig,
    train: &SequenceDataset,
    test: &SequenceDataset,
    lengths: &[usize],
    seed: u64,
) -> Result<SweepTable, TrainError> {
    if lengths.is_empty() {
        return Err(TrainError::Config("length grid is empty".into()));
    }
    if lengths.contains(&0) {
        return Err(TrainError::Config(
            "sequence lengths must be at least 1".into(),
        ));
    }
    let rows = lengths
        .iter()
        .map(|&len| {
            log::info!("sweep-length: L = {len}");
            let cfg = ExperimentConfig {
                length: Some(len),
                ..config.clone()
            };
            SweepRow {
                value: len,
                result: sweep_cell(&cfg, train, test, seed),
            }
        })
        .collect();
    Ok(SweepTable {
        parameter: "length".into(),
        rows,
    })
}

/// Retrains a single-scale model once per odd window length.
pub fn sweep_window(
    config: &ExperimentConfig,
    train: &SequenceDataset,
    test: &SequenceDataset,
    windows: &[usize],
    seed: u64,
) -> Result<SweepTable, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::Config("window grid is empty".into()));
    }
    if let Some(w) = windows.iter().find(|&&w| w % 2 == 0) {
        return Err(TrainError::Config(format!(
            "window lengths must be odd, got {w}"
        )));
    }
    let rows = windows
        .iter()
        .map(|&w| {
            log::info!("sweep-window: W = {w}");
            let mut cfg = config.clone();
            cfg.model.window_lengths = vec![w];
            SweepRow {
                value: w,
                result: sweep_cell(&cfg, train, test, seed),
            }
        })
        .collect();
    Ok(SweepTable {
        parameter: "window".into(),
        rows,
    })
}
