use std::path::{Path, PathBuf};

use clap::Args;
use seqmine_core::data::{parse_ts, synth_motif_dataset, DataError, SequenceDataset, SynthSpec};
use seqmine_core::experiment::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Flags shared by every subcommand; each one overrides the run-spec file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run-spec file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training split in `.ts` format.
    #[arg(long)]
    pub data_train: Option<PathBuf>,
    /// Test split in `.ts` format.
    #[arg(long)]
    pub data_test: Option<PathBuf>,
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Everything a command needs, loaded from `--config` with flags applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSpec {
    pub seed: u64,
    pub out: PathBuf,
    pub data_train: Option<PathBuf>,
    pub data_test: Option<PathBuf>,
    /// Used when no `.ts` files are given.
    pub synth: SynthSpec,
    pub experiment: ExperimentConfig,
    pub lengths: Option<Vec<usize>>,
    pub windows: Option<Vec<usize>>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("seqmine-out"),
            data_train: None,
            data_test: None,
            synth: SynthSpec::default(),
            experiment: ExperimentConfig::default(),
            lengths: None,
            windows: None,
        }
    }
}

impl RunSpec {
    pub fn load(args: &CommonArgs) -> Result<Self, CliError> {
        let mut spec = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Validation(format!("{}: invalid run spec: {e}", path.display()))
                })?
            }
            None => RunSpec::default(),
        };
        if let Some(seed) = args.seed {
            spec.seed = seed;
        }
        if let Some(out) = &args.out {
            spec.out = out.clone();
        }
        if let Some(p) = &args.data_train {
            spec.data_train = Some(p.clone());
        }
        if let Some(p) = &args.data_test {
            spec.data_test = Some(p.clone());
        }
        if let Some(e) = args.epochs {
            spec.experiment.train.max_epochs = e;
        }
        spec.experiment
            .model
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        spec.experiment.train.validate()?;
        Ok(spec)
    }

    /// Train and optional test split, read from `.ts` files or generated.
    pub fn load_data(&self) -> Result<(SequenceDataset, Option<SequenceDataset>), CliError> {
        match (&self.data_train, &self.data_test) {
            (Some(train_path), test_path) => {
                let train = read_ts(train_path)?;
                let test = test_path.as_deref().map(read_ts).transpose()?;
                if let Some(t) = &test {
                    if t.class_names != train.class_names {
                        return Err(CliError::Validation(format!(
                            "class labels differ between splits: {:?} vs {:?}",
                            train.class_names, t.class_names
                        )));
                    }
                }
                Ok((train, test))
            }
            (None, Some(_)) => Err(CliError::Validation(
                "--data-test requires --data-train".into(),
            )),
            (None, None) => {
                let data = synth_motif_dataset(&self.synth)?;
                Ok((data.train, Some(data.test)))
            }
        }
    }
}

fn read_ts(path: &Path) -> Result<SequenceDataset, CliError> {
    parse_ts(path).map_err(|e| DataError::from(e).into())
}
