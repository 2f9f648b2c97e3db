use std::path::{Path, PathBuf};

use seqmine_core::attention::ScaleTrace;
use seqmine_core::data::{pad_or_trim_dataset, to_ts_string, SequenceDataset, Split};
use seqmine_core::experiment::{
    run_training, sweep_length, sweep_window, DEFAULT_LENGTH_GRID, DEFAULT_WINDOW_GRID,
};
use seqmine_core::persist::write_atomic;
use seqmine_core::training::{evaluate, load_checkpoint, save_checkpoint, Checkpoint, TrainError};
use seqmine_core::{forward, EvalReport};
use serde::Serialize;

use crate::error::CliError;
use crate::spec::RunSpec;

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LAST_GOOD_FILE: &str = "last_good.ckpt";
pub const HISTORY_CSV: &str = "history.csv";
pub const HISTORY_JSON: &str = "history.json";
pub const REPORT_JSON: &str = "eval_report.json";
pub const REPORT_CSV: &str = "eval_table.csv";
pub const SWEEP_LENGTH_CSV: &str = "sweep_length.csv";
pub const SWEEP_WINDOW_CSV: &str = "sweep_window.csv";
pub const ATTENTION_JSON: &str = "attention.json";
pub const SYNTH_TRAIN: &str = "synth_TRAIN.ts";
pub const SYNTH_TEST: &str = "synth_TEST.ts";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    write_atomic(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

fn model_name(spec: &RunSpec) -> String {
    let windows: Vec<String> = spec
        .experiment
        .model
        .window_lengths
        .iter()
        .map(|w| w.to_string())
        .collect();
    format!("bilstm-msa[{}]", windows.join("-"))
}

fn write_report(spec: &RunSpec, report: &EvalReport) -> Result<Vec<PathBuf>, CliError> {
    Ok(vec![
        write(&spec.out, REPORT_JSON, &to_json(report))?,
        write(
            &spec.out,
            REPORT_CSV,
            report.table_csv(&model_name(spec)).as_bytes(),
        )?,
    ])
}

pub fn cmd_train(spec: &RunSpec) -> Result<Vec<PathBuf>, CliError> {
    let (train, test) = spec.load_data()?;
    let outcome = match run_training(&spec.experiment, &train, test.as_ref(), spec.seed) {
        Ok(o) => o,
        Err(TrainError::Diverged {
            epoch,
            reason,
            last_good,
        }) => {
            ensure_dir(&spec.out)?;
            let path = spec.out.join(LAST_GOOD_FILE);
            save_checkpoint(&path, &last_good)?;
            return Err(CliError::Diverged(format!(
                "training diverged in epoch {epoch}: {reason}; state before the epoch saved to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    ensure_dir(&spec.out)?;
    let ckpt = spec.out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &outcome.checkpoint)?;
    let mut written = vec![
        ckpt,
        write(&spec.out, HISTORY_CSV, outcome.history.to_csv().as_bytes())?,
        write(
            &spec.out,
            HISTORY_JSON,
            format!("{}\n", outcome.history.to_json()).as_bytes(),
        )?,
    ];
    if let Some(eval) = &outcome.test {
        written.extend(write_report(spec, &eval.report)?);
        println!("{}", eval.report.table_row(&model_name(spec)));
    }
    Ok(written)
}

/// Applies the checkpoint's normalization and the configured length to raw data.
fn prepare_for(
    ckpt: &Checkpoint,
    spec: &RunSpec,
    data: &SequenceDataset,
) -> Result<SequenceDataset, CliError> {
    let mut data = match &ckpt.normalization {
        Some(stats) => stats.apply(data)?,
        None => data.clone(),
    };
    if let Some(len) = spec.experiment.length {
        data = pad_or_trim_dataset(&data, len)?;
    }
    Ok(data)
}

fn pick_split(spec: &RunSpec, split: Split) -> Result<SequenceDataset, CliError> {
    let (train, test) = spec.load_data()?;
    match split {
        Split::Train => Ok(train),
        Split::Test => {
            test.ok_or_else(|| CliError::Validation("no test split given (use --data-test)".into()))
        }
    }
}

pub fn cmd_eval(spec: &RunSpec, checkpoint: &Path) -> Result<Vec<PathBuf>, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let data = prepare_for(&ckpt, spec, &pick_split(spec, Split::Test)?)?;
    let eval = evaluate(&ckpt.model, &data)?;
    ensure_dir(&spec.out)?;
    println!("{}", eval.report.table_row(&model_name(spec)));
    write_report(spec, &eval.report)
}

fn sweep_data(spec: &RunSpec) -> Result<(SequenceDataset, SequenceDataset), CliError> {
    let (train, test) = spec.load_data()?;
    let test = test
        .ok_or_else(|| CliError::Validation("sweeps need a test split (use --data-test)".into()))?;
    Ok((train, test))
}

pub fn cmd_sweep_length(spec: &RunSpec, lengths: &[usize]) -> Result<Vec<PathBuf>, CliError> {
    let (train, test) = sweep_data(spec)?;
    let table = sweep_length(&spec.experiment, &train, &test, lengths, spec.seed)?;
    ensure_dir(&spec.out)?;
    let csv = table.to_csv();
    print!("{csv}");
    Ok(vec![write(&spec.out, SWEEP_LENGTH_CSV, csv.as_bytes())?])
}

pub fn cmd_sweep_window(spec: &RunSpec, windows: &[usize]) -> Result<Vec<PathBuf>, CliError> {
    let (train, test) = sweep_data(spec)?;
    let table = sweep_window(&spec.experiment, &train, &test, windows, spec.seed)?;
    ensure_dir(&spec.out)?;
    let csv = table.to_csv();
    print!("{csv}");
    Ok(vec![write(&spec.out, SWEEP_WINDOW_CSV, csv.as_bytes())?])
}

pub fn length_grid(spec: &RunSpec, flag: &[usize]) -> Vec<usize> {
    if !flag.is_empty() {
        return flag.to_vec();
    }
    spec.lengths
        .clone()
        .unwrap_or_else(|| DEFAULT_LENGTH_GRID.to_vec())
}

pub fn window_grid(spec: &RunSpec, flag: &[usize]) -> Vec<usize> {
    if !flag.is_empty() {
        return flag.to_vec();
    }
    spec.windows
        .clone()
        .unwrap_or_else(|| DEFAULT_WINDOW_GRID.to_vec())
}

pub fn cmd_synth(spec: &RunSpec) -> Result<Vec<PathBuf>, CliError> {
    let data = seqmine_core::data::synth_motif_dataset(&spec.synth)?;
    ensure_dir(&spec.out)?;
    Ok(vec![
        write(&spec.out, SYNTH_TRAIN, to_ts_string(&data.train).as_bytes())?,
        write(&spec.out, SYNTH_TEST, to_ts_string(&data.test).as_bytes())?,
    ])
}

/// Output of `inspect-attention`.
#[derive(Debug, Serialize)]
pub struct AttentionReport {
    pub split: Split,
    pub index: usize,
    pub label: usize,
    pub predicted_class: usize,
    pub probs: Vec<f64>,
    pub scales: Vec<ScaleTrace>,
}

pub fn cmd_inspect_attention(
    spec: &RunSpec,
    checkpoint: &Path,
    split: Split,
    index: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let data = pick_split(spec, split)?;
    let Some(raw) = data.samples.get(index) else {
        return Err(CliError::Validation(format!(
            "sample index {index} out of range ({} samples)",
            data.len()
        )));
    };
    let one = SequenceDataset {
        samples: vec![raw.clone()],
        ..data.clone()
    };
    let sample = &prepare_for(&ckpt, spec, &one)?.samples[0];
    let pred =
        forward(&sample.values, &ckpt.model).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = AttentionReport {
        split,
        index,
        label: sample.label,
        predicted_class: pred.predicted_class,
        probs: pred.probs.data().to_vec(),
        scales: pred.trace.map(|t| t.scales).unwrap_or_default(),
    };
    ensure_dir(&spec.out)?;
    Ok(vec![write(&spec.out, ATTENTION_JSON, &to_json(&report))?])
}
