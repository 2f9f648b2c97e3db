//! Confusion matrix, accuracy, precision and recall.
//!
//! Precision and recall are macro-averaged by default. A class that is
//! never predicted has precision 0 rather than undefined; such classes are
//! listed in [`EvalReport::zero_division_classes`]. Classes with neither true
//! samples nor predictions are left out of the macro means.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predictions ({preds}) and labels ({labels}) differ in length")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class index {index} out of range for {classes} classes")]
    OutOfRange { index: usize, classes: usize },
    #[error("no samples to evaluate")]
    NoSamples,
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }
}

pub fn confusion(
    preds: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in preds.iter().zip(labels) {
        for index in [p, t] {
            if index >= num_classes {
                return Err(MetricsError::OutOfRange {
                    index,
                    classes: num_classes,
                });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub per_class_precision: Vec<f64>,
    /// `None` for classes without true samples.
    pub per_class_recall: Vec<Option<f64>>,
    pub zero_division_classes: Vec<usize>,
    pub samples: u64,
    pub confusion: ConfusionMatrix,
}

/// Macro-averaged report.
pub fn report(cm: &ConfusionMatrix) -> Result<EvalReport, MetricsError> {
    report_with(cm, Averaging::Macro)
}

pub fn report_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<EvalReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::NoSamples);
    }
    let classes = cm.num_classes();
    let mut per_class_precision = Vec::with_capacity(classes);
    let mut per_class_recall = Vec::with_capacity(classes);
    let mut zero_division_classes = Vec::new();
    for k in 0..classes {
        let tp = cm.counts[k][k] as f64;
        let (col, row) = (cm.col_sum(k), cm.row_sum(k));
        if col == 0 {
            per_class_precision.push(0.0);
            if row > 0 {
                zero_division_classes.push(k);
            }
        } else {
            per_class_precision.push(tp / col as f64);
        }
        per_class_recall.push((row > 0).then(|| tp / row as f64));
    }
    let accuracy = cm.trace() as f64 / total as f64;
    let represented: Vec<usize> = (0..classes)
        .filter(|&k| cm.row_sum(k) > 0 || cm.col_sum(k) > 0)
        .collect();

    let (precision, recall) = match averaging {
        Averaging::Micro => (accuracy, accuracy),
        Averaging::Macro => {
            let p = represented
                .iter()
                .map(|&k| per_class_precision[k])
                .sum::<f64>()
                / represented.len() as f64;
            let supported: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
            (p, supported.iter().sum::<f64>() / supported.len() as f64)
        }
        Averaging::Weighted => {
            let w = |k: usize| cm.row_sum(k) as f64 / total as f64;
            let p = (0..classes).map(|k| w(k) * per_class_precision[k]).sum();
            let r = (0..classes)
                .map(|k| w(k) * per_class_recall[k].unwrap_or(0.0))
                .sum();
            (p, r)
        }
    };
    Ok(EvalReport {
        averaging,
        accuracy,
        precision,
        recall,
        per_class_precision,
        per_class_recall,
        zero_division_classes,
        samples: total,
        confusion: cm.clone(),
    })
}

impl EvalReport {
    /// `model,Acc,Precision,Recall` with percentages to two decimals.
    pub fn table_csv(&self, model_name: &str) -> String {
        format!(
            "model,Acc,Precision,Recall\n{}\n",
            self.table_row(model_name)
        )
    }

    pub fn table_row(&self, model_name: &str) -> String {
        format!(
            "{},{:.2},{:.2},{:.2}",
            model_name,
            100.0 * self.accuracy,
            100.0 * self.precision,
            100.0 * self.recall
        )
    }
}
