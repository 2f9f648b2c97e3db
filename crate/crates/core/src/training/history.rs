use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::EvalReport;

/// Loss and macro metrics over one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

impl EpochMetrics {
    pub fn new(loss: f64, report: &EvalReport) -> Self {
        Self {
            loss,
            accuracy: report.accuracy,
            precision: report.precision,
            recall: report.recall,
        }
    }
}

/// Wall time is informational only: it is not serialized and does not take
/// part in equality, so histories of identical runs compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Train loss is the mean over the epoch's batches as they were seen.
    pub train: EpochMetrics,
    pub eval: Option<EpochMetrics>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch && self.train == other.train && self.eval == other.eval
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train.loss).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One row per epoch: `epoch,loss,acc,precision,recall`, followed by
    /// the eval columns when any epoch was evaluated.
    pub fn to_csv(&self) -> String {
        let with_eval = self.epochs.iter().any(|e| e.eval.is_some());
        let mut out = String::from("epoch,loss,acc,precision,recall");
        if with_eval {
            out.push_str(",eval_loss,eval_acc,eval_precision,eval_recall");
        }
        out.push('\n');
        for e in &self.epochs {
            let t = &e.train;
            let _ = write!(
                out,
                "{},{},{},{},{}",
                e.epoch, t.loss, t.accuracy, t.precision, t.recall
            );
            if with_eval {
                match &e.eval {
                    Some(v) => {
                        let _ = write!(
                            out,
                            ",{},{},{},{}",
                            v.loss, v.accuracy, v.precision, v.recall
                        );
                    }
                    None => out.push_str(",,,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}
