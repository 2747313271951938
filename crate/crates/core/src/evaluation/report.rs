use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{CurveRow, TrainingRecord};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    NewUser,
    MostRecent,
}

/// One scored online prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    /// Student index in the evaluated dataset.
    pub student: usize,
    pub position: usize,
    /// Index of the online batch within the student's scored span.
    pub batch: usize,
    pub label: u8,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStat {
    pub batch: usize,
    /// Absent when the batch holds a single class.
    pub auc: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub model_name: String,
    /// Pooled AUC; absent when all scored labels share one class.
    pub auc: Option<f64>,
    pub mean_log_loss: f64,
    pub num_scored: usize,
    pub per_batch: Vec<BatchStat>,
    /// `key=value` settings sufficient to re-run the evaluation.
    pub config_echo: BTreeMap<String, String>,
    /// Echoed keys whose values are tool defaults rather than published
    /// settings.
    pub artifact_chosen: Vec<String>,
    /// Pooled predictions ordered by (student, position).
    #[serde(skip)]
    pub predictions: Vec<ScoredPrediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `(epoch, train log loss, held-out log loss)` rows of a training run.
pub fn learning_curves(run: &TrainingRecord) -> Vec<CurveRow> {
    run.curve.clone()
}

/// CSV with header `epoch,train_log_loss,test_log_loss`.
pub fn write_curves_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_log_loss", "test_log_loss"])?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.train_log_loss.to_string(),
            r.test_log_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
