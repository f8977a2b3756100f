use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    /// `joint` for single-stage kinds; `shared` then `deep[<task>]` for deep kinds.
    pub stage: String,
    pub epoch: usize,
    /// Mean squared difference per visible dimension between the data and the
    /// visible means reconstructed from sampled hidden states.
    pub reconstruction_error: f64,
    /// Sequence-level accuracy on the training data after the epoch.
    pub train_accuracy: BTreeMap<String, f64>,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub kind: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochReport>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per epoch: `stage,epoch,updates,reconstruction_error,<task accuracies>`.
    pub fn to_csv(&self) -> String {
        let tasks: Vec<&String> = {
            let mut t: Vec<&String> = self.epochs.iter().flat_map(|e| e.train_accuracy.keys()).collect();
            t.sort();
            t.dedup();
            t
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["stage".to_string(), "epoch".into(), "updates".into(), "reconstruction_error".into()];
        header.extend(tasks.iter().map(|t| format!("accuracy_{t}")));
        w.write_record(&header).expect("in-memory write");
        for e in &self.epochs {
            let mut row = vec![
                e.stage.clone(),
                e.epoch.to_string(),
                e.updates.to_string(),
                e.reconstruction_error.to_string(),
            ];
            row.extend(tasks.iter().map(|t| e.train_accuracy.get(*t).map_or(String::new(), |a| a.to_string())));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Epoch entries of one stage.
    pub fn stage(&self, name: &str) -> Vec<&EpochReport> {
        self.epochs.iter().filter(|e| e.stage == name).collect()
    }
}
