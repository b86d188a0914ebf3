use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub utterance_id: String,
    pub stoi: f64,
    pub mse: f64,
}

/// Per-utterance STOI and waveform MSE of one model on one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub corpus: String,
    pub seed: u64,
    pub scores: Vec<UtteranceScore>,
}

impl MetricsReport {
    pub fn mean_stoi(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.stoi))
    }

    pub fn mean_mse(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.mse))
    }

    /// `utterance_id,stoi,mse` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("utterance_id,stoi,mse\n");
        for r in &self.scores {
            let _ = writeln!(s, "{},{},{}", r.utterance_id, r.stoi, r.mse);
        }
        let _ = writeln!(s, "mean,{},{}", self.mean_stoi(), self.mean_mse());
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        return f64::NAN;
    }
    it.sum::<f64>() / n as f64
}
