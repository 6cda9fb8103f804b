use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_epoch: usize,
}

impl TrainReport {
    /// `epoch,loss,macro_auprc` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,macro_auprc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.metric));
        }
        out
    }

    pub fn write(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(csv_path, self.to_csv())?;
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(json_path, json + "\n")
    }
}
