use std::fs::File;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;

use super::run::{RunOutput, VerificationReport};
use super::IterationMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub iterations: usize,
    pub total_bits_ideal: u64,
    pub total_bits_wire: u64,
    /// `E‖∇F(x_o)‖²` under the output-index distribution, when `L` is known
    /// and every stepsize is below `3/(2L)`.
    #[serde(default)]
    pub expected_output_grad_norm_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
    pub verification: VerificationReport,
    pub smoothness: Option<f64>,
    pub delta_lower_bound: f64,
    pub created_unix: u64,
}

impl RunSummary {
    pub fn new(config: &RunConfig, out: &RunOutput) -> Self {
        let expected = out
            .smoothness
            .and_then(|l| super::expected_output_grad_norm(&out.metrics, l).ok());
        RunSummary {
            config: config.clone(),
            final_metrics: FinalMetrics {
                loss: out.final_loss,
                grad_norm_sq: out.final_grad_norm_sq,
                iterations: out.metrics.len(),
                total_bits_ideal: out.metrics.iter().map(|m| m.bits_ideal).sum(),
                total_bits_wire: out.metrics.iter().map(|m| m.bits_wire).sum(),
                expected_output_grad_norm_sq: expected,
            },
            verification: out.report.clone(),
            smoothness: out.smoothness,
            delta_lower_bound: out.delta_lower_bound,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// One header row, then one row per iteration.
pub fn write_metrics_csv(path: &Path, metrics: &[IterationMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if metrics.is_empty() {
        w.write_record([
            "t",
            "loss",
            "grad_norm_sq",
            "error_norm_sq",
            "stepsize",
            "bits_ideal",
            "bits_wire",
        ])?;
    }
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<IterationMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<IterationMetrics>, csv::Error> = r.deserialize().collect();
    Ok(rows?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            IterationMetrics {
                t: 0,
                loss: 1.5,
                grad_norm_sq: 0.1 + 0.2,
                error_norm_sq: 0.0,
                stepsize: 1e-3,
                bits_ideal: 10,
                bits_wire: 12,
            },
            IterationMetrics {
                t: 1,
                loss: -2.0,
                grad_norm_sq: 1e-300,
                error_norm_sq: 3.0,
                stepsize: 1e-3,
                bits_ideal: 10,
                bits_wire: 12,
            },
        ];
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);

        write_metrics_csv(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,loss,"));
        assert!(read_metrics_csv(&path).unwrap().is_empty());
    }
}
