//! Deterministic parameter-server simulation, communication accounting and
//! the numerical checks run against recorded trajectories.

mod checks;
mod output;
mod run;
mod suite;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checks::{
    check_error_bound, check_lemma1, check_lemma4, check_virtual_iterate, error_bound,
    ErrorBoundCheck, Trace, TransitionRecord, RECURRENCE_TOLERANCE,
};
pub use output::{read_metrics_csv, write_metrics_csv, FinalMetrics, RunSummary};
pub use run::{run_experiment, run_experiment_with, RunOptions, RunOutput, VerificationReport};
pub use suite::{run_verification_suite, CheckResult};

/// Divergence guard: a run aborts once the loss or `‖x‖₂` exceeds this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// One row of the metric series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub t: usize,
    pub loss: f64,
    /// `‖∇F(x_t)‖²`
    pub grad_norm_sq: f64,
    /// `‖ẽ_t + (1/M)Σ e_{t,i}‖²`
    pub error_norm_sq: f64,
    pub stepsize: f64,
    pub bits_ideal: u64,
    pub bits_wire: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMethod {
    FullPrecision,
    MajorityVote,
    DistEfBlock,
}

/// Bits exchanged per iteration, both directions, all workers:
/// full precision `64Md`, majority vote `2Md`, blockwise error feedback `2Md + 64MB`.
pub fn comm_cost(method: CommMethod, workers: u64, dim: u64, blocks: u64) -> u64 {
    match method {
        CommMethod::FullPrecision => 64 * workers * dim,
        CommMethod::MajorityVote => 2 * workers * dim,
        CommMethod::DistEfBlock => 2 * workers * dim + 64 * workers * blocks,
    }
}

/// Probability of reporting iterate `k`: `η_k(3 − 2Lη_k) / Σ_t η_t(3 − 2Lη_t)`.
///
/// Every stepsize must satisfy `η_t < 3/(2L)`.
pub fn sample_output_index(stepsizes: &[f64], smoothness: f64) -> Result<Vec<f64>> {
    let limit = 1.5 / smoothness;
    let mut weights = Vec::with_capacity(stepsizes.len());
    for (t, &eta) in stepsizes.iter().enumerate() {
        if !(eta < limit) {
            return Err(Error::StepsizeTooLarge { t, eta, limit });
        }
        weights.push(eta * (3.0 - 2.0 * smoothness * eta));
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
    Ok(weights)
}

/// `E‖∇F(x_o)‖²` under the output-index distribution.
pub fn expected_output_grad_norm(metrics: &[IterationMetrics], smoothness: f64) -> Result<f64> {
    let etas: Vec<f64> = metrics.iter().map(|m| m.stepsize).collect();
    let probs = sample_output_index(&etas, smoothness)?;
    Ok(probs
        .iter()
        .zip(metrics)
        .map(|(p, m)| p * m.grad_norm_sq)
        .sum())
}
