//! Recurrence and error-bound checks over a recorded trajectory.
//!
//! With `x̃_t = x_t − η_{t−1}(ẽ_t + (1/M)Σ e_{t,i})` the error-feedback
//! iterates obey
//!
//! ```text
//! x̃_{t+1} = x̃_t − η_t (1/M) Σ g_{t,i}                  (no momentum)
//! x̃_{t+1} = x̃_t − η_t (1/M) Σ (μ m_{t,i} + g_{t,i})    (momentum)
//! ```
//!
//! and, for constant `η`, `z_t = x̃_t − ημ²/(1−μ) · mean m_{t−1}` obeys
//! `z_{t+1} = z_t − η/(1−μ) · mean g_t`. Residuals are reported relative to
//! the trajectory scale `max(1, ‖x_t‖∞, ‖x̃_t‖∞)`.

use serde::{Deserialize, Serialize};

use crate::vector::ParamVector;

/// Relative residual accepted for the recurrence identities.
pub const RECURRENCE_TOLERANCE: f64 = 1e-9;

/// State around one transition `t → t+1`, averaged over workers.
#[derive(Debug, Clone)]
pub struct TransitionRecord {
    pub t: usize,
    pub eta: f64,
    pub eta_prev: f64,
    pub x: ParamVector,
    pub x_next: ParamVector,
    /// `ẽ_t + mean e_{t,i}`
    pub error: ParamVector,
    pub error_next: ParamVector,
    pub mean_grad: ParamVector,
    /// mean of `m_{t,i}`
    pub mean_momentum: ParamVector,
    /// mean of `m_{t−1,i}`
    pub mean_momentum_prev: ParamVector,
}

impl TransitionRecord {
    fn corrected(&self) -> ParamVector {
        self.x.add_scaled(-self.eta_prev, &self.error)
    }

    fn corrected_next(&self) -> ParamVector {
        self.x_next.add_scaled(-self.eta, &self.error_next)
    }
}

/// Recorded transitions; `stride > 1` when only every `stride`-th one was kept.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TransitionRecord>,
    pub stride: usize,
}

impl Trace {
    fn scale(&self) -> f64 {
        self.records.iter().fold(1.0f64, |acc, r| {
            acc.max(r.x.norm_inf())
                .max(r.x_next.norm_inf())
                .max(r.corrected().norm_inf())
                .max(r.corrected_next().norm_inf())
        })
    }

    fn max_residual(&self, mut residual: impl FnMut(&TransitionRecord) -> f64) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let worst = self
            .records
            .iter()
            .map(&mut residual)
            .fold(0.0f64, f64::max);
        worst / self.scale()
    }
}

fn recurrence_residual(r: &TransitionRecord, direction: &ParamVector) -> f64 {
    let predicted = r.corrected().add_scaled(-r.eta, direction);
    r.corrected_next().sub(&predicted).norm_inf()
}

/// Largest relative residual of `x̃_{t+1} = x̃_t − η_t mean g_t`.
pub fn check_lemma1(trace: &Trace) -> f64 {
    trace.max_residual(|r| recurrence_residual(r, &r.mean_grad))
}

/// Largest relative residual of `x̃_{t+1} = x̃_t − η_t mean(μ m_t + g_t)`.
pub fn check_lemma4(trace: &Trace, mu: f64) -> f64 {
    trace.max_residual(|r| {
        let direction = r.mean_grad.add_scaled(mu, &r.mean_momentum);
        recurrence_residual(r, &direction)
    })
}

/// Largest relative residual of the virtual-iterate recurrence at constant `η`.
pub fn check_virtual_iterate(trace: &Trace, mu: f64, eta: f64) -> f64 {
    let shift = eta * mu * mu / (1.0 - mu);
    trace.max_residual(|r| {
        let z = r.corrected().add_scaled(-shift, &r.mean_momentum_prev);
        let z_next = r.corrected_next().add_scaled(-shift, &r.mean_momentum);
        let predicted = z.add_scaled(-eta / (1.0 - mu), &r.mean_grad);
        z_next.sub(&predicted).norm_inf()
    })
}

/// `8(1−δ)G² / (δ²(1−μ)²) · (1 + 16/δ²)`.
pub fn error_bound(delta: f64, mu: f64, g: f64) -> f64 {
    let d2 = delta * delta;
    8.0 * (1.0 - delta) * g * g / (d2 * (1.0 - mu).powi(2)) * (1.0 + 16.0 / d2)
}

/// Outcome of the per-trajectory error-norm check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundCheck {
    pub bound: f64,
    pub max_observed: f64,
    /// `bound − max_observed`; nonnegative means the check passed.
    pub margin: f64,
    pub delta_lower_bound: f64,
    pub mu: f64,
    /// Running maximum of `‖g_{t,i}‖₂` over the trajectory.
    pub g_estimate: f64,
    pub note: String,
}

/// Compares every observed `‖ẽ_t + mean e_t‖²` with [`error_bound`] evaluated at
/// the empirical `G`. The bound is stated in expectation; this checks each
/// trajectory individually.
pub fn check_error_bound(
    observed: &[f64],
    delta_lower_bound: f64,
    mu: f64,
    g_estimate: f64,
) -> ErrorBoundCheck {
    let bound = error_bound(delta_lower_bound, mu, g_estimate);
    let max_observed = observed.iter().copied().fold(0.0f64, f64::max);
    ErrorBoundCheck {
        bound,
        max_observed,
        margin: bound - max_observed,
        delta_lower_bound,
        mu,
        g_estimate,
        note: "empirical per-trajectory check; G estimated as running max of ||g||".into(),
    }
}
