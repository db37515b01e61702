use serde::{Deserialize, Serialize};

/// Stepsize sequence `η_t`, with `η_{-1} = 0` for every kind.
///
/// The decreasing and increasing forms depend on the horizon `T`, the worker
/// count `M` and the compressor's δ through the shared constant
/// `K(δ) = (1−δ)^{1/3} (1/δ² + 16/δ⁴)^{1/3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant {
        gamma: f64,
    },
    /// `γ / (((t+1)T)^{1/4}/√M + K T^{1/3})`
    Decreasing {
        gamma: f64,
        horizon: usize,
        workers: usize,
        delta: f64,
    },
    /// `γ √(t+1) / (T/√M + K T^{5/6})`
    Increasing {
        gamma: f64,
        horizon: usize,
        workers: usize,
        delta: f64,
    },
    /// Increasing for `t < warmup`, then decreasing evaluated at `t − warmup`.
    HybridWarmup {
        gamma: f64,
        horizon: usize,
        workers: usize,
        delta: f64,
        warmup: usize,
    },
}

fn compression_constant(delta: f64) -> f64 {
    let d2 = delta * delta;
    ((1.0 - delta).max(0.0)).cbrt() * (1.0 / d2 + 16.0 / (d2 * d2)).cbrt()
}

fn decreasing(gamma: f64, horizon: usize, workers: usize, delta: f64, t: usize) -> f64 {
    let big_t = horizon as f64;
    let denom = (((t + 1) as f64) * big_t).powf(0.25) / (workers as f64).sqrt()
        + compression_constant(delta) * big_t.cbrt();
    gamma / denom
}

fn increasing(gamma: f64, horizon: usize, workers: usize, delta: f64, t: usize) -> f64 {
    let big_t = horizon as f64;
    let denom =
        big_t / (workers as f64).sqrt() + compression_constant(delta) * big_t.powf(5.0 / 6.0);
    gamma * ((t + 1) as f64).sqrt() / denom
}

impl ScheduleSpec {
    pub fn gamma(&self) -> f64 {
        match self {
            ScheduleSpec::Constant { gamma }
            | ScheduleSpec::Decreasing { gamma, .. }
            | ScheduleSpec::Increasing { gamma, .. }
            | ScheduleSpec::HybridWarmup { gamma, .. } => *gamma,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScheduleSpec::Constant { .. })
    }

    /// `η_t` for `t ≥ -1`.
    pub fn stepsize(&self, t: i64) -> f64 {
        if t < 0 {
            return 0.0;
        }
        let t = t as usize;
        match *self {
            ScheduleSpec::Constant { gamma } => gamma,
            ScheduleSpec::Decreasing {
                gamma,
                horizon,
                workers,
                delta,
            } => decreasing(gamma, horizon, workers, delta, t),
            ScheduleSpec::Increasing {
                gamma,
                horizon,
                workers,
                delta,
            } => increasing(gamma, horizon, workers, delta, t),
            ScheduleSpec::HybridWarmup {
                gamma,
                horizon,
                workers,
                delta,
                warmup,
            } => {
                if t < warmup {
                    increasing(gamma, horizon, workers, delta, t)
                } else {
                    decreasing(gamma, horizon, workers, delta, t - warmup)
                }
            }
        }
    }

    /// `η_{t−1} / η_t`; zero at `t = 0`.
    pub fn ratio(&self, t: usize) -> f64 {
        let t = t as i64;
        self.stepsize(t - 1) / self.stepsize(t)
    }
}
