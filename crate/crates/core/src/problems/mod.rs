//! Synthetic stochastic-gradient problems with known (or boundable) smoothness.

mod dataset;
mod logistic;
mod mlp;
mod quadratic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::vector::ParamVector;

pub use dataset::Dataset;
pub use logistic::{make_logistic, Logistic};
pub use mlp::{make_mlp, Mlp};
pub use quadratic::{make_quadratic, Quadratic};

/// One stochastic draw: either minibatch row indices or an additive noise vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Indices(Vec<usize>),
    Noise(ParamVector),
}

/// A stochastic first-order oracle for `F(x) = E[f(x, ξ)]`.
pub trait GradOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, x: &ParamVector) -> f64;

    fn exact_gradient(&self, x: &ParamVector) -> ParamVector;

    /// Draws `ξ` for a minibatch of `batch` examples.
    fn draw(&self, rng: &mut ChaCha8Rng, batch: usize) -> Sample;

    fn stochastic_gradient(&self, x: &ParamVector, sample: &Sample) -> ParamVector;

    /// Smoothness constant `L` (or a documented upper bound) when known.
    fn smoothness(&self) -> Option<f64>;

    /// Per-tensor blocks; a single block for unstructured problems.
    fn natural_partition(&self) -> BlockPartition;

    fn initial_point(&self) -> ParamVector;
}

/// Problem description as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        condition: f64,
        noise: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Logistic {
        samples: usize,
        features: usize,
        #[serde(default = "default_balance")]
        class_balance: f64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Mlp {
        layers: Vec<usize>,
        samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_balance() -> f64 {
    0.5
}

fn default_separation() -> f64 {
    1.0
}

impl ProblemSpec {
    /// Builds the oracle. Data generation uses the spec's own seed when set,
    /// otherwise `run_seed`.
    pub fn build(&self, run_seed: u64) -> Result<Box<dyn GradOracle>> {
        let data_seed = |s: &Option<u64>| mix(s.unwrap_or(run_seed), 0x9e37_79b9);
        Ok(match self {
            ProblemSpec::Quadratic {
                dim,
                condition,
                noise,
                seed,
            } => Box::new(make_quadratic(*dim, *condition, *noise, data_seed(seed))?),
            ProblemSpec::Logistic {
                samples,
                features,
                class_balance,
                separation,
                seed,
            } => Box::new(Logistic::generate(
                *samples,
                *features,
                *class_balance,
                *separation,
                data_seed(seed),
            )?),
            ProblemSpec::Mlp {
                layers,
                samples,
                seed,
            } => Box::new(make_mlp(layers, *samples, data_seed(seed))?),
        })
    }
}

/// SplitMix64 finalizer over `a ⊕ rot(b)`; derives independent seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for worker `worker` at iteration `t`: keyed by `(seed, worker)`, with
/// the iteration selecting the ChaCha stream.
pub fn worker_rng(seed: u64, t: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, worker.wrapping_add(1)));
    rng.set_stream(t);
    rng
}

/// Deterministic minibatch for `(seed, t, worker)`.
pub fn sample_minibatch(
    oracle: &dyn GradOracle,
    seed: u64,
    t: u64,
    worker: u64,
    batch: usize,
) -> Sample {
    oracle.draw(&mut worker_rng(seed, t, worker), batch)
}

/// Indices of a minibatch drawn without replacement, sorted ascending;
/// `batch >= n` returns every row.
pub(crate) fn draw_indices(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n, batch).into_vec();
    idx.sort_unstable();
    idx
}

/// Largest observed `‖∇F(x) − ∇F(y)‖ / ‖x − y‖` over random pairs around the
/// initial point. A lower estimate of `L` for problems without a closed form.
pub fn estimate_smoothness(oracle: &dyn GradOracle, pairs: usize, radius: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = oracle.initial_point();
    let d = oracle.dim();
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let x = ParamVector::from_vec(
            x0.iter()
                .map(|&v| v + radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        );
        let y = ParamVector::from_vec(
            x.iter()
                .map(|&v| v + 1e-3 * radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        );
        let num = oracle
            .exact_gradient(&x)
            .sub(&oracle.exact_gradient(&y))
            .l2_squared()
            .sqrt();
        let den = x.sub(&y).l2_squared().sqrt();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    debug_assert!(d > 0);
    best
}

pub(crate) fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
    }
    Ok(())
}
