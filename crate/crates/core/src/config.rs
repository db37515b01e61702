//! Run configuration as read from JSON.
//!
//! Compressor and schedule entries are written without dimension-dependent
//! details; [`RunConfig::resolve`] binds them to the problem's dimension,
//! natural partition, worker count and horizon.

use serde::{Deserialize, Serialize};

use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::optim::ScheduleSpec;
use crate::partition::BlockPartition;
use crate::problems::{mix, GradOracle, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Two-way compressed error feedback (Nesterov momentum when `momentum > 0`).
    #[default]
    DistEf,
    /// Uncompressed distributed SGD / SGDM.
    FullPrecision,
    /// Sign of gradients, majority vote.
    Signsgd,
    /// Sign of momentum, majority vote.
    Signum,
    /// Single-machine error feedback with the stepsize applied before compression.
    EfSgd,
}

/// How the blockwise compressor splits the vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    /// The problem's per-tensor blocks.
    #[default]
    Natural,
    Sizes(Vec<usize>),
    /// Equal blocks of this size, last block shorter if needed.
    Uniform(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressorConfig {
    Identity,
    ScaledSign,
    BlockwiseScaledSign {
        #[serde(default)]
        blocks: BlockLayout,
    },
    TopK {
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        fraction: Option<f64>,
    },
    UnbiasedScaled {
        #[serde(default)]
        c: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Decreasing,
    Increasing,
    HybridWarmup,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig::BlockwiseScaledSign {
            blocks: BlockLayout::Natural,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
}

impl ScheduleConfig {
    pub fn constant(gamma: f64) -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Constant,
            gamma,
            warmup: None,
        }
    }
}

fn default_batch() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub workers: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub compressor: CompressorConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub problem: ProblemSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Track error-corrected iterates and check the recurrences.
    #[serde(default = "default_true")]
    pub verify: bool,
    /// Send sign-compressed messages through the byte codec.
    #[serde(default)]
    pub wire_mode: bool,
}

/// Everything a run needs after binding the config to a concrete problem.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub dim: usize,
    pub compressor: CompressorSpec,
    pub schedule: ScheduleSpec,
    pub delta_lower_bound: f64,
    pub sampling_seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if !(self.schedule.gamma > 0.0 && self.schedule.gamma.is_finite()) {
            return bad(format!(
                "schedule gamma must be > 0, got {}",
                self.schedule.gamma
            ));
        }
        if self.schedule.kind == ScheduleKind::HybridWarmup && self.schedule.warmup.is_none() {
            return bad("hybrid_warmup schedule needs a warmup length".into());
        }
        if self.optimizer == OptimizerKind::EfSgd && self.workers != 1 {
            return bad("ef_sgd is single-machine; set workers = 1".into());
        }
        if self.wire_mode
            && !matches!(
                self.compressor,
                CompressorConfig::ScaledSign | CompressorConfig::BlockwiseScaledSign { .. }
            )
        {
            return bad("wire_mode needs a sign-based compressor".into());
        }
        Ok(())
    }

    fn uses_compressor(&self) -> bool {
        matches!(self.optimizer, OptimizerKind::DistEf | OptimizerKind::EfSgd)
    }

    pub fn resolve(&self, oracle: &dyn GradOracle) -> Result<ResolvedRun> {
        self.validate()?;
        let d = oracle.dim();
        let compressor = match &self.compressor {
            CompressorConfig::Identity => CompressorSpec::Identity,
            CompressorConfig::ScaledSign => CompressorSpec::ScaledSign,
            CompressorConfig::BlockwiseScaledSign { blocks } => {
                let partition = match blocks {
                    BlockLayout::Natural => oracle.natural_partition(),
                    BlockLayout::Sizes(s) => BlockPartition::new(s)?,
                    BlockLayout::Uniform(n) => BlockPartition::uniform(d, *n)?,
                };
                CompressorSpec::BlockwiseScaledSign { partition }
            }
            CompressorConfig::TopK { k, fraction } => {
                let k = match (k, fraction) {
                    (Some(k), None) => *k,
                    (None, Some(f)) => ((f * d as f64).ceil() as usize).clamp(1, d),
                    _ => {
                        return Err(Error::InvalidConfig(
                            "top_k needs exactly one of k or fraction".into(),
                        ))
                    }
                };
                CompressorSpec::TopK { k }
            }
            CompressorConfig::UnbiasedScaled { c } => CompressorSpec::UnbiasedScaled {
                c: c.unwrap_or(1.0 / d as f64),
                seed: mix(self.seed, 0xc0ffee),
            },
        };
        compressor.validate(d)?;
        let delta = if self.uses_compressor() {
            compressor.delta_lower_bound(d)
        } else {
            1.0
        };
        let (gamma, horizon, workers) = (self.schedule.gamma, self.iterations.max(1), self.workers);
        let schedule = match self.schedule.kind {
            ScheduleKind::Constant => ScheduleSpec::Constant { gamma },
            ScheduleKind::Decreasing => ScheduleSpec::Decreasing {
                gamma,
                horizon,
                workers,
                delta,
            },
            ScheduleKind::Increasing => ScheduleSpec::Increasing {
                gamma,
                horizon,
                workers,
                delta,
            },
            ScheduleKind::HybridWarmup => ScheduleSpec::HybridWarmup {
                gamma,
                horizon,
                workers,
                delta,
                warmup: self.schedule.warmup.unwrap_or(0),
            },
        };
        Ok(ResolvedRun {
            dim: d,
            compressor,
            schedule,
            delta_lower_bound: delta,
            sampling_seed: mix(self.seed, 0x5eed),
        })
    }
}
