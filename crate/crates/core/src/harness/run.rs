use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressors::{Compress, Compressor, CompressorSpec};
use crate::config::{OptimizerKind, ResolvedRun, RunConfig};
use crate::error::{Error, Result};
use crate::optim::{
    apply_update, ef_sgd_step, full_precision_step, majority_vote_step, momentum_worker_step,
    server_step, worker_step, DecoupledWDState, ServerState, WorkerState,
};
use crate::partition::BlockPartition;
use crate::problems::{sample_minibatch, GradOracle};
use crate::vector::ParamVector;
use crate::wire;

use super::checks::{
    check_error_bound, check_lemma1, check_lemma4, check_virtual_iterate, ErrorBoundCheck, Trace,
    TransitionRecord, RECURRENCE_TOLERANCE,
};
use super::{comm_cost, CommMethod, IterationMetrics, DIVERGENCE_THRESHOLD};

/// Element budget (`d·T`) above which verification keeps a strided subsample.
const TRACE_BUDGET: usize = 10_000_000;

/// Server id stamped into pulled messages.
const SERVER_ID: u32 = u32::MAX;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep every iterate `x_0..x_T` in the output.
    pub record_iterates: bool,
    /// Added to every coordinate of each worker's residual after its step.
    /// Only for exercising the checks.
    pub fault_perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub stride: usize,
    pub tolerance: f64,
    pub lemma1_residual: Option<f64>,
    pub lemma4_residual: Option<f64>,
    pub virtual_iterate_residual: Option<f64>,
    pub error_bound: Option<ErrorBoundCheck>,
    pub passed: bool,
}

impl VerificationReport {
    fn disabled(note: &str) -> Self {
        VerificationReport {
            enabled: false,
            note: Some(note.into()),
            stride: 0,
            tolerance: RECURRENCE_TOLERANCE,
            lemma1_residual: None,
            lemma4_residual: None,
            virtual_iterate_residual: None,
            error_bound: None,
            passed: true,
        }
    }

    /// Names of failed checks.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let over = |r: Option<f64>| r.is_some_and(|v| !(v <= self.tolerance));
        if over(self.lemma1_residual) {
            out.push("lemma1_recurrence");
        }
        if over(self.lemma4_residual) {
            out.push("momentum_recurrence");
        }
        if over(self.virtual_iterate_residual) {
            out.push("virtual_iterate");
        }
        if self
            .error_bound
            .as_ref()
            .is_some_and(|c| !(c.margin >= 0.0))
        {
            out.push("error_bound");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<IterationMetrics>,
    pub final_x: ParamVector,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub report: VerificationReport,
    /// `x_0..x_T` when requested.
    pub iterates: Vec<ParamVector>,
    pub trace: Trace,
    pub smoothness: Option<f64>,
    pub compressor: CompressorSpec,
    pub delta_lower_bound: f64,
    /// Running max of `‖g_{t,i}‖₂`.
    pub g_max: f64,
}

/// Compressor endpoint: either in-memory or through the byte codec.
enum Link {
    Plain(Compressor),
    Wire {
        partition: BlockPartition,
        id: u32,
        iteration: u64,
        bytes: u64,
    },
}

impl Compress for Link {
    fn compress(&mut self, v: &ParamVector) -> Result<ParamVector> {
        match self {
            Link::Plain(c) => c.compress(v),
            Link::Wire {
                partition,
                id,
                iteration,
                bytes,
            } => {
                let msg = wire::CompressedMessage::from_vector(v, partition, *id, *iteration)?;
                let encoded = wire::encode(&msg)?;
                *bytes += encoded.len() as u64;
                let decoded = wire::decode(&encoded, partition)?;
                wire::reconstruct(&decoded, partition)
            }
        }
    }
}

impl Link {
    fn new(config: &RunConfig, spec: &CompressorSpec, id: u32, d: usize) -> Link {
        match (config.wire_mode, spec.sign_partition(d)) {
            (true, Some(partition)) => Link::Wire {
                partition,
                id,
                iteration: 0,
                bytes: 0,
            },
            _ => Link::Plain(Compressor::new(spec.clone(), id as u64)),
        }
    }

    fn begin(&mut self, t: usize) -> u64 {
        match self {
            Link::Plain(_) => 0,
            Link::Wire {
                iteration, bytes, ..
            } => {
                *iteration = t as u64;
                std::mem::take(bytes)
            }
        }
    }

    fn sent_bytes(&self) -> u64 {
        match self {
            Link::Plain(_) => 0,
            Link::Wire { bytes, .. } => *bytes,
        }
    }
}

/// Ideal and on-the-wire bits per iteration for the configured method.
fn bits_per_iteration(config: &RunConfig, compressor: &CompressorSpec, d: usize) -> (u64, u64) {
    let m = config.workers as u64;
    let du = d as u64;
    let header = 8 * wire::HEADER_BYTES as u64;
    let sign_bytes = du.div_ceil(8) * 8;
    match config.optimizer {
        OptimizerKind::EfSgd => (0, 0),
        OptimizerKind::FullPrecision => (
            comm_cost(CommMethod::FullPrecision, m, du, 0),
            2 * m * (header + 32 * du),
        ),
        OptimizerKind::Signsgd | OptimizerKind::Signum => (
            comm_cost(CommMethod::MajorityVote, m, du, 0),
            2 * m * (header + sign_bytes),
        ),
        OptimizerKind::DistEf => match compressor {
            CompressorSpec::Identity => (
                comm_cost(CommMethod::FullPrecision, m, du, 0),
                2 * m * (header + 32 * du),
            ),
            CompressorSpec::ScaledSign | CompressorSpec::BlockwiseScaledSign { .. } => {
                let partition = compressor.sign_partition(d).expect("sign-based");
                (
                    comm_cost(
                        CommMethod::DistEfBlock,
                        m,
                        du,
                        partition.num_blocks() as u64,
                    ),
                    2 * m * 8 * wire::encoded_len(&partition) as u64,
                )
            }
            // 32-bit value + 32-bit index per kept coordinate
            CompressorSpec::TopK { k } => {
                let k = *k as u64;
                (2 * m * 64 * k, 2 * m * (header + 64 * k))
            }
            CompressorSpec::UnbiasedScaled { .. } => {
                (2 * m * (du + 32), 2 * m * (header + 32 + sign_bytes))
            }
        },
    }
}

fn mean_error(server: &ServerState, workers: &[WorkerState]) -> ParamVector {
    let es: Vec<ParamVector> = workers.iter().map(|w| w.e.clone()).collect();
    server
        .e_tilde
        .add(&ParamVector::mean_of(&es).expect("at least one worker"))
}

fn mean_momentum(workers: &[WorkerState]) -> ParamVector {
    let ms: Vec<ParamVector> = workers.iter().map(|w| w.m.clone()).collect();
    ParamVector::mean_of(&ms).expect("at least one worker")
}

fn guard(t: usize, loss: f64, x: &ParamVector) -> Result<()> {
    let x_norm = x.l2_squared().sqrt();
    if !(loss.abs() <= DIVERGENCE_THRESHOLD && x_norm <= DIVERGENCE_THRESHOLD) {
        return Err(Error::Divergence { t, loss, x_norm });
    }
    Ok(())
}

pub fn run_experiment(config: &RunConfig) -> Result<RunOutput> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &RunConfig, options: &RunOptions) -> Result<RunOutput> {
    let oracle = config.problem.build(config.seed)?;
    let resolved = config.resolve(oracle.as_ref())?;
    Simulation::new(config, options, oracle.as_ref(), resolved).run()
}

struct Simulation<'a> {
    config: &'a RunConfig,
    options: &'a RunOptions,
    oracle: &'a dyn GradOracle,
    resolved: ResolvedRun,
}

impl<'a> Simulation<'a> {
    fn new(
        config: &'a RunConfig,
        options: &'a RunOptions,
        oracle: &'a dyn GradOracle,
        resolved: ResolvedRun,
    ) -> Self {
        Simulation {
            config,
            options,
            oracle,
            resolved,
        }
    }

    fn verifying(&self) -> bool {
        self.config.verify
            && self.config.optimizer == OptimizerKind::DistEf
            && self.config.weight_decay == 0.0
    }

    fn run(self) -> Result<RunOutput> {
        let cfg = self.config;
        let d = self.resolved.dim;
        let m = cfg.workers;
        let mu = cfg.momentum;
        let schedule = &self.resolved.schedule;
        let spec = &self.resolved.compressor;

        let mut x = self.oracle.initial_point();
        let mut workers: Vec<WorkerState> = (0..m).map(|i| WorkerState::new(i, d)).collect();
        let mut server = ServerState::new(m, d);
        let mut wd = DecoupledWDState::new(cfg.weight_decay, d);
        let mut ef_residual = ParamVector::zeros(d);
        let mut links: Vec<Link> = (0..m).map(|i| Link::new(cfg, spec, i as u32, d)).collect();
        let mut server_link = Link::new(cfg, spec, SERVER_ID, d);

        let (bits_ideal, bits_wire_formula) = bits_per_iteration(cfg, spec, d);
        let stride = if self.verifying() {
            (d * cfg.iterations).div_ceil(TRACE_BUDGET).max(1)
        } else {
            0
        };

        let mut metrics = Vec::with_capacity(cfg.iterations);
        let mut iterates = Vec::new();
        let mut trace = Trace {
            records: Vec::new(),
            stride,
        };
        let mut g_max = 0.0f64;
        let update_mu = match cfg.optimizer {
            OptimizerKind::DistEf | OptimizerKind::FullPrecision | OptimizerKind::Signum => mu,
            _ => 0.0,
        };

        for t in 0..cfg.iterations {
            let eta = schedule.stepsize(t as i64);
            let eta_prev = schedule.stepsize(t as i64 - 1);
            let ratio = schedule.ratio(t);

            let loss = self.oracle.loss(&x);
            guard(t, loss, &x)?;
            if self.options.record_iterates {
                iterates.push(x.clone());
            }
            let grad_norm_sq = self.oracle.exact_gradient(&x).l2_squared();
            let error_before = mean_error(&server, &workers);
            let ef_before = ef_residual.l2_squared();

            let grads: Vec<ParamVector> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let s = sample_minibatch(
                        self.oracle,
                        self.resolved.sampling_seed,
                        t as u64,
                        i as u64,
                        cfg.batch_size,
                    );
                    self.oracle.stochastic_gradient(&x, &s)
                })
                .collect();
            for g in &grads {
                g_max = g_max.max(g.l2_squared().sqrt());
            }

            let mut wire_bytes = 0u64;
            let x_next = match cfg.optimizer {
                OptimizerKind::DistEf => {
                    let prev_workers = workers.clone();
                    let mut deltas = Vec::with_capacity(m);
                    let mut next = Vec::with_capacity(m);
                    for ((state, g), link) in workers.iter().zip(&grads).zip(links.iter_mut()) {
                        link.begin(t);
                        let out = if mu == 0.0 {
                            worker_step(state, g, ratio, link)?
                        } else {
                            momentum_worker_step(state, g, ratio, mu, link)?
                        };
                        wire_bytes += link.sent_bytes();
                        let mut st = out.state;
                        if let Some(p) = self.options.fault_perturbation {
                            st.e = ParamVector::from_vec(st.e.iter().map(|v| v + p).collect());
                        }
                        deltas.push(out.delta);
                        next.push(st);
                    }
                    server_link.begin(t);
                    let srv = server_step(&server, &deltas, ratio, &mut server_link)?;
                    wire_bytes += server_link.sent_bytes() * m as u64;
                    workers = next;
                    server = srv.state;
                    let (x_next, wd_next) = apply_update(&x, &srv.delta, eta, &wd, update_mu);
                    wd = wd_next;
                    if stride > 0 && t % stride == 0 {
                        trace.records.push(TransitionRecord {
                            t,
                            eta,
                            eta_prev,
                            x: x.clone(),
                            x_next: x_next.clone(),
                            error: error_before.clone(),
                            error_next: mean_error(&server, &workers),
                            mean_grad: ParamVector::mean_of(&grads).expect("M >= 1"),
                            mean_momentum: mean_momentum(&workers),
                            mean_momentum_prev: mean_momentum(&prev_workers),
                        });
                    }
                    x_next
                }
                OptimizerKind::FullPrecision => {
                    let (dir, next) = full_precision_step(&workers, &grads, mu)?;
                    workers = next;
                    let (x_next, wd_next) = apply_update(&x, &dir, eta, &wd, update_mu);
                    wd = wd_next;
                    x_next
                }
                OptimizerKind::Signsgd | OptimizerKind::Signum => {
                    let momentum = cfg.optimizer == OptimizerKind::Signum;
                    let (dir, next) = majority_vote_step(&workers, &grads, mu, momentum)?;
                    workers = next;
                    let (x_next, wd_next) = apply_update(&x, &dir, eta, &wd, update_mu);
                    wd = wd_next;
                    x_next
                }
                OptimizerKind::EfSgd => {
                    links[0].begin(t);
                    let (x_next, e_next) =
                        ef_sgd_step(&x, &ef_residual, &grads[0], eta, &mut links[0])?;
                    ef_residual = e_next;
                    if cfg.weight_decay > 0.0 {
                        x_next.add_scaled(-eta * cfg.weight_decay, &x)
                    } else {
                        x_next
                    }
                }
            };

            let bits_wire = if cfg.wire_mode && cfg.optimizer == OptimizerKind::DistEf {
                8 * wire_bytes
            } else {
                bits_wire_formula
            };
            let error_norm_sq = if cfg.optimizer == OptimizerKind::EfSgd {
                ef_before
            } else {
                error_before.l2_squared()
            };
            metrics.push(IterationMetrics {
                t,
                loss,
                grad_norm_sq,
                error_norm_sq,
                stepsize: eta,
                bits_ideal,
                bits_wire,
            });
            x = x_next;
        }

        let final_loss = self.oracle.loss(&x);
        guard(cfg.iterations, final_loss, &x)?;
        if self.options.record_iterates {
            iterates.push(x.clone());
        }
        let final_grad_norm_sq = self.oracle.exact_gradient(&x).l2_squared();
        let final_error = mean_error(&server, &workers).l2_squared();

        let report = if self.verifying() {
            let mut observed: Vec<f64> = metrics.iter().map(|m| m.error_norm_sq).collect();
            observed.push(final_error);
            let lemma4 = check_lemma4(&trace, mu);
            let mut report = VerificationReport {
                enabled: true,
                note: None,
                stride,
                tolerance: RECURRENCE_TOLERANCE,
                lemma1_residual: (mu == 0.0).then(|| check_lemma1(&trace)),
                lemma4_residual: Some(lemma4),
                virtual_iterate_residual: schedule
                    .is_constant()
                    .then(|| check_virtual_iterate(&trace, mu, schedule.gamma())),
                error_bound: Some(check_error_bound(
                    &observed,
                    self.resolved.delta_lower_bound,
                    mu,
                    g_max,
                )),
                passed: true,
            };
            report.passed = report.failures().is_empty();
            report
        } else if !cfg.verify {
            VerificationReport::disabled("verification off")
        } else {
            VerificationReport::disabled(
                "recurrence checks apply to dist_ef runs without weight decay",
            )
        };

        Ok(RunOutput {
            metrics,
            final_x: x,
            final_loss,
            final_grad_norm_sq,
            report,
            iterates,
            trace,
            smoothness: self.oracle.smoothness(),
            compressor: self.resolved.compressor,
            delta_lower_bound: self.resolved.delta_lower_bound,
            g_max,
        })
    }
}
