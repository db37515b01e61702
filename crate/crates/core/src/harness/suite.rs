//! Self-contained invariant suite behind `efsgd verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::Serialize;

use crate::compressors::{compress, phi, CompressorSpec};
use crate::config::{
    BlockLayout, CompressorConfig, OptimizerKind, RunConfig, ScheduleConfig, ScheduleKind,
};
use crate::partition::BlockPartition;
use crate::problems::ProblemSpec;
use crate::vector::ParamVector;
use crate::wire;

use super::checks::RECURRENCE_TOLERANCE;
use super::run::{run_experiment_with, RunOptions, RunOutput};
use super::{comm_cost, CommMethod};

/// Perturbation added to every residual coordinate in fault-injection mode.
const FAULT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize, kind: usize) -> ParamVector {
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid");
    ParamVector::from_vec(
        (0..d)
            .map(|_| match kind {
                0 => StandardNormal.sample(rng),
                1 => rng.random_range(-1.0..1.0),
                _ => cauchy.sample(rng),
            })
            .collect(),
    )
}

fn contraction() -> CheckResult {
    let d = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = [
        CompressorSpec::ScaledSign,
        CompressorSpec::BlockwiseScaledSign {
            partition: BlockPartition::uniform(d, 10).unwrap(),
        },
        CompressorSpec::TopK { k: 8 },
        CompressorSpec::Identity,
    ];
    let mut worst = f64::NEG_INFINITY;
    for spec in &specs {
        let delta = spec.delta_lower_bound(d);
        for i in 0..600 {
            let v = random_vector(&mut rng, d, i % 3);
            let n2 = v.l2_squared();
            let err = compress(spec, &v).unwrap().sub(&v).l2_squared();
            worst = worst.max((err - (1.0 - delta) * n2) / n2);
        }
    }
    check(
        "compressor_contraction",
        worst <= 1e-12,
        format!("max (err - (1-δ)|v|²)/|v|² = {worst:.3e}"),
    )
}

fn blockwise_identity() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for i in 0..300 {
        let d = rng.random_range(1..80);
        let bs = rng.random_range(1..=d);
        let partition = BlockPartition::uniform(d, bs).unwrap();
        let v = random_vector(&mut rng, d, i % 3);
        let err = compress(
            &CompressorSpec::BlockwiseScaledSign {
                partition: partition.clone(),
            },
            &v,
        )
        .unwrap()
        .sub(&v)
        .l2_squared();
        let expected: f64 = partition
            .ranges()
            .map(|r| {
                let b = &v.as_slice()[r];
                let l1: f64 = b.iter().map(|x| x.abs()).sum();
                let l2: f64 = b.iter().map(|x| x * x).sum();
                if l2 == 0.0 {
                    0.0
                } else {
                    l2 - l1 * l1 / b.len() as f64
                }
            })
            .sum();
        worst = worst.max((err - expected).abs() / v.l2_squared());
    }
    check(
        "blockwise_factor_identity",
        worst <= 1e-10,
        format!("max relative deviation {worst:.3e}"),
    )
}

fn geometric_example() -> CheckResult {
    let (alpha, blocks) = (0.5f64, 100usize);
    let v = ParamVector::from_vec((0..blocks).map(|b| alpha.powi(b as i32)).collect());
    let partition = BlockPartition::uniform(blocks, 1).unwrap();
    let f = phi(&v, &partition).unwrap();
    let delta = crate::compressors::empirical_delta(&CompressorSpec::ScaledSign, &v).unwrap();
    let aw = alpha.powi(blocks as i32);
    let formula = (1.0 + alpha) * (1.0 - aw) / (blocks as f64 * (1.0 - alpha) * (1.0 + aw));
    check(
        "geometric_example",
        f == 1.0 && (delta - formula).abs() <= 1e-9,
        format!("phi = {f}, delta = {delta:.12}, formula = {formula:.12}"),
    )
}

fn base_config(mu: f64, schedule: ScheduleKind) -> RunConfig {
    RunConfig {
        optimizer: OptimizerKind::DistEf,
        workers: 4,
        iterations: 120,
        seed: 5,
        compressor: CompressorConfig::BlockwiseScaledSign {
            blocks: BlockLayout::Uniform(5),
        },
        schedule: ScheduleConfig {
            kind: schedule,
            gamma: if schedule == ScheduleKind::Constant {
                0.02
            } else {
                0.5
            },
            warmup: None,
        },
        momentum: mu,
        weight_decay: 0.0,
        problem: ProblemSpec::Quadratic {
            dim: 20,
            condition: 10.0,
            noise: 0.5,
            seed: None,
        },
        batch_size: 1,
        verify: true,
        wire_mode: false,
    }
}

fn run(config: &RunConfig, fault: bool) -> Result<RunOutput, String> {
    let options = RunOptions {
        record_iterates: false,
        fault_perturbation: fault.then_some(FAULT),
    };
    run_experiment_with(config, &options).map_err(|e| e.to_string())
}

fn residual_check(
    name: &'static str,
    out: &Result<RunOutput, String>,
    pick: impl Fn(&RunOutput) -> Option<f64>,
) -> CheckResult {
    match out {
        Ok(o) => match pick(o) {
            Some(r) => check(
                name,
                r <= RECURRENCE_TOLERANCE,
                format!("max relative residual {r:.3e}"),
            ),
            None => check(name, false, "residual not computed".into()),
        },
        Err(e) => check(name, false, format!("run failed: {e}")),
    }
}

fn error_bound_check(runs: &[&Result<RunOutput, String>]) -> CheckResult {
    let mut min_margin = f64::INFINITY;
    for out in runs {
        match out {
            Ok(o) => match &o.report.error_bound {
                Some(c) => min_margin = min_margin.min(c.margin),
                None => return check("error_bound", false, "bound not computed".into()),
            },
            Err(e) => return check("error_bound", false, format!("run failed: {e}")),
        }
    }
    check(
        "error_bound",
        min_margin >= 0.0,
        format!("smallest margin {min_margin:.3e}"),
    )
}

fn identity_equivalence() -> CheckResult {
    let mut ef = base_config(0.0, ScheduleKind::Constant);
    ef.compressor = CompressorConfig::Identity;
    ef.iterations = 200;
    let mut sgd = ef.clone();
    sgd.optimizer = OptimizerKind::FullPrecision;
    let options = RunOptions {
        record_iterates: true,
        fault_perturbation: None,
    };
    let (a, b) = match (
        run_experiment_with(&ef, &options),
        run_experiment_with(&sgd, &options),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return check("identity_equivalence", false, format!("run failed: {e}"))
        }
    };
    let diff = a
        .iterates
        .iter()
        .zip(&b.iterates)
        .map(|(x, y)| x.sub(y).norm_inf())
        .fold(0.0f64, f64::max);
    check(
        "identity_equivalence",
        diff <= 1e-12,
        format!("max coordinate difference {diff:.3e}"),
    )
}

fn momentum_zero_reduction() -> CheckResult {
    let config = base_config(0.0, ScheduleKind::Decreasing);
    let options = RunOptions {
        record_iterates: true,
        fault_perturbation: None,
    };
    let plain = run_experiment_with(&config, &options);
    match (plain, manual_momentum_zero(&config)) {
        (Ok(a), Ok(m)) => check(
            "momentum_zero_reduction",
            a.iterates == m,
            format!("{} iterates compared bitwise", m.len()),
        ),
        (Err(e), _) | (_, Err(e)) => {
            check("momentum_zero_reduction", false, format!("run failed: {e}"))
        }
    }
}

/// Replays a run with `momentum_worker_step(μ = 0)` in place of `worker_step`.
fn manual_momentum_zero(config: &RunConfig) -> crate::error::Result<Vec<ParamVector>> {
    use crate::compressors::Compressor;
    use crate::optim::{apply_update, momentum_worker_step, server_step, DecoupledWDState};
    use crate::optim::{ServerState, WorkerState};
    use crate::problems::sample_minibatch;

    let oracle = config.problem.build(config.seed)?;
    let r = config.resolve(oracle.as_ref())?;
    let (d, m) = (r.dim, config.workers);
    let mut comps: Vec<Compressor> = (0..m)
        .map(|i| Compressor::new(r.compressor.clone(), i as u64))
        .collect();
    let mut server_comp = Compressor::new(r.compressor.clone(), u32::MAX as u64);
    let mut workers: Vec<WorkerState> = (0..m).map(|i| WorkerState::new(i, d)).collect();
    let mut server = ServerState::new(m, d);
    let wd = DecoupledWDState::new(0.0, d);
    let mut x = oracle.initial_point();
    let mut out = vec![x.clone()];
    for t in 0..config.iterations {
        let ratio = r.schedule.ratio(t);
        let mut deltas = Vec::new();
        for (i, comp) in comps.iter_mut().enumerate() {
            let s = sample_minibatch(oracle.as_ref(), r.sampling_seed, t as u64, i as u64, 1);
            let g = oracle.stochastic_gradient(&x, &s);
            let o = momentum_worker_step(&workers[i], &g, ratio, 0.0, comp)?;
            deltas.push(o.delta);
            workers[i] = o.state;
        }
        let s = server_step(&server, &deltas, ratio, &mut server_comp)?;
        server = s.state;
        x = apply_update(&x, &s.delta, r.schedule.stepsize(t as i64), &wd, 0.0).0;
        out.push(x.clone());
    }
    Ok(out)
}

/// Table rows at `M = 7, d = 10⁶, B = 100`, and the reduction factor once the
/// scale overhead `64MB/(2Md)` is below `10⁻³` (here `B = 31`).
fn comm_cost_table() -> CheckResult {
    let (m, d, b) = (7, 1_000_000, 100);
    let full = comm_cost(CommMethod::FullPrecision, m, d, b);
    let vote = comm_cost(CommMethod::MajorityVote, m, d, b);
    let block = comm_cost(CommMethod::DistEfBlock, m, d, b);
    let rows = full == 64 * m * d && vote == 2 * m * d && block == 2 * m * d + 64 * m * b;
    let ratio = full as f64 / comm_cost(CommMethod::DistEfBlock, m, d, 31) as f64;
    check(
        "comm_cost_table",
        rows && ratio >= 31.9,
        format!(
            "{full} / {vote} / {block} bits; reduction {:.3}x at B = 100, {ratio:.3}x at B = 31",
            full as f64 / block as f64
        ),
    )
}

fn wire_round_trip() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let partition = BlockPartition::uniform(96, 16).unwrap();
    let mut ok = true;
    let mut bits = 0;
    for i in 0..50 {
        let v = random_vector(&mut rng, 96, i % 3);
        let msg = wire::CompressedMessage::from_vector(&v, &partition, 3, i as u64).unwrap();
        let bytes = wire::encode(&msg).unwrap();
        bits = msg.payload_bits();
        ok &= bytes.len() == wire::encoded_len(&partition);
        ok &= wire::decode(&bytes, &partition).as_ref() == Ok(&msg);
    }
    ok &= bits == 96 + 32 * 6;
    check(
        "wire_round_trip",
        ok,
        format!("payload {bits} bits for d = 96, B = 6"),
    )
}

fn wire_mode_run(fault: bool) -> CheckResult {
    let mut config = base_config(0.9, ScheduleKind::Constant);
    config.wire_mode = true;
    config.compressor = CompressorConfig::BlockwiseScaledSign {
        blocks: BlockLayout::Uniform(8),
    };
    let out = run(&config, fault);
    match out {
        Ok(o) => {
            let partition = BlockPartition::uniform(20, 8).unwrap();
            let expected = 2 * 4 * 8 * wire::encoded_len(&partition) as u64;
            let bits_ok = o.metrics.iter().all(|m| m.bits_wire == expected);
            let r = o.report.lemma4_residual.unwrap_or(f64::INFINITY);
            check(
                "wire_mode_recurrence",
                bits_ok && r <= RECURRENCE_TOLERANCE,
                format!("residual {r:.3e}, {expected} bits per iteration measured"),
            )
        }
        Err(e) => check("wire_mode_recurrence", false, format!("run failed: {e}")),
    }
}

/// Runs every check. `fault_inject` perturbs each worker residual so the
/// recurrence checks must fail.
pub fn run_verification_suite(fault_inject: bool) -> Vec<CheckResult> {
    let plain = run(&base_config(0.0, ScheduleKind::Constant), fault_inject);
    let decreasing = run(&base_config(0.0, ScheduleKind::Decreasing), fault_inject);
    let momentum = run(&base_config(0.9, ScheduleKind::Increasing), fault_inject);
    let momentum_const = run(&base_config(0.9, ScheduleKind::Constant), fault_inject);

    vec![
        contraction(),
        blockwise_identity(),
        geometric_example(),
        residual_check("lemma1_recurrence", &plain, |o| o.report.lemma1_residual),
        residual_check("lemma1_recurrence_decreasing", &decreasing, |o| {
            o.report.lemma1_residual
        }),
        residual_check("momentum_recurrence", &momentum, |o| {
            o.report.lemma4_residual
        }),
        residual_check("virtual_iterate", &momentum_const, |o| {
            o.report.virtual_iterate_residual
        }),
        error_bound_check(&[&plain, &decreasing, &momentum, &momentum_const]),
        identity_equivalence(),
        momentum_zero_reduction(),
        comm_cost_table(),
        wire_round_trip(),
        wire_mode_run(fault_inject),
    ]
}
