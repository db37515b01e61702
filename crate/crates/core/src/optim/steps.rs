//! Worker and server step functions of the error-feedback methods.
//!
//! All steps are pure: they take the current state by reference and return
//! the transmitted vector together with the next state.

use serde::{Deserialize, Serialize};

use crate::compressors::Compress;
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// Per-worker memory: accumulated residual `e` and local momentum `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub id: usize,
    pub e: ParamVector,
    pub m: ParamVector,
}

impl WorkerState {
    pub fn new(id: usize, d: usize) -> Self {
        WorkerState {
            id,
            e: ParamVector::zeros(d),
            m: ParamVector::zeros(d),
        }
    }
}

/// Server memory: the global accumulated residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub workers: usize,
    pub e_tilde: ParamVector,
}

impl ServerState {
    pub fn new(workers: usize, d: usize) -> Self {
        ServerState {
            workers,
            e_tilde: ParamVector::zeros(d),
        }
    }
}

/// Decoupled weight decay with its own momentum buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupledWDState {
    pub m_tilde: ParamVector,
    pub lambda: f64,
}

impl DecoupledWDState {
    pub fn new(lambda: f64, d: usize) -> Self {
        DecoupledWDState {
            m_tilde: ParamVector::zeros(d),
            lambda,
        }
    }
}

/// What a worker pushes plus its bookkeeping.
#[derive(Debug, Clone)]
pub struct WorkerOutput {
    /// Error-corrected input to the compressor, `p`.
    pub corrected: ParamVector,
    /// Compressed message `Δ = C(p)`.
    pub delta: ParamVector,
    pub state: WorkerState,
}

#[derive(Debug, Clone)]
pub struct ServerOutput {
    pub corrected: ParamVector,
    pub delta: ParamVector,
    pub state: ServerState,
}

fn finish_worker(
    id: usize,
    corrected: ParamVector,
    m: ParamVector,
    compressor: &mut impl Compress,
) -> Result<WorkerOutput> {
    let delta = compressor.compress(&corrected)?;
    let e = corrected.sub(&delta);
    Ok(WorkerOutput {
        corrected,
        delta,
        state: WorkerState { id, e, m },
    })
}

/// `p = g + r·e`, `Δ = C(p)`, `e' = p − Δ`.
pub fn worker_step(
    state: &WorkerState,
    g: &ParamVector,
    ratio: f64,
    compressor: &mut impl Compress,
) -> Result<WorkerOutput> {
    g.check_len(state.e.len())?;
    let corrected = g.add_scaled(ratio, &state.e);
    finish_worker(state.id, corrected, state.m.clone(), compressor)
}

/// Nesterov form: `m' = μm + g`, `p = μm' + g + r·e`, then as [`worker_step`].
///
/// With `μ = 0` the corrected vector is computed exactly as in `worker_step`.
pub fn momentum_worker_step(
    state: &WorkerState,
    g: &ParamVector,
    ratio: f64,
    mu: f64,
    compressor: &mut impl Compress,
) -> Result<WorkerOutput> {
    g.check_len(state.e.len())?;
    let m = state.m.zip_with(g, |m, g| mu * m + g);
    let mut corrected = g.add_scaled(ratio, &state.e);
    if mu != 0.0 {
        corrected = corrected.add_scaled(mu, &m);
    }
    finish_worker(state.id, corrected, m, compressor)
}

/// `p̃ = (1/M)ΣΔ_i + r·ẽ`, `Δ̃ = C(p̃)`, `ẽ' = p̃ − Δ̃`.
///
/// `deltas` must be ordered by worker id; they are summed in that order.
pub fn server_step(
    state: &ServerState,
    deltas: &[ParamVector],
    ratio: f64,
    compressor: &mut impl Compress,
) -> Result<ServerOutput> {
    if deltas.len() != state.workers {
        return Err(Error::WorkerCount {
            expected: state.workers,
            got: deltas.len(),
        });
    }
    let d = state.e_tilde.len();
    for delta in deltas {
        delta.check_len(d)?;
    }
    let mean = ParamVector::mean_of(deltas).expect("at least one worker");
    let corrected = mean.add_scaled(ratio, &state.e_tilde);
    let delta = compressor.compress(&corrected)?;
    let e_tilde = corrected.sub(&delta);
    Ok(ServerOutput {
        corrected,
        delta,
        state: ServerState {
            workers: state.workers,
            e_tilde,
        },
    })
}

/// Parameter update with decoupled weight decay.
///
/// `μ = 0`: `x' = x − η(Δ̃ + λx)`.
/// Otherwise: `m̃' = μm̃ + λx`, `x' = x − η(Δ̃ + μm̃' + λx)`.
pub fn apply_update(
    x: &ParamVector,
    direction: &ParamVector,
    eta: f64,
    wd: &DecoupledWDState,
    mu: f64,
) -> (ParamVector, DecoupledWDState) {
    let lambda = wd.lambda;
    if lambda == 0.0 {
        return (x.add_scaled(-eta, direction), wd.clone());
    }
    if mu == 0.0 {
        let next = x
            .iter()
            .zip(direction.iter())
            .map(|(&xi, &di)| xi - eta * (di + lambda * xi))
            .collect::<Vec<_>>();
        return (ParamVector::from_vec(next), wd.clone());
    }
    let m_tilde = wd.m_tilde.zip_with(x, |m, xi| mu * m + lambda * xi);
    let next = x
        .iter()
        .zip(direction.iter())
        .zip(m_tilde.iter())
        .map(|((&xi, &di), &mi)| xi - eta * (di + mu * mi + lambda * xi))
        .collect::<Vec<_>>();
    (
        ParamVector::from_vec(next),
        DecoupledWDState { m_tilde, lambda },
    )
}

/// Single-machine error feedback: `p = ηg + e`, `x' = x − C(p)`, `e' = p − C(p)`.
pub fn ef_sgd_step(
    x: &ParamVector,
    e: &ParamVector,
    g: &ParamVector,
    eta: f64,
    compressor: &mut impl Compress,
) -> Result<(ParamVector, ParamVector)> {
    g.check_len(x.len())?;
    e.check_len(x.len())?;
    let p = e.add_scaled(eta, g);
    let delta = compressor.compress(&p)?;
    Ok((x.sub(&delta), p.sub(&delta)))
}
