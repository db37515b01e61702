//! Baselines without error feedback: sign methods with majority vote and
//! full-precision distributed (momentum) SGD.

use crate::error::{Error, Result};
use crate::vector::{sign, ParamVector};

use super::steps::WorkerState;

fn check_inputs(states: &[WorkerState], grads: &[ParamVector]) -> Result<usize> {
    if states.is_empty() || states.len() != grads.len() {
        return Err(Error::WorkerCount {
            expected: states.len().max(1),
            got: grads.len(),
        });
    }
    let d = states[0].m.len();
    for g in grads {
        g.check_len(d)?;
    }
    Ok(d)
}

/// signSGD / signum with majority vote.
///
/// Each worker sends `sign(g_i)` or, with `use_momentum`, `sign(m'_i)` where
/// `m'_i = μm_i + (1−μ)g_i`. The returned direction is `sign(Σ_i s_i)` with
/// ties resolved to `+1`; the caller applies `x − η·direction`.
pub fn majority_vote_step(
    states: &[WorkerState],
    grads: &[ParamVector],
    mu: f64,
    use_momentum: bool,
) -> Result<(ParamVector, Vec<WorkerState>)> {
    let d = check_inputs(states, grads)?;
    let mut votes = vec![0.0f64; d];
    let mut next = Vec::with_capacity(states.len());
    for (s, g) in states.iter().zip(grads) {
        let source = if use_momentum {
            let m = s.m.zip_with(g, |m, g| mu * m + (1.0 - mu) * g);
            next.push(WorkerState {
                id: s.id,
                e: s.e.clone(),
                m: m.clone(),
            });
            m
        } else {
            next.push(s.clone());
            g.clone()
        };
        for (v, &x) in votes.iter_mut().zip(source.iter()) {
            *v += sign(x);
        }
    }
    let direction = ParamVector::from_vec(votes.into_iter().map(sign).collect());
    Ok((direction, next))
}

/// Full-precision distributed Nesterov SGD:
/// `m'_i = μm_i + g_i`, direction `(1/M)Σ(μm'_i + g_i)`. `μ = 0` is plain SGD.
pub fn full_precision_step(
    states: &[WorkerState],
    grads: &[ParamVector],
    mu: f64,
) -> Result<(ParamVector, Vec<WorkerState>)> {
    check_inputs(states, grads)?;
    let mut next = Vec::with_capacity(states.len());
    let mut local = Vec::with_capacity(states.len());
    for (s, g) in states.iter().zip(grads) {
        let m = s.m.zip_with(g, |m, g| mu * m + g);
        local.push(m.zip_with(g, |m, g| mu * m + g));
        next.push(WorkerState {
            id: s.id,
            e: s.e.clone(),
            m,
        });
    }
    let direction = ParamVector::mean_of(&local).expect("non-empty");
    Ok((direction, next))
}
