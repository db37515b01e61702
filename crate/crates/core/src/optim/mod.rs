//! Step functions for error-feedback SGD (single machine, distributed,
//! blockwise, momentum), the sign/full-precision baselines, stepsize
//! schedules and decoupled weight decay.

mod baselines;
mod schedule;
mod steps;

pub use baselines::{full_precision_step, majority_vote_step};
pub use schedule::ScheduleSpec;
pub use steps::{
    apply_update, ef_sgd_step, momentum_worker_step, server_step, worker_step, DecoupledWDState,
    ServerOutput, ServerState, WorkerOutput, WorkerState,
};
