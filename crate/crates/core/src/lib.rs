//! Error-feedback SGD with blockwise sign compression, simulated over a
//! deterministic parameter server.
//!
//! The crate is organised bottom-up: [`vector`] and [`partition`] hold the
//! numeric primitives, [`compressors`] the δ-approximate compressors,
//! [`optim`] the pure worker/server step functions and stepsize schedules,
//! [`problems`] the gradient oracles, [`wire`] the byte codec for sign
//! messages and [`harness`] the simulation loop and its checks.

pub mod compressors;
pub mod config;
pub mod error;
pub mod harness;
pub mod optim;
pub mod partition;
pub mod problems;
pub mod vector;
pub mod wire;

pub use compressors::{Compress, Compressor, CompressorSpec};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use partition::BlockPartition;
pub use vector::ParamVector;
