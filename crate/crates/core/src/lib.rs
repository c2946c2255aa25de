//! Federated learning over an analog-aggregation (over-the-air) uplink.
//!
//! Workers run full-batch gradient descent on local data and upload their
//! models simultaneously over a fading multiple-access channel; the parameter
//! server receives the superposition plus noise and rescales it into a global
//! model estimate. The [`scheduler`] picks, per model entry, a common power
//! scaling factor and the set of workers that transmit, by a line search over
//! `U` candidate points. The [`bounds`] module tracks the expected optimality
//! gap recursion driven by those decisions.
//!
//! Everything is deterministic given a root seed: see [`rng`].

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod learning;
pub mod model;
pub mod rng;
pub mod scheduler;

pub use config::{EtaMode, PolicyKind, ScenarioConfig, TaskKind};
pub use error::{Error, Result};
pub use model::{ModelParams, WorkerProfile};
pub use rng::{RngStreams, StreamLabel};
