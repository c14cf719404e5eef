//! Core library for a small neural force field with feature decorrelation,
//! molecular dynamics, and trajectory stability analysis.
//!
//! The pieces fit together as a pipeline:
//! 1. [`md::generate_dataset`] labels frames with the analytic
//!    [`lj::LjMixture`] reference potential,
//! 2. [`train::train`] fits the message-passing model ([`model`]) with force,
//!    energy and scheduled feature-decorrelation losses ([`corr`], [`sched`]),
//! 3. [`md::run_md`] drives MD with the trained model,
//! 4. [`stability`] scores the resulting trajectories.
//!
//! All differentiation runs on the scalar reverse-mode [`tape`], which can
//! record its own backward pass so parameter gradients of force-dependent
//! losses are exact.

pub mod config;
pub mod corr;
pub mod error;
pub mod frame;
pub mod graph;
pub mod io;
pub mod lj;
pub mod md;
pub mod model;
pub mod sched;
pub mod stability;
pub mod tape;
pub mod traj;
pub mod train;
pub mod units;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use frame::{Dataset, Frame};
pub use model::{ModelConfig, ModelParams};
pub use traj::{ExitStatus, Snapshot, TrajectoryRecord};
