//! Kinematic-to-visual control for articulated surgical tools.
//!
//! The crate lifts sparse 9-DoF tool actions into pixel-aligned control
//! fields ([`field`]), routes them through a two-tier mixture of modality
//! experts ([`routing`]), scores the routing with kinematic-prior objectives
//! ([`priors`]), plans budgeted full/light/reuse execution ([`scheduler`]) and
//! measures action faithfulness on binary masks ([`metrics`]).
//!
//! Everything runs on the CPU at toy scale and is deterministic given a seed.
//! File formats and the `kvlr` command-line pipeline live in [`io`],
//! [`config`] and [`pipeline`].

pub mod config;
pub mod field;
pub mod io;
pub mod kinematics;
pub mod linear;
pub mod metrics;
pub mod pipeline;
pub mod priors;
pub mod rng;
pub mod routing;
pub mod scheduler;

mod error;

pub use error::{Error, Result};
