use thiserror::Error;

use crate::{field, io, kinematics, metrics, priors, routing, scheduler};

/// Crate-wide error, wrapping the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kinematics(#[from] kinematics::KinematicsError),
    #[error(transparent)]
    Field(#[from] field::FieldError),
    #[error(transparent)]
    Routing(#[from] routing::RoutingError),
    #[error(transparent)]
    Priors(#[from] priors::PriorError),
    #[error(transparent)]
    Scheduler(#[from] scheduler::ScheduleError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Format(#[from] io::FormatError),
    #[error("config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
