use thiserror::Error;

use crate::rfs::Label;

/// Errors raised by the tracking library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular or not positive definite ({0})")]
    Singular(&'static str),

    #[error("bearing undefined at the sensor origin")]
    UndefinedBearing,

    #[error("clutter intensity is zero at measurement {0}")]
    ZeroClutter(usize),

    #[error("instance too large for exact enumeration ({rows} rows, {measurements} measurements)")]
    EnumerationTooLarge { rows: usize, measurements: usize },

    #[error("label {0} never appears in the presence sets")]
    EmptyTrajectory(Label),

    #[error("association history for {label} is out of order at time {time}")]
    TimeRegression { label: Label, time: u32 },

    #[error("measurement index {index} out of range at time {time} ({available} measurements)")]
    MeasurementIndex { time: u32, index: usize, available: usize },

    #[error("missing association history for label {0}")]
    MissingHistory(Label),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
