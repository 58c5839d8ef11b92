// SPDX-License-Identifier: Apache-2.0

//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration field violates its invariant.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// A lookup fell outside a tabulated domain.
    #[error("value {value} outside tabulated range [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },

    /// `(iωI − M)` could not be factorized.
    #[error("singular linear system at omega = {omega} rad/s")]
    Singular { omega: f64 },

    /// A steady state handed to a downstream stage does not satisfy the mean-field equations.
    #[error("steady state not converged: residual {residual:e} exceeds {tolerance:e}")]
    NotConverged { residual: f64, tolerance: f64 },

    /// Continuation lost the tracked branch between two grid points.
    #[error("branch tracking gap between a_in = {from:e} and {to:e}: {detail}")]
    TrackingGap { from: f64, to: f64, detail: String },

    #[error("threshold not reached below the ceiling of {ceiling:e} W")]
    ThresholdAboveCeiling { ceiling: f64 },

    #[error("no entanglement: minimum C_s = {min_cs:e} is not below the guard band")]
    NoEntanglement { min_cs: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
