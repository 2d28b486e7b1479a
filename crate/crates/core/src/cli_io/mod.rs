//! Experiment runner: configuration, initial data, orchestration and
//! artifact output.

mod config;
mod generate;
mod run;

pub use config::{DiagnosticsSection, ExperimentConfig, FitSection, HarnackSection, OutputSection};
pub use generate::{
    conformal2d_scalar, generate, provenance, schwarzschild_scalar, taper_band, InitialData, Pattern, Provenance, SUP_LIMIT,
};
pub use run::{replay, replay_to, run, Check, Command, Summary};

use crate::error::Error;

/// Process exit status for an error: 2 configuration, 3 numerical, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidArgument { .. } | Error::InvalidGrid(_) | Error::Cfl(_) => 2,
        Error::BlowUp { .. }
        | Error::NonFinite { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::GridMismatch(_)
        | Error::InsufficientData(_) => 3,
        Error::Io(_) | Error::Csv(_) | Error::Format(_) | Error::UnsupportedVersion(_) => 4,
    }
}

/// One-line machine-readable error report.
pub fn error_line(e: &Error) -> String {
    let kind = match e {
        Error::Config { .. } => "config",
        Error::InvalidArgument { .. } => "argument",
        Error::InvalidGrid(_) => "grid",
        Error::Cfl(_) => "cfl",
        Error::BlowUp { .. } => "blow_up",
        Error::NonFinite { .. } => "non_finite",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::GridMismatch(_) => "grid_mismatch",
        Error::InsufficientData(_) => "insufficient_data",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Format(_) => "format",
        Error::UnsupportedVersion(_) => "unsupported_version",
    };
    let msg = e.to_string().replace('\n', " ");
    format!("error kind={kind} code={} message={msg:?}", exit_code(e))
}
