//! Config-driven front end: TOML problem descriptions in, JSON reports and
//! CSV trajectories out.

pub mod build;
pub mod config;
pub mod report;
pub mod run;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    /// Converged, and every requested certification passed.
    pub const OK: i32 = 0;
    /// Malformed configuration or any other error before a verdict.
    pub const CONFIG: i32 = 1;
    /// A requested certification failed, or the solver hit its iteration cap.
    pub const UNCERTIFIED: i32 = 2;
    /// The dual iterates diverged: the constrained problem is infeasible.
    pub const INFEASIBLE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] projctl_core::error::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
