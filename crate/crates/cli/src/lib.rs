//! Restart-distribution experiments on top of `embia`: repeated fits from
//! seeded starts, parameter sweeps, solution comparison and report output.

use std::path::{Path, PathBuf};

use embia::{DataError, FitError};

pub mod harness;
pub mod report;
pub mod spec;

pub use harness::{
    bin_of, compare_solutions, fit_once, run_experiment, run_experiment_with, sweep, Comparison, ErasedFit,
    ExperimentReport, RestartDistribution, RunOptions, RunRecord, SweepCell, SweepGrid, SweepResult, ATTAIN_TOL,
};
pub use report::{emit_report, render_report, ReportFormat};
pub use spec::{ExperimentSpec, InitKind, InitOptions, Model};

/// Directory searched for fixture files when no explicit path is given.
pub const DATA_DIR_ENV: &str = "EMBIA_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 3 for I/O failures, 2 for everything else the caller got wrong.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Data(DataError::Io { .. }) => 3,
            _ => 2,
        }
    }
}

/// Finds `name` in `dir`, then in `$EMBIA_DATA_DIR`.
pub fn locate_fixture(name: &str, dir: Option<&Path>) -> Option<PathBuf> {
    let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    dir.map(Path::to_path_buf).into_iter().chain(env_dir).map(|d| d.join(name)).find(|p| p.is_file())
}
