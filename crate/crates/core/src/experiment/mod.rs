//! Experiment runner: configuration, potential families, orchestration and
//! the files a run leaves on disk.
//!
//! Files written to the output directory:
//!
//! - `iterations.csv`: one row per iteration. Columns, in order:
//!   `n, index_set_size, dof_delta, eta_tilde, eta_exact, zeta_actual,
//!   truncation_m, marked_pairs, achieved_fraction, galerkin_ratio`, then
//!   `lambda_1 .. lambda_N` (or `norm_1 .. norm_K` for the source loop),
//!   then `distance, lambda_err_1 .. lambda_err_N` (or `energy_error`) when a
//!   reference is available. Floats carry 17 significant digits; missing
//!   values are empty. Wall times are kept out so the file is reproducible.
//! - `summary.json`: config echo, termination reason, final and reference
//!   eigenvalues, rate fits, warnings and wall times.
//! - `uniform.csv` and `comparison.csv` (uniform and compare modes).
//! - `marked_sets.jsonl` (audit format) and `plot.gp` (gnuplot format).

mod config;
mod families;
mod output;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    ingest_config, AlgorithmConfig, Coefficient, ExperimentConfig, ExperimentMode, OutputConfig,
    OutputFormat, PotentialSpec, ProblemConfig, TrigTerm, VerificationConfig,
};
pub use families::{build_potential, random_decay, BuiltPotential, PotentialInfo};
pub use output::{fmt_float, write_atomic};
pub use run::{
    execute, resolve_out_dir, run_experiment, uniform_sweep, uniform_sweep_until, ComparisonRow,
    EigenVerification, ExperimentOutcome, RunOptions, RunSummary, UniformRow, OUT_DIR_ENV,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Process exit code: 2 for validation errors, 3 for numerical
    /// failures, 1 for I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Validation { .. } => 2,
            ExperimentError::Numerical(_) => 3,
            ExperimentError::Io { .. } => 1,
        }
    }
}
