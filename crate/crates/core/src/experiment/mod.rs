//! Experiment orchestration behind the `ljp` command line: validation, batch
//! runs, evaluation and report rendering.

mod config;
mod evaluate;
mod report;
mod run;
mod validate;

use thiserror::Error;

pub use config::{ExperimentConfig, TaxonomySetting};
pub use evaluate::{
    cmd_evaluate, cmd_report, evaluate, format_pct, format_summary, render_results_table,
    EvalFilter, ResultsFile, ResultsRow,
};
pub use report::render_report;
pub use run::{cmd_run, run_with_backend, RunOptions, RunSummary, VariantSummary};
pub use validate::{cmd_validate, prepare, Issue, Prepared, ValidationReport};

use crate::cache::StoreError;
use crate::corpus::CorpusError;
use crate::matrix::MatrixError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} case run(s) failed")]
    RunFailures {
        failed: usize,
        summary: Box<RunSummary>,
    },
}

impl ExperimentError {
    /// 1 for configuration and validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes `text` to `path`, creating parent directories.
pub(crate) fn write_file(path: &std::path::Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| ExperimentError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}
