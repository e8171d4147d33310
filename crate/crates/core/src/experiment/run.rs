use std::fmt;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use super::validate::prepare;
use super::{write_file, ExperimentConfig, ExperimentError};
use crate::backend::Backend;
use crate::cache::{StageCache, TranscriptStore};
use crate::chain::{ChainContext, RetryPolicy, Verdict};
use crate::matrix::{run_matrix, MatrixOptions};
use crate::prompt::PromptVariant;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the transcript store location.
    pub store: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantSummary {
    pub variant: PromptVariant,
    pub decisive: usize,
    pub undecided: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub store: PathBuf,
    pub transcripts: usize,
    pub reused: usize,
    pub executed: usize,
    pub backend_calls: usize,
    pub variants: Vec<VariantSummary>,
    pub failures: Vec<String>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.variants {
            writeln!(
                f,
                "{:<6} decisive {:>4}  undecided {:>4}",
                v.variant.name(),
                v.decisive,
                v.undecided
            )?;
        }
        for fail in &self.failures {
            writeln!(f, "failed: {fail}")?;
        }
        write!(
            f,
            "{} transcripts ({} reused, {} run), {} new calls -> {}",
            self.transcripts,
            self.reused,
            self.executed,
            self.backend_calls,
            self.store.display()
        )
    }
}

/// Validates the config and runs the matrix with the backend it describes.
pub fn cmd_run(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<RunSummary, ExperimentError> {
    let (prepared, report) = prepare(config, true);
    let prepared = match prepared {
        Some(p) if report.is_ok() => p,
        _ => return Err(ExperimentError::Validation(report)),
    };
    let backend = prepared.backend.as_deref().expect("validated backend");
    execute(config, opts, &prepared, backend)
}

/// Like [`cmd_run`] but with a caller-supplied backend.
pub fn run_with_backend(
    config: &ExperimentConfig,
    backend: &dyn Backend,
    opts: &RunOptions,
) -> Result<RunSummary, ExperimentError> {
    let (prepared, report) = prepare(config, true);
    match prepared {
        Some(p) if report.is_ok() => execute(config, opts, &p, backend),
        _ => Err(ExperimentError::Validation(report)),
    }
}

fn execute(
    config: &ExperimentConfig,
    opts: &RunOptions,
    prepared: &super::Prepared,
    backend: &dyn Backend,
) -> Result<RunSummary, ExperimentError> {
    let store_path = opts.store.clone().unwrap_or_else(|| config.store_path());
    let store = TranscriptStore::new(&store_path);
    let cache_dir = config.cache_dir();
    let cache = StageCache::on_disk(&cache_dir).map_err(|e| ExperimentError::io(&cache_dir, e))?;

    let ctx = ChainContext {
        prompts: &prepared.prompts,
        defs: prepared.defs.as_ref(),
        order: &prepared.order,
        backend,
        params: &config.params,
        retry: opts.retry,
        cache: Some(&cache),
    };
    let matrix_opts = MatrixOptions {
        max_in_flight: opts.max_in_flight.unwrap_or(config.max_in_flight),
        store: Some(&store),
    };
    let outcome = run_matrix(&prepared.corpus, &prepared.variants, &ctx, matrix_opts)?;

    let variants = prepared
        .variants
        .iter()
        .map(|&variant| {
            let (decisive, undecided) = outcome
                .transcripts
                .iter()
                .filter(|t| t.variant == variant)
                .fold((0, 0), |(d, u), t| {
                    if t.verdict == Verdict::Undecided {
                        (d, u + 1)
                    } else {
                        (d + 1, u)
                    }
                });
            VariantSummary {
                variant,
                decisive,
                undecided,
            }
        })
        .collect();

    let summary = RunSummary {
        store: store_path,
        transcripts: outcome.transcripts.len(),
        reused: outcome.reused,
        executed: outcome.executed,
        backend_calls: outcome.backend_calls,
        variants,
        failures: outcome
            .failures
            .iter()
            .map(|f| {
                format!(
                    "{} / {} run {}: {}",
                    f.case_id, f.variant, f.run_index, f.error
                )
            })
            .collect(),
    };

    let total_latency: u64 = outcome
        .transcripts
        .iter()
        .flat_map(|t| t.stages.iter().map(|s| s.latency_ms))
        .sum();
    let finished = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "finished_unix": finished,
        "total_latency_ms": total_latency,
        "backend_calls": outcome.backend_calls,
        "reused": outcome.reused,
        "failures": summary.failures.len(),
    });
    write_file(
        &config.output_dir.join("run_meta.json"),
        &serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;

    if summary.failures.is_empty() {
        Ok(summary)
    } else {
        Err(ExperimentError::RunFailures {
            failed: summary.failures.len(),
            summary: Box::new(summary),
        })
    }
}
