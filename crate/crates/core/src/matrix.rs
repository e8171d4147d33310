//! Batch driver over decided cases × variants × repeats.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use thiserror::Error;

use crate::cache::{StoreError, TranscriptStore};
use crate::chain::{run_case_counted, ChainContext, ChainTranscript, RunError, TranscriptKey};
use crate::corpus::{filter_decided, Corpus};
use crate::prompt::PromptVariant;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("variant {0} needs role annotations but the corpus has none")]
    Incompatible(PromptVariant),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug)]
pub struct CaseFailure {
    pub case_id: String,
    pub variant: PromptVariant,
    pub run_index: u32,
    pub error: RunError,
}

#[derive(Debug, Default)]
pub struct MatrixOutcome {
    /// Sorted by corpus order, then variant column, then run index.
    pub transcripts: Vec<ChainTranscript>,
    pub failures: Vec<CaseFailure>,
    /// Transcripts taken from the store without running anything.
    pub reused: usize,
    /// Case runs that issued at least one backend call.
    pub executed: usize,
    pub backend_calls: usize,
}

#[derive(Clone, Copy)]
pub struct MatrixOptions<'a> {
    pub max_in_flight: usize,
    pub store: Option<&'a TranscriptStore>,
}

impl Default for MatrixOptions<'_> {
    fn default() -> Self {
        MatrixOptions {
            max_in_flight: 1,
            store: None,
        }
    }
}

struct Job<'c> {
    case_pos: usize,
    case: &'c crate::corpus::JudgmentCase,
    variant: PromptVariant,
    run_index: u32,
}

pub fn run_matrix(
    corpus: &Corpus,
    variants: &[PromptVariant],
    ctx: &ChainContext<'_>,
    opts: MatrixOptions<'_>,
) -> Result<MatrixOutcome, MatrixError> {
    if let Some(v) = variants.iter().find(|v| v.roles && !corpus.has_roles) {
        return Err(MatrixError::Incompatible(*v));
    }
    let decided = filter_decided(corpus);
    let mut existing: HashMap<TranscriptKey, ChainTranscript> = match opts.store {
        Some(store) => store.load()?.into_iter().map(|t| (t.key(), t)).collect(),
        None => HashMap::new(),
    };

    let mut outcome = MatrixOutcome::default();
    let mut done: Vec<(usize, ChainTranscript)> = Vec::new();
    let mut jobs = Vec::new();
    for (case_pos, case) in decided.cases.iter().enumerate() {
        for &variant in variants {
            for run_index in 0..ctx.params.repeats {
                let key = TranscriptKey {
                    case_id: case.case_id.clone(),
                    variant: variant.name(),
                    run_index,
                    template_hash: ctx.prompts.template_hash().to_string(),
                    backend_id: ctx.backend.id().to_string(),
                    params: ctx.params.cache_key(),
                };
                match existing.remove(&key) {
                    Some(t) => {
                        outcome.reused += 1;
                        done.push((case_pos, t));
                    }
                    None => jobs.push(Job {
                        case_pos,
                        case,
                        variant,
                        run_index,
                    }),
                }
            }
        }
    }

    let mut writer = match opts.store {
        Some(store) if !jobs.is_empty() => Some(store.writer()?),
        _ => None,
    };
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, jobs.len().max(1));
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| -> Result<(), MatrixError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let jobs = &jobs;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let result = run_case_counted(ctx, job.case, job.variant, job.run_index);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            let job = &jobs[i];
            match result {
                Ok(run) => {
                    if run.backend_calls > 0 {
                        outcome.executed += 1;
                    }
                    outcome.backend_calls += run.backend_calls;
                    if let Some(w) = writer.as_mut() {
                        w.append(&run.transcript)?;
                    }
                    done.push((job.case_pos, run.transcript));
                }
                Err(error) => {
                    log::error!(
                        "{} / {} run {}: {error}",
                        job.case.case_id,
                        job.variant,
                        job.run_index
                    );
                    outcome.failures.push(CaseFailure {
                        case_id: job.case.case_id.clone(),
                        variant: job.variant,
                        run_index: job.run_index,
                        error,
                    });
                }
            }
        }
        Ok(())
    })?;

    done.sort_by_key(|(pos, t)| (*pos, t.variant.column(), t.run_index));
    outcome.transcripts = done.into_iter().map(|(_, t)| t).collect();
    outcome.failures.sort_by(|a, b| {
        (&a.case_id, a.variant, a.run_index).cmp(&(&b.case_id, b.variant, b.run_index))
    });
    Ok(outcome)
}
