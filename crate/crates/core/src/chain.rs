//! Execution of the court-style reasoning chain for one case.
//!
//! Chained variants run ANALYSIS, RATIO and RPC, each stage seeing the case
//! text and every earlier completion, followed by a VERDICT follow-up over the
//! generated sections. Non-chained variants run ANALYSIS then VERDICT.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, GenerationParams};
use crate::cache::{StageCache, StageKey, StageRecordCache};
use crate::corpus::JudgmentCase;
use crate::hash::sha256_hex;
use crate::prompt::{
    ChainStage, PromptBuilder, PromptError, PromptVariant, RoleDefinitions, StageOutputs,
};
use crate::restructure::{render_case, RestructureError, RoleOrder};

/// Joiner between stage completions in the explanation.
pub const EXPLANATION_JOINER: &str = "\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Yes,
    No,
    Undecided,
}

impl Verdict {
    pub fn is_decisive(self) -> bool {
        self != Verdict::Undecided
    }
}

/// YES/NO from a completion. Scans case-insensitively for standalone word
/// tokens; exactly one of the two (possibly repeated) decides, anything else
/// is undecided.
pub fn parse_verdict(completion: &str) -> Verdict {
    let mut yes = false;
    let mut no = false;
    for token in completion.split(|c: char| !c.is_alphanumeric()) {
        if token.eq_ignore_ascii_case("yes") {
            yes = true;
        } else if token.eq_ignore_ascii_case("no") {
            no = true;
        }
    }
    match (yes, no) {
        (true, false) => Verdict::Yes,
        (false, true) => Verdict::No,
        _ => Verdict::Undecided,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: ChainStage,
    pub prompt_hash: String,
    pub prompt: String,
    pub completion: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTranscript {
    pub case_id: String,
    pub variant: PromptVariant,
    pub run_index: u32,
    pub stages: Vec<StageRecord>,
    pub explanation: String,
    pub verdict: Verdict,
    pub template_hash: String,
    pub backend_id: String,
    pub params: GenerationParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Identity of a transcript for reuse across runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TranscriptKey {
    pub case_id: String,
    pub variant: String,
    pub run_index: u32,
    pub template_hash: String,
    pub backend_id: String,
    pub params: String,
}

impl ChainTranscript {
    pub fn key(&self) -> TranscriptKey {
        TranscriptKey {
            case_id: self.case_id.clone(),
            variant: self.variant.name(),
            run_index: self.run_index,
            template_hash: self.template_hash.clone(),
            backend_id: self.backend_id.clone(),
            params: self.params.cache_key(),
        }
    }

    /// Checks stage shape, explanation and verdict consistency.
    pub fn check(&self) -> Result<(), String> {
        let got: Vec<ChainStage> = self.stages.iter().map(|s| s.stage).collect();
        if got != self.variant.stages() {
            return Err(format!(
                "{} / {}: stages {got:?} do not match variant",
                self.case_id, self.variant
            ));
        }
        let explanation = self.stages[..self.stages.len() - 1]
            .iter()
            .map(|s| s.completion.as_str())
            .collect::<Vec<_>>()
            .join(EXPLANATION_JOINER);
        if explanation != self.explanation {
            return Err(format!(
                "{} / {}: explanation mismatch",
                self.case_id, self.variant
            ));
        }
        let verdict = parse_verdict(&self.stages.last().expect("non-empty").completion);
        if verdict != self.verdict {
            return Err(format!(
                "{} / {}: verdict mismatch",
                self.case_id, self.variant
            ));
        }
        Ok(())
    }

    /// JSON with latency zeroed, for byte-level comparisons.
    pub fn canonical_json(&self) -> String {
        let mut t = self.clone();
        for s in &mut t.stages {
            s.latency_ms = 0;
        }
        serde_json::to_value(&t)
            .expect("transcript serializes")
            .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("case {case_id}, stage {stage}: backend failed after retries: {source}")]
    Transient {
        case_id: String,
        stage: ChainStage,
        #[source]
        source: BackendError,
    },
    #[error("case {case_id}, stage {stage}: {source}")]
    Backend {
        case_id: String,
        stage: ChainStage,
        #[source]
        source: BackendError,
    },
    #[error("internal sequencing error: {0}")]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Restructure(#[from] RestructureError),
    #[error("variant {variant} needs role annotations but case {case_id} has none")]
    Incompatible {
        case_id: String,
        variant: PromptVariant,
    },
    #[error("stage cache: {0}")]
    Cache(String),
}

impl RunError {
    pub fn is_transient(&self) -> bool {
        matches!(self, RunError::Transient { .. })
    }
}

/// Everything a case run needs besides the case itself.
#[derive(Clone, Copy)]
pub struct ChainContext<'a> {
    pub prompts: &'a PromptBuilder,
    /// Used only by variants with definitions.
    pub defs: Option<&'a RoleDefinitions>,
    pub order: &'a RoleOrder,
    pub backend: &'a dyn Backend,
    pub params: &'a GenerationParams,
    pub retry: RetryPolicy,
    pub cache: Option<&'a StageCache>,
}

#[derive(Debug, Clone)]
pub(crate) struct CaseRun {
    pub transcript: ChainTranscript,
    pub backend_calls: usize,
}

pub fn run_case(
    ctx: &ChainContext<'_>,
    case: &JudgmentCase,
    variant: PromptVariant,
    run_index: u32,
) -> Result<ChainTranscript, RunError> {
    run_case_counted(ctx, case, variant, run_index).map(|r| r.transcript)
}

pub(crate) fn run_case_counted(
    ctx: &ChainContext<'_>,
    case: &JudgmentCase,
    variant: PromptVariant,
    run_index: u32,
) -> Result<CaseRun, RunError> {
    if variant.roles && !case.has_roles() {
        return Err(RunError::Incompatible {
            case_id: case.case_id.clone(),
            variant,
        });
    }
    let case_text = render_case(case, variant.roles, ctx.order)?;
    let defs = if variant.definitions {
        Some(
            ctx.defs
                .ok_or(PromptError::DefinitionsPresence("missing"))?,
        )
    } else {
        None
    };

    let mut prior = StageOutputs::new();
    let mut stages = Vec::with_capacity(variant.stages().len());
    let mut warnings = Vec::new();
    let mut backend_calls = 0;

    for &stage in variant.stages() {
        let prompt = if stage == ChainStage::Verdict {
            ctx.prompts.build_verdict_prompt(&prior, &variant)?
        } else {
            ctx.prompts
                .build_stage_prompt(&case_text, &variant, defs, stage, &prior)?
        };
        let prompt_hash = sha256_hex(prompt.as_bytes());
        let key = StageKey {
            case_id: &case.case_id,
            variant,
            stage,
            run_index,
            template_hash: ctx.prompts.template_hash(),
            backend_id: ctx.backend.id(),
            params: ctx.params,
            prompt_hash: &prompt_hash,
        };

        let cached = match ctx.cache {
            Some(cache) => cache.get(&key).map_err(RunError::Cache)?,
            None => None,
        };
        let record = match cached {
            Some(hit) => hit,
            None => {
                let started = Instant::now();
                let completion =
                    call_with_retry(ctx, &case.case_id, stage, &prompt, &mut backend_calls)?;
                let fresh = StageRecordCache {
                    completion: completion.text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    warnings: completion.warnings,
                };
                if let Some(cache) = ctx.cache {
                    cache.put(&key, &fresh).map_err(RunError::Cache)?;
                }
                fresh
            }
        };
        for w in &record.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        if stage != ChainStage::Verdict {
            prior.insert(stage, record.completion.clone());
        }
        stages.push(StageRecord {
            stage,
            prompt_hash,
            prompt,
            completion: record.completion,
            latency_ms: record.latency_ms,
        });
    }

    let explanation = prior
        .values()
        .cloned()
        .collect::<Vec<_>>()
        .join(EXPLANATION_JOINER);
    let verdict = parse_verdict(&stages.last().expect("at least two stages").completion);
    Ok(CaseRun {
        transcript: ChainTranscript {
            case_id: case.case_id.clone(),
            variant,
            run_index,
            stages,
            explanation,
            verdict,
            template_hash: ctx.prompts.template_hash().to_string(),
            backend_id: ctx.backend.id().to_string(),
            params: *ctx.params,
            warnings,
        },
        backend_calls,
    })
}

fn call_with_retry(
    ctx: &ChainContext<'_>,
    case_id: &str,
    stage: ChainStage,
    prompt: &str,
    calls: &mut usize,
) -> Result<crate::backend::Completion, RunError> {
    let attempts = ctx.retry.attempts.max(1);
    let mut attempt = 0;
    loop {
        *calls += 1;
        match ctx.backend.generate(prompt, ctx.params) {
            Ok(c) => return Ok(c),
            Err(e) if e.is_transient() => {
                attempt += 1;
                if attempt >= attempts {
                    return Err(RunError::Transient {
                        case_id: case_id.to_string(),
                        stage,
                        source: e,
                    });
                }
                log::warn!("{case_id} {stage}: attempt {attempt} failed: {e}; retrying");
                std::thread::sleep(ctx.retry.delay(attempt - 1));
            }
            Err(e) => {
                return Err(RunError::Backend {
                    case_id: case_id.to_string(),
                    stage,
                    source: e,
                })
            }
        }
    }
}
