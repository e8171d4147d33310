mod common;

use std::sync::Mutex;

use common::*;
use ljp_core::backend::{GenerationParams, RuleMock, ScriptedMock};
use ljp_core::cache::{StageCache, TranscriptStore};
use ljp_core::chain::{run_case, ChainContext, RetryPolicy, RunError, Verdict};
use ljp_core::matrix::{run_matrix, MatrixError, MatrixOptions};
use ljp_core::prompt::{variant_matrix, ChainStage, PromptBuilder, PromptVariant, Template};
use ljp_core::restructure::RoleOrder;

struct Kit {
    prompts: PromptBuilder,
    defs: ljp_core::prompt::RoleDefinitions,
    order: RoleOrder,
}

impl Kit {
    fn new() -> Self {
        let t = Template::builtin();
        let defs = t
            .definitions_for(&ljp_core::corpus::RhetoricalRole::ALL.into_iter().collect())
            .unwrap();
        Kit {
            prompts: PromptBuilder::new(t),
            defs,
            order: RoleOrder::default(),
        }
    }

    fn ctx<'a>(
        &'a self,
        backend: &'a dyn ljp_core::backend::Backend,
        params: &'a GenerationParams,
        cache: Option<&'a StageCache>,
    ) -> ChainContext<'a> {
        ChainContext {
            prompts: &self.prompts,
            defs: Some(&self.defs),
            order: &self.order,
            backend,
            params,
            retry: RetryPolicy::no_delay(),
            cache,
        }
    }
}

fn rule_backend() -> RuleMock {
    RuleMock::new("rules", verdict_rules())
}

#[test]
fn matrix_runs_every_case_variant_pair_once() {
    let kit = Kit::new();
    let corpus = synthetic_corpus(1, 2);
    let backend = Recording::new(rule_backend());
    let params = GenerationParams::default();
    let out = run_matrix(
        &corpus,
        &variant_matrix(true),
        &kit.ctx(&backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap();
    assert_eq!(out.transcripts.len(), 16);
    assert!(out.failures.is_empty());
    // four chained variants at 4 calls, four plain at 2, per case
    assert_eq!(out.backend_calls, 2 * (4 * 4 + 4 * 2));
    assert_eq!(backend.calls(), out.backend_calls);
    let order: Vec<(String, PromptVariant)> = out
        .transcripts
        .iter()
        .map(|t| (t.case_id.clone(), t.variant))
        .collect();
    let expected: Vec<(String, PromptVariant)> = ["case00", "case01"]
        .iter()
        .flat_map(|c| PromptVariant::ALL.iter().map(move |v| (c.to_string(), *v)))
        .collect();
    assert_eq!(order, expected);
}

#[test]
fn partial_appeals_are_skipped() {
    let kit = Kit::new();
    let mut corpus = synthetic_corpus(2, 3);
    corpus.cases[1].partial_appeal = true;
    let backend = rule_backend();
    let params = GenerationParams::default();
    let out = run_matrix(
        &corpus,
        &[PromptVariant::ALL[7]],
        &kit.ctx(&backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap();
    let ids: Vec<&str> = out.transcripts.iter().map(|t| t.case_id.as_str()).collect();
    assert_eq!(ids, ["case00", "case02"]);
}

#[test]
fn verdicts_follow_the_mock_rules() {
    let kit = Kit::new();
    let corpus = synthetic_corpus(3, 4);
    let backend = rule_backend();
    let params = GenerationParams::default();
    let out = run_matrix(
        &corpus,
        &variant_matrix(true),
        &kit.ctx(&backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap();
    for t in &out.transcripts {
        let case = corpus.case(&t.case_id).unwrap();
        let expected = match case.gold_verdict {
            ljp_core::corpus::Outcome::Favored => Verdict::Yes,
            ljp_core::corpus::Outcome::NotFavored => Verdict::No,
        };
        assert_eq!(t.verdict, expected, "{} / {}", t.case_id, t.variant);
        t.check().unwrap();
    }
}

#[test]
fn resumes_after_interruption_without_repeating_finished_work() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("t.jsonl"));
    let kit = Kit::new();
    let corpus = synthetic_corpus(4, 2);
    let variants = variant_matrix(true);
    let params = GenerationParams::default();

    // the first case needs 24 calls, the next two chains of the second case 6 more
    let interrupted = Budgeted {
        inner: rule_backend(),
        budget: Mutex::new(30),
    };
    let opts = MatrixOptions {
        max_in_flight: 1,
        store: Some(&store),
    };
    let first = run_matrix(
        &corpus,
        &variants,
        &kit.ctx(&interrupted, &params, None),
        opts,
    )
    .unwrap();
    assert_eq!(first.transcripts.len(), 10);
    assert_eq!(first.failures.len(), 6);
    assert_eq!(store.load().unwrap().len(), 10);

    let backend = Recording::new(rule_backend());
    let second = run_matrix(&corpus, &variants, &kit.ctx(&backend, &params, None), opts).unwrap();
    assert_eq!(second.reused, 10);
    assert_eq!(second.executed, 6);
    assert!(second.failures.is_empty());
    assert_eq!(second.transcripts.len(), 16);
    assert_eq!(store.load().unwrap().len(), 16);
    // remaining chains: D/C, D, R/C, R, C, None of the second case
    assert_eq!(backend.calls(), 4 + 2 + 4 + 2 + 4 + 2);

    let third = run_matrix(&corpus, &variants, &kit.ctx(&backend, &params, None), opts).unwrap();
    assert_eq!(
        (third.reused, third.executed, third.backend_calls),
        (16, 0, 0)
    );
}

#[test]
fn stage_cache_resumes_a_chain_mid_way() {
    let kit = Kit::new();
    let corpus = synthetic_corpus(5, 1);
    let variant: PromptVariant = "D/R/C".parse().unwrap();
    let params = GenerationParams::default();
    let cache = StageCache::in_memory();

    let failing = Budgeted {
        inner: rule_backend(),
        budget: Mutex::new(2),
    };
    let err = run_case(
        &kit.ctx(&failing, &params, Some(&cache)),
        &corpus.cases[0],
        variant,
        0,
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            RunError::Backend {
                stage: ChainStage::Rpc,
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(cache.len(), 2);

    let backend = Recording::new(rule_backend());
    let t = run_case(
        &kit.ctx(&backend, &params, Some(&cache)),
        &corpus.cases[0],
        variant,
        0,
    )
    .unwrap();
    assert_eq!(backend.calls(), 2);
    assert_eq!(t.stages.len(), 4);
}

#[test]
fn repeats_multiply_transcripts() {
    let kit = Kit::new();
    let corpus = synthetic_corpus(6, 2);
    let backend = rule_backend();
    let params = GenerationParams {
        repeats: 5,
        ..GenerationParams::default()
    };
    let out = run_matrix(
        &corpus,
        &variant_matrix(true),
        &kit.ctx(&backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap();
    assert_eq!(out.transcripts.len(), 80);
    let mut runs: Vec<u32> = out.transcripts.iter().map(|t| t.run_index).collect();
    runs.sort();
    runs.dedup();
    assert_eq!(runs, [0, 1, 2, 3, 4]);
}

#[test]
fn concurrency_does_not_change_results() {
    let kit = Kit::new();
    let corpus = synthetic_corpus(7, 6);
    let params = GenerationParams::default();
    let variants = variant_matrix(true);
    let serial_backend = rule_backend();
    let serial = run_matrix(
        &corpus,
        &variants,
        &kit.ctx(&serial_backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap();
    let parallel_backend = rule_backend();
    let parallel = run_matrix(
        &corpus,
        &variants,
        &kit.ctx(&parallel_backend, &params, None),
        MatrixOptions {
            max_in_flight: 8,
            store: None,
        },
    )
    .unwrap();
    let a: Vec<String> = serial
        .transcripts
        .iter()
        .map(|t| t.canonical_json())
        .collect();
    let b: Vec<String> = parallel
        .transcripts
        .iter()
        .map(|t| t.canonical_json())
        .collect();
    assert_eq!(a, b);
}

#[test]
fn role_variants_are_rejected_on_role_free_corpora() {
    let kit = Kit::new();
    let corpus = strip_roles(&synthetic_corpus(8, 2));
    let backend = rule_backend();
    let params = GenerationParams::default();
    let err = run_matrix(
        &corpus,
        &variant_matrix(true),
        &kit.ctx(&backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, MatrixError::Incompatible(v) if v.roles));

    let ok = run_matrix(
        &corpus,
        &variant_matrix(false),
        &kit.ctx(&backend, &params, None),
        MatrixOptions::default(),
    )
    .unwrap();
    assert_eq!(ok.transcripts.len(), 8);
}

#[test]
fn scripted_sequence_is_consumed_in_stage_order() {
    let kit = Kit::new();
    let corpus = synthetic_corpus(9, 1);
    let backend = Recording::new(ScriptedMock::sequence(
        "s",
        ["analysis text", "ratio text", "rpc text", "yes"],
    ));
    let params = GenerationParams::default();
    let variant: PromptVariant = "C".parse().unwrap();
    let t = run_case(
        &kit.ctx(&backend, &params, None),
        &corpus.cases[0],
        variant,
        0,
    )
    .unwrap();
    assert_eq!(t.verdict, Verdict::Yes);
    assert_eq!(t.explanation, "analysis text\nratio text\nrpc text");
    let stages: Vec<ChainStage> = backend.take().iter().map(|p| stage_of(p)).collect();
    assert_eq!(
        stages,
        [
            ChainStage::Analysis,
            ChainStage::Ratio,
            ChainStage::Rpc,
            ChainStage::Verdict
        ]
    );
}
