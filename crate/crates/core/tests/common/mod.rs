#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;

use ljp_core::backend::{
    Backend, BackendDescriptor, BackendError, Completion, GenerationParams, Reply, Rule,
    RuleMockConfig,
};
use ljp_core::corpus::{AnnotatedSentence, Corpus, JudgmentCase, Outcome, RhetoricalRole};
use ljp_core::prompt::{ChainStage, Template};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Which stage a prompt was built for, recognised by its trailing instruction.
pub fn stage_of(prompt: &str) -> ChainStage {
    let t = Template::builtin();
    [
        ChainStage::Analysis,
        ChainStage::Ratio,
        ChainStage::Rpc,
        ChainStage::Verdict,
    ]
    .into_iter()
    .find(|s| prompt.ends_with(t.stage_instructions.get(*s)))
    .expect("prompt ends with a stage instruction")
}

/// Records every prompt and delegates to an inner backend.
pub struct Recording<B> {
    pub inner: B,
    pub prompts: Mutex<Vec<String>>,
}

impl<B: Backend> Recording<B> {
    pub fn new(inner: B) -> Self {
        Recording {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap().len()
    }

    pub fn take(&self) -> Vec<String> {
        std::mem::take(&mut *self.prompts.lock().unwrap())
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.inner.generate(prompt, params)
    }
}

/// Fails with a fatal error once `budget` calls have been made.
pub struct Budgeted<B> {
    pub inner: B,
    pub budget: Mutex<usize>,
}

impl<B: Backend> Backend for Budgeted<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        let mut b = self.budget.lock().unwrap();
        if *b == 0 {
            return Err(BackendError::Fatal("interrupted".into()));
        }
        *b -= 1;
        self.inner.generate(prompt, params)
    }
}

pub const WIN: &str = "WINMARK";

/// Deterministic rule mock: cases mentioning WIN are decided for the
/// plaintiff, others against; cases mentioning UNSURE stay undecided.
pub fn verdict_rules() -> RuleMockConfig {
    let verdict_marker = Template::builtin().stage_instructions.verdict;
    RuleMockConfig {
        rules: vec![
            Rule {
                contains: vec![verdict_marker.clone(), "UNSURE".into()],
                reply: Reply::Fixed("It could go either way: yes or no.".into()),
            },
            Rule {
                contains: vec![verdict_marker.clone(), WIN.into()],
                reply: Reply::Fixed("YES".into()),
            },
            Rule {
                contains: vec![verdict_marker],
                reply: Reply::Fixed("NO".into()),
            },
            Rule {
                contains: vec!["UNSURE".into()],
                reply: Reply::Fixed("The court is UNSURE whether the appeal succeeds.".into()),
            },
            Rule {
                contains: vec![WIN.into()],
                reply: Reply::Fixed(format!(
                    "The appeal is allowed and the plaintiff should {WIN}."
                )),
            },
        ],
        default: Reply::Fixed(
            "The appeal is dismissed as the evidence does not support it.".into(),
        ),
        seed: 0,
    }
}

pub fn verdict_rule_backend() -> BackendDescriptor {
    BackendDescriptor::RuleMock(verdict_rules())
}

fn words(rng: &mut ChaCha8Rng, vocab: &[&str], n: usize) -> String {
    (0..n)
        .map(|_| *vocab.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

const INPUT_VOCAB: &[&str] = &[
    "appellant",
    "land",
    "contract",
    "tenant",
    "court",
    "order",
    "notice",
    "rent",
];
const GEN_VOCAB: &[&str] = &[
    "held",
    "therefore",
    "allowed",
    "dismissed",
    "principle",
    "costs",
];

/// Synthetic annotated case. Every sentence is unique (it carries its id and
/// index) and excluded-role sentences use a vocabulary of their own.
pub fn synthetic_case(rng: &mut ChaCha8Rng, id: &str, favored: bool) -> JudgmentCase {
    use RhetoricalRole::*;
    let input_roles = [
        Fac,
        Rlc,
        Issue,
        ArgPetitioner,
        ArgRespondent,
        PreRelied,
        PreNotRelied,
        None,
    ];
    let mut sentences: Vec<(RhetoricalRole, String)> = Vec::new();
    sentences.push((
        Preamble,
        format!("{id} appellant versus respondent before the bench"),
    ));
    let n = rng.gen_range(2..10);
    for _ in 0..n {
        let role = if rng.gen_bool(0.3) {
            *RhetoricalRole::EXCLUDED.choose(rng).unwrap()
        } else {
            *input_roles.choose(rng).unwrap()
        };
        let vocab = if role.is_excluded() {
            GEN_VOCAB
        } else {
            INPUT_VOCAB
        };
        let k = rng.gen_range(1..6);
        sentences.push((role, words(rng, vocab, k)));
    }
    if favored {
        sentences.push((Fac, format!("the tenant will {WIN} this dispute")));
    }
    sentences.push((Analysis, "the court held the notice valid".into()));
    sentences.push((Rpc, "appeal allowed with costs".into()));
    JudgmentCase {
        case_id: id.into(),
        sentences: sentences
            .into_iter()
            .enumerate()
            .map(|(i, (role, text))| AnnotatedSentence {
                index: i,
                text: format!("{text} s{i}x{id}"),
                role: Some(role),
            })
            .collect(),
        gold_verdict: if favored {
            Outcome::Favored
        } else {
            Outcome::NotFavored
        },
        partial_appeal: false,
    }
}

pub fn synthetic_corpus(seed: u64, n: usize) -> Corpus {
    let mut r = rng(seed);
    let cases = (0..n)
        .map(|i| synthetic_case(&mut r, &format!("case{i:02}"), i % 2 == 0))
        .collect();
    Corpus {
        name: "synthetic".into(),
        taxonomy: RhetoricalRole::ALL.into_iter().collect::<BTreeSet<_>>(),
        cases,
        has_roles: true,
    }
}

/// Role-free copy of a corpus.
pub fn strip_roles(corpus: &Corpus) -> Corpus {
    let mut c = corpus.clone();
    c.name = "predex-like".into();
    c.has_roles = false;
    c.taxonomy.clear();
    for case in &mut c.cases {
        case.sentences
            .retain(|s| !s.role.is_some_and(RhetoricalRole::is_excluded));
        for (i, s) in case.sentences.iter_mut().enumerate() {
            s.role = Option::None;
            s.index = i;
        }
    }
    c
}

/// Writes a corpus and a config next to each other; returns the config path.
pub fn write_experiment(
    dir: &Path,
    corpus: &Corpus,
    config: serde_json::Value,
) -> std::path::PathBuf {
    std::fs::write(dir.join("corpus.json"), corpus.to_json()).unwrap();
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// Rewrites the verdict stage of a transcript, keeping it self-consistent.
pub fn with_verdict(t: &mut ljp_core::chain::ChainTranscript, completion: &str) {
    let last = t.stages.last_mut().expect("verdict stage");
    last.completion = completion.to_string();
    t.verdict = ljp_core::chain::parse_verdict(completion);
}
