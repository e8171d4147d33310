//! Rhetorical-role annotated judgment corpora.
//!
//! A corpus file is UTF-8 JSON:
//!
//! ```text
//! {"name": str, "taxonomy": [str] | null,
//!  "cases": [{"case_id": str, "gold_verdict": 0|1, "partial_appeal": bool,
//!             "sentences": [{"text": str, "role": str}]}]}
//! ```
//!
//! `role` is absent on every sentence iff `taxonomy` is null (role-free
//! corpora such as Predex).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid record {locus}: {message}")]
    Record { locus: String, message: String },
    #[error("unknown or disallowed role \"{token}\" in case {case_id}")]
    Taxonomy { token: String, case_id: String },
    #[error("duplicate case_id \"{0}\"")]
    DuplicateCase(String),
    #[error("case {0} has no ANALYSIS, RATIO or RPC sentence to use as reference explanation")]
    EmptyReference(String),
    #[error("case {0} carries no role annotations")]
    MissingRoles(String),
}

/// Sentence-level rhetorical role label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RhetoricalRole {
    Preamble,
    Fac,
    Rlc,
    Issue,
    ArgPetitioner,
    ArgRespondent,
    Analysis,
    Sta,
    PreRelied,
    PreNotRelied,
    Ratio,
    Rpc,
    None,
}

impl RhetoricalRole {
    pub const ALL: [RhetoricalRole; 13] = [
        RhetoricalRole::Preamble,
        RhetoricalRole::Fac,
        RhetoricalRole::Rlc,
        RhetoricalRole::Issue,
        RhetoricalRole::ArgPetitioner,
        RhetoricalRole::ArgRespondent,
        RhetoricalRole::Analysis,
        RhetoricalRole::Sta,
        RhetoricalRole::PreRelied,
        RhetoricalRole::PreNotRelied,
        RhetoricalRole::Ratio,
        RhetoricalRole::Rpc,
        RhetoricalRole::None,
    ];

    /// Roles withheld from the model input; the chain generates them instead.
    pub const EXCLUDED: [RhetoricalRole; 4] = [
        RhetoricalRole::Analysis,
        RhetoricalRole::Sta,
        RhetoricalRole::Ratio,
        RhetoricalRole::Rpc,
    ];

    /// Roles whose sentences make up the gold reasoning.
    pub const REFERENCE: [RhetoricalRole; 3] = [
        RhetoricalRole::Analysis,
        RhetoricalRole::Ratio,
        RhetoricalRole::Rpc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RhetoricalRole::Preamble => "PREAMBLE",
            RhetoricalRole::Fac => "FAC",
            RhetoricalRole::Rlc => "RLC",
            RhetoricalRole::Issue => "ISSUE",
            RhetoricalRole::ArgPetitioner => "ARG_PETITIONER",
            RhetoricalRole::ArgRespondent => "ARG_RESPONDENT",
            RhetoricalRole::Analysis => "ANALYSIS",
            RhetoricalRole::Sta => "STA",
            RhetoricalRole::PreRelied => "PRE_RELIED",
            RhetoricalRole::PreNotRelied => "PRE_NOT_RELIED",
            RhetoricalRole::Ratio => "RATIO",
            RhetoricalRole::Rpc => "RPC",
            RhetoricalRole::None => "NONE",
        }
    }

    pub fn is_excluded(self) -> bool {
        Self::EXCLUDED.contains(&self)
    }
}

impl fmt::Display for RhetoricalRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown rhetorical role \"{0}\"")]
pub struct UnknownRole(pub String);

impl FromStr for RhetoricalRole {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.label() == s)
            .ok_or_else(|| UnknownRole(s.to_string()))
    }
}

impl TryFrom<String> for RhetoricalRole {
    type Error = UnknownRole;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RhetoricalRole> for String {
    fn from(r: RhetoricalRole) -> Self {
        r.label().to_string()
    }
}

/// Gold outcome of a case. The positive class is "plaintiff favored".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    NotFavored,
    Favored,
}

impl Outcome {
    pub fn from_label(v: u64) -> Option<Self> {
        match v {
            0 => Some(Outcome::NotFavored),
            1 => Some(Outcome::Favored),
            _ => Option::None,
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Outcome::NotFavored => 0,
            Outcome::Favored => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub index: usize,
    pub text: String,
    /// `None` for role-free corpora.
    pub role: Option<RhetoricalRole>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgmentCase {
    pub case_id: String,
    pub sentences: Vec<AnnotatedSentence>,
    pub gold_verdict: Outcome,
    pub partial_appeal: bool,
}

impl JudgmentCase {
    pub fn has_roles(&self) -> bool {
        self.sentences.iter().all(|s| s.role.is_some())
    }
}

/// Which taxonomy the caller expects a corpus file to use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpectedTaxonomy {
    /// Take the taxonomy declared in the file (or none when it declares null).
    Auto,
    /// Role-free corpus.
    None,
    Roles(BTreeSet<RhetoricalRole>),
}

impl ExpectedTaxonomy {
    pub fn full() -> Self {
        ExpectedTaxonomy::Roles(RhetoricalRole::ALL.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    /// Permitted roles; empty when `has_roles` is false.
    pub taxonomy: BTreeSet<RhetoricalRole>,
    pub cases: Vec<JudgmentCase>,
    pub has_roles: bool,
}

#[derive(Deserialize, Serialize)]
struct RawCorpus {
    name: String,
    #[serde(default)]
    taxonomy: Option<Vec<String>>,
    cases: Vec<RawCase>,
}

#[derive(Deserialize, Serialize)]
struct RawCase {
    case_id: String,
    gold_verdict: u64,
    #[serde(default)]
    partial_appeal: bool,
    sentences: Vec<RawSentence>,
}

#[derive(Deserialize, Serialize)]
struct RawSentence {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<String>,
}

/// Trims and collapses internal whitespace runs to single spaces.
pub fn normalize_sentence(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn load_corpus(path: &Path, expected: &ExpectedTaxonomy) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, expected)
}

pub fn parse_corpus(text: &str, expected: &ExpectedTaxonomy) -> Result<Corpus, CorpusError> {
    let raw: RawCorpus = serde_json::from_str(text).map_err(|e| CorpusError::Format {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let declared = match &raw.taxonomy {
        Some(tokens) => {
            let mut set = BTreeSet::new();
            for t in tokens {
                let role = t
                    .parse::<RhetoricalRole>()
                    .map_err(|_| CorpusError::Taxonomy {
                        token: t.clone(),
                        case_id: "<taxonomy>".into(),
                    })?;
                set.insert(role);
            }
            Some(set)
        }
        Option::None => Option::None,
    };

    let taxonomy: Option<BTreeSet<RhetoricalRole>> = match (expected, declared) {
        (ExpectedTaxonomy::Auto, d) => d,
        (ExpectedTaxonomy::None, Option::None) => Option::None,
        (ExpectedTaxonomy::None, Some(_)) => {
            return Err(CorpusError::Record {
                locus: "taxonomy".into(),
                message: "expected a role-free corpus but the file declares a taxonomy".into(),
            })
        }
        (ExpectedTaxonomy::Roles(allowed), Option::None) => Some(allowed.clone()),
        (ExpectedTaxonomy::Roles(allowed), Some(d)) => {
            if let Some(extra) = d.iter().find(|r| !allowed.contains(r)) {
                return Err(CorpusError::Taxonomy {
                    token: extra.label().into(),
                    case_id: "<taxonomy>".into(),
                });
            }
            Some(d)
        }
    };

    let has_roles = taxonomy.is_some();
    let taxonomy = taxonomy.unwrap_or_default();
    let mut seen = HashSet::new();
    let mut cases = Vec::with_capacity(raw.cases.len());

    for (ci, rc) in raw.cases.into_iter().enumerate() {
        if !seen.insert(rc.case_id.clone()) {
            return Err(CorpusError::DuplicateCase(rc.case_id));
        }
        let gold_verdict =
            Outcome::from_label(rc.gold_verdict).ok_or_else(|| CorpusError::Record {
                locus: format!("cases[{ci}] ({})", rc.case_id),
                message: format!("gold_verdict must be 0 or 1, got {}", rc.gold_verdict),
            })?;
        if rc.sentences.is_empty() {
            return Err(CorpusError::Record {
                locus: format!("cases[{ci}] ({})", rc.case_id),
                message: "case has no sentences".into(),
            });
        }
        let mut sentences = Vec::with_capacity(rc.sentences.len());
        for (si, rs) in rc.sentences.into_iter().enumerate() {
            let locus = || format!("cases[{ci}].sentences[{si}] ({})", rc.case_id);
            let text = normalize_sentence(&rs.text);
            if text.is_empty() {
                return Err(CorpusError::Record {
                    locus: locus(),
                    message: "sentence text is empty".into(),
                });
            }
            let role = match (has_roles, rs.role) {
                (true, Some(token)) => {
                    let role = token
                        .parse::<RhetoricalRole>()
                        .ok()
                        .filter(|r| taxonomy.contains(r))
                        .ok_or_else(|| CorpusError::Taxonomy {
                            token: token.clone(),
                            case_id: rc.case_id.clone(),
                        })?;
                    Some(role)
                }
                (true, Option::None) => {
                    return Err(CorpusError::Record {
                        locus: locus(),
                        message: "sentence is missing its role".into(),
                    })
                }
                (false, Some(_)) => {
                    return Err(CorpusError::Record {
                        locus: locus(),
                        message: "role given but the corpus has no taxonomy".into(),
                    })
                }
                (false, Option::None) => Option::None,
            };
            sentences.push(AnnotatedSentence {
                index: si,
                text,
                role,
            });
        }
        cases.push(JudgmentCase {
            case_id: rc.case_id,
            sentences,
            gold_verdict,
            partial_appeal: rc.partial_appeal,
        });
    }

    Ok(Corpus {
        name: raw.name,
        taxonomy,
        cases,
        has_roles,
    })
}

impl Corpus {
    /// Serializes back to the corpus file format.
    pub fn to_json(&self) -> String {
        let raw = RawCorpus {
            name: self.name.clone(),
            taxonomy: self.has_roles.then(|| {
                self.taxonomy
                    .iter()
                    .map(|r| r.label().to_string())
                    .collect()
            }),
            cases: self
                .cases
                .iter()
                .map(|c| RawCase {
                    case_id: c.case_id.clone(),
                    gold_verdict: c.gold_verdict.label() as u64,
                    partial_appeal: c.partial_appeal,
                    sentences: c
                        .sentences
                        .iter()
                        .map(|s| RawSentence {
                            text: s.text.clone(),
                            role: s.role.map(|r| r.label().to_string()),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("corpus serialization cannot fail")
    }

    pub fn case(&self, case_id: &str) -> Option<&JudgmentCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

/// Drops cases flagged as partially appealed, keeping order.
pub fn filter_decided(corpus: &Corpus) -> Corpus {
    Corpus {
        cases: corpus
            .cases
            .iter()
            .filter(|c| !c.partial_appeal)
            .cloned()
            .collect(),
        ..corpus.clone()
    }
}

/// Gold reasoning for a case: ANALYSIS, RATIO and RPC sentences in document
/// order, newline-joined.
pub fn reference_explanation(case: &JudgmentCase) -> Result<String, CorpusError> {
    if !case.has_roles() {
        return Err(CorpusError::MissingRoles(case.case_id.clone()));
    }
    let parts: Vec<&str> = case
        .sentences
        .iter()
        .filter(|s| {
            s.role
                .is_some_and(|r| RhetoricalRole::REFERENCE.contains(&r))
        })
        .map(|s| s.text.as_str())
        .collect();
    if parts.is_empty() {
        return Err(CorpusError::EmptyReference(case.case_id.clone()));
    }
    Ok(parts.join("\n"))
}
