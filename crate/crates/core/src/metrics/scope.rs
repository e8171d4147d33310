use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::chain::{ChainTranscript, Verdict};
use crate::prompt::PromptVariant;

/// Which cases a variant is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationScope {
    /// Cases where this variant is decisive.
    Independent,
    /// Cases where every variant in the matrix is decisive.
    Common,
    /// Cases where both this variant and its chain-toggled partner are decisive.
    Chainwise,
}

impl EvaluationScope {
    pub const ALL: [EvaluationScope; 3] = [
        EvaluationScope::Independent,
        EvaluationScope::Common,
        EvaluationScope::Chainwise,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EvaluationScope::Independent => "independent",
            EvaluationScope::Common => "common",
            EvaluationScope::Chainwise => "chainwise",
        }
    }
}

impl fmt::Display for EvaluationScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EvaluationScope {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.label() == s.to_ascii_lowercase())
            .ok_or_else(|| MetricsError::Scope(format!("unknown scope \"{s}\"")))
    }
}

/// Verdicts of one run, per variant and case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerdictTable {
    table: BTreeMap<PromptVariant, BTreeMap<String, Verdict>>,
}

impl VerdictTable {
    pub fn from_transcripts<'a>(
        transcripts: impl IntoIterator<Item = &'a ChainTranscript>,
    ) -> Self {
        let mut t = VerdictTable::default();
        for tr in transcripts {
            t.insert(tr.variant, &tr.case_id, tr.verdict);
        }
        t
    }

    pub fn insert(&mut self, variant: PromptVariant, case_id: &str, verdict: Verdict) {
        self.table
            .entry(variant)
            .or_default()
            .insert(case_id.to_string(), verdict);
    }

    pub fn variants(&self) -> impl Iterator<Item = PromptVariant> + '_ {
        self.table.keys().copied()
    }

    pub fn verdicts(&self, variant: PromptVariant) -> Option<&BTreeMap<String, Verdict>> {
        self.table.get(&variant)
    }

    fn decisive(&self, variant: PromptVariant) -> Result<BTreeSet<String>, MetricsError> {
        let v = self
            .table
            .get(&variant)
            .ok_or_else(|| MetricsError::Scope(format!("no transcripts for variant {variant}")))?;
        Ok(v.iter()
            .filter(|(_, verdict)| verdict.is_decisive())
            .map(|(id, _)| id.clone())
            .collect())
    }
}

pub fn select_scope(
    table: &VerdictTable,
    scope: EvaluationScope,
    variant: PromptVariant,
) -> Result<BTreeSet<String>, MetricsError> {
    let own = table.decisive(variant)?;
    match scope {
        EvaluationScope::Independent => Ok(own),
        EvaluationScope::Common => {
            let mut acc = own;
            for other in table.variants() {
                let d = table.decisive(other)?;
                acc.retain(|c| d.contains(c));
            }
            Ok(acc)
        }
        EvaluationScope::Chainwise => {
            let partner = variant.chain_partner();
            let d = table.decisive(partner).map_err(|_| {
                MetricsError::Scope(format!(
                    "variant {variant} has no chain partner {partner} in the matrix"
                ))
            })?;
            Ok(own.intersection(&d).cloned().collect())
        }
    }
}
