//! Prompt assembly for the eight definitions/roles/chain ablation variants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RhetoricalRole;
use crate::hash::sha256_hex;

const DEFAULT_TEMPLATE: &str = include_str!("../templates/default.json");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("sequencing error: {0}")]
    Sequencing(String),
    #[error("no definition for role {0}")]
    MissingDefinition(RhetoricalRole),
    #[error("empty definition for role {0}")]
    EmptyDefinition(RhetoricalRole),
    #[error("definitions {0} for this variant")]
    DefinitionsPresence(&'static str),
    #[error("template: {0}")]
    Template(String),
    #[error("unknown variant name \"{0}\"")]
    UnknownVariant(String),
}

/// One cell of the D/R/C ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptVariant {
    pub definitions: bool,
    pub roles: bool,
    pub chain: bool,
}

impl PromptVariant {
    pub const fn new(definitions: bool, roles: bool, chain: bool) -> Self {
        PromptVariant {
            definitions,
            roles,
            chain,
        }
    }

    /// Table column order: D/R/C, D/R, D/C, D, R/C, R, C, None.
    pub const ALL: [PromptVariant; 8] = [
        PromptVariant::new(true, true, true),
        PromptVariant::new(true, true, false),
        PromptVariant::new(true, false, true),
        PromptVariant::new(true, false, false),
        PromptVariant::new(false, true, true),
        PromptVariant::new(false, true, false),
        PromptVariant::new(false, false, true),
        PromptVariant::new(false, false, false),
    ];

    pub fn name(&self) -> String {
        let flags: Vec<&str> = [
            (self.definitions, "D"),
            (self.roles, "R"),
            (self.chain, "C"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if flags.is_empty() {
            "None".to_string()
        } else {
            flags.join("/")
        }
    }

    /// Position in the canonical column order.
    pub fn column(&self) -> usize {
        Self::ALL
            .iter()
            .position(|v| v == self)
            .expect("ALL is exhaustive")
    }

    /// The same variant with the chain flag flipped.
    pub fn chain_partner(&self) -> PromptVariant {
        PromptVariant {
            chain: !self.chain,
            ..*self
        }
    }

    pub fn stages(&self) -> &'static [ChainStage] {
        if self.chain {
            &[
                ChainStage::Analysis,
                ChainStage::Ratio,
                ChainStage::Rpc,
                ChainStage::Verdict,
            ]
        } else {
            &[ChainStage::Analysis, ChainStage::Verdict]
        }
    }

    pub fn generation_stages(&self) -> &'static [ChainStage] {
        let s = self.stages();
        &s[..s.len() - 1]
    }
}

impl PartialOrd for PromptVariant {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PromptVariant {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.column().cmp(&other.column())
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PromptVariant {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PromptError::UnknownVariant(s.to_string()))
    }
}

impl TryFrom<String> for PromptVariant {
    type Error = PromptError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PromptVariant> for String {
    fn from(v: PromptVariant) -> Self {
        v.name()
    }
}

/// Variants runnable on a corpus; role-free corpora only get D and C toggles.
pub fn variant_matrix(has_roles: bool) -> Vec<PromptVariant> {
    PromptVariant::ALL
        .into_iter()
        .filter(|v| has_roles || !v.roles)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChainStage {
    Analysis,
    Ratio,
    Rpc,
    Verdict,
}

impl ChainStage {
    pub fn label(self) -> &'static str {
        match self {
            ChainStage::Analysis => "ANALYSIS",
            ChainStage::Ratio => "RATIO",
            ChainStage::Rpc => "RPC",
            ChainStage::Verdict => "VERDICT",
        }
    }

    /// Heading line placed above a prior completion.
    pub fn heading(self) -> String {
        format!("{}:", self.label())
    }
}

impl fmt::Display for ChainStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Completions of earlier stages, keyed and ordered by stage.
pub type StageOutputs = BTreeMap<ChainStage, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInstructions {
    #[serde(rename = "ANALYSIS")]
    pub analysis: String,
    #[serde(rename = "RATIO")]
    pub ratio: String,
    #[serde(rename = "RPC")]
    pub rpc: String,
    #[serde(rename = "VERDICT")]
    pub verdict: String,
}

impl StageInstructions {
    pub fn get(&self, stage: ChainStage) -> &str {
        match stage {
            ChainStage::Analysis => &self.analysis,
            ChainStage::Ratio => &self.ratio,
            ChainStage::Rpc => &self.rpc,
            ChainStage::Verdict => &self.verdict,
        }
    }
}

/// Prompt wording: system statement, role definitions and per-stage instructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub system: String,
    pub definitions: BTreeMap<String, String>,
    pub stage_instructions: StageInstructions,
}

impl Template {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let t: Template =
            serde_json::from_str(text).map_err(|e| PromptError::Template(e.to_string()))?;
        for key in t.definitions.keys() {
            key.parse::<RhetoricalRole>()
                .map_err(|e| PromptError::Template(e.to_string()))?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Content hash over the canonical (sorted-key) serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).expect("template serializes");
        sha256_hex(canonical.to_string().as_bytes())
    }

    /// Definitions restricted to `roles`; every role must have non-empty text.
    pub fn definitions_for(
        &self,
        roles: &BTreeSet<RhetoricalRole>,
    ) -> Result<RoleDefinitions, PromptError> {
        let mut map = BTreeMap::new();
        for role in roles {
            let text = self
                .definitions
                .get(role.label())
                .ok_or(PromptError::MissingDefinition(*role))?;
            if text.trim().is_empty() {
                return Err(PromptError::EmptyDefinition(*role));
            }
            map.insert(*role, text.trim().to_string());
        }
        Ok(RoleDefinitions(map))
    }
}

/// Roles whose definitions a corpus needs. Role-free corpora still get the
/// generated sections defined.
pub fn definition_roles(
    taxonomy: &BTreeSet<RhetoricalRole>,
    has_roles: bool,
) -> BTreeSet<RhetoricalRole> {
    if has_roles {
        taxonomy.clone()
    } else {
        RhetoricalRole::REFERENCE.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleDefinitions(BTreeMap<RhetoricalRole, String>);

impl RoleDefinitions {
    pub fn get(&self, role: RhetoricalRole) -> Option<&str> {
        self.0.get(&role).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::from("Definitions of rhetorical roles:");
        for (role, text) in &self.0 {
            out.push_str(&format!("\n- {}: {}", role.label(), text));
        }
        out
    }
}

/// Which prior stages must be present before `stage` runs.
fn required_prior(stage: ChainStage, chain: bool) -> Result<&'static [ChainStage], PromptError> {
    use ChainStage::*;
    match (stage, chain) {
        (Analysis, _) => Ok(&[]),
        (Ratio, true) => Ok(&[Analysis]),
        (Rpc, true) => Ok(&[Analysis, Ratio]),
        (Verdict, true) => Ok(&[Analysis, Ratio, Rpc]),
        (Verdict, false) => Ok(&[Analysis]),
        (s, false) => Err(PromptError::Sequencing(format!(
            "stage {s} does not exist without chaining"
        ))),
    }
}

fn check_prior(
    stage: ChainStage,
    variant: &PromptVariant,
    prior: &StageOutputs,
) -> Result<(), PromptError> {
    let required = required_prior(stage, variant.chain)?;
    let present: Vec<ChainStage> = prior.keys().copied().collect();
    if present != required {
        return Err(PromptError::Sequencing(format!(
            "stage {stage} of variant {variant} needs prior {required:?}, got {present:?}"
        )));
    }
    Ok(())
}

fn push_prior(blocks: &mut Vec<String>, prior: &StageOutputs) {
    for (stage, completion) in prior {
        blocks.push(format!("{}\n{}", stage.heading(), completion));
    }
}

/// Builds prompts from a fixed template.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    template: Template,
    template_hash: String,
}

impl PromptBuilder {
    pub fn new(template: Template) -> Self {
        let template_hash = template.hash();
        PromptBuilder {
            template,
            template_hash,
        }
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn template_hash(&self) -> &str {
        &self.template_hash
    }

    /// Prompt for a generation stage: system, definitions (D only), case
    /// text, prior completions under headings, then the stage instruction.
    pub fn build_stage_prompt(
        &self,
        case_text: &str,
        variant: &PromptVariant,
        defs: Option<&RoleDefinitions>,
        stage: ChainStage,
        prior: &StageOutputs,
    ) -> Result<String, PromptError> {
        if stage == ChainStage::Verdict {
            return Err(PromptError::Sequencing(
                "the verdict stage is built from generated sections only".into(),
            ));
        }
        check_prior(stage, variant, prior)?;
        let mut blocks = vec![self.template.system.clone()];
        match (variant.definitions, defs) {
            (true, Some(d)) => blocks.push(d.render()),
            (true, Option::None) => return Err(PromptError::DefinitionsPresence("missing")),
            (false, Some(_)) => return Err(PromptError::DefinitionsPresence("not allowed")),
            (false, Option::None) => {}
        }
        blocks.push(case_text.to_string());
        push_prior(&mut blocks, prior);
        blocks.push(self.template.stage_instructions.get(stage).to_string());
        Ok(blocks.join("\n\n"))
    }

    /// Follow-up prompt asking for a YES/NO verdict from the generated sections.
    pub fn build_verdict_prompt(
        &self,
        context: &StageOutputs,
        variant: &PromptVariant,
    ) -> Result<String, PromptError> {
        if context.is_empty() {
            return Err(PromptError::Sequencing("verdict context is empty".into()));
        }
        check_prior(ChainStage::Verdict, variant, context)?;
        let mut blocks = vec![self.template.system.clone()];
        push_prior(&mut blocks, context);
        blocks.push(self.template.stage_instructions.verdict.clone());
        Ok(blocks.join("\n\n"))
    }
}
