use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::backend::{BackendDescriptor, GenerationParams};
use crate::corpus::{ExpectedTaxonomy, RhetoricalRole};
use crate::metrics::EvaluationScope;
use crate::prompt::PromptVariant;

/// `"auto"`, `"none"`, `"full"` or an explicit role list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaxonomySetting {
    Keyword(String),
    Roles(Vec<RhetoricalRole>),
}

impl Default for TaxonomySetting {
    fn default() -> Self {
        TaxonomySetting::Keyword("auto".into())
    }
}

impl TaxonomySetting {
    pub fn expected(&self) -> Result<ExpectedTaxonomy, String> {
        match self {
            TaxonomySetting::Keyword(k) => match k.as_str() {
                "auto" => Ok(ExpectedTaxonomy::Auto),
                "none" => Ok(ExpectedTaxonomy::None),
                "full" => Ok(ExpectedTaxonomy::full()),
                other => Err(format!("unknown taxonomy keyword \"{other}\"")),
            },
            TaxonomySetting::Roles(roles) => Ok(ExpectedTaxonomy::Roles(
                roles.iter().copied().collect::<BTreeSet<_>>(),
            )),
        }
    }
}

fn default_scopes() -> Vec<EvaluationScope> {
    EvaluationScope::ALL.to_vec()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_in_flight() -> usize {
    4
}

/// One experiment, read from a single JSON file. Only the API credential
/// comes from the environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub taxonomy: TaxonomySetting,
    /// Prompt template file; the bundled default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    pub backend: BackendDescriptor,
    #[serde(default)]
    pub params: GenerationParams,
    /// Must be set to run more than one repeat.
    #[serde(default)]
    pub stochastic_backend: bool,
    /// Full matrix for the corpus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<PromptVariant>>,
    #[serde(default = "default_scopes")]
    pub scopes: Vec<EvaluationScope>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_order: Option<Vec<RhetoricalRole>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(format!("config: {e}")))
    }

    /// Loads a config file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_dir);
        if let Some(t) = self.template.as_mut() {
            fix(t);
        }
    }

    pub fn store_path(&self) -> PathBuf {
        self.output_dir.join("transcripts.jsonl")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.json")
    }
}
