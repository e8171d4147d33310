use std::fmt;

use serde::Serialize;

use super::ExperimentConfig;
use crate::backend::Backend;
use crate::corpus::{load_corpus, Corpus};
use crate::metrics::EvaluationScope;
use crate::prompt::{
    definition_roles, variant_matrix, PromptBuilder, PromptVariant, RoleDefinitions, Template,
};
use crate::restructure::RoleOrder;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub locus: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, locus: impl Into<String>, message: impl ToString) {
        self.issues.push(Issue {
            locus: locus.into(),
            message: message.to_string(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "error [{}]: {}", issue.locus, issue.message)?;
        }
        write!(f, "{} errors", self.issues.len())
    }
}

/// Everything loaded and checked, ready to run.
pub struct Prepared {
    pub corpus: Corpus,
    pub prompts: PromptBuilder,
    pub defs: Option<RoleDefinitions>,
    pub order: RoleOrder,
    pub variants: Vec<PromptVariant>,
    pub backend: Option<Box<dyn Backend>>,
}

/// Loads and cross-checks every input named by the config. With `dry_run`
/// the backend is built but never contacted.
pub fn prepare(config: &ExperimentConfig, dry_run: bool) -> (Option<Prepared>, ValidationReport) {
    let mut report = ValidationReport::default();

    if let Err(e) = config.params.validate() {
        report.push("params", e);
    }
    if config.params.repeats > 1 && !config.stochastic_backend {
        report.push(
            "params.repeats",
            "repeats > 1 is only meaningful for a stochastic backend; set stochastic_backend to true",
        );
    }
    if config.max_in_flight == 0 {
        report.push("max_in_flight", "must be at least 1");
    }

    let corpus = match config.taxonomy.expected() {
        Err(e) => {
            report.push("taxonomy", e);
            None
        }
        Ok(expected) => match load_corpus(&config.corpus, &expected) {
            Ok(c) => Some(c),
            Err(e) => {
                report.push(format!("corpus {}", config.corpus.display()), e);
                None
            }
        },
    };

    let template = match &config.template {
        None => Some(Template::builtin()),
        Some(path) => match Template::load(path) {
            Ok(t) => Some(t),
            Err(e) => {
                report.push(format!("template {}", path.display()), e);
                None
            }
        },
    };

    let order = match &config.role_order {
        None => RoleOrder::default(),
        Some(roles) => RoleOrder::new(roles.clone()).unwrap_or_else(|e| {
            report.push("role_order", e);
            RoleOrder::default()
        }),
    };

    let mut variants = Vec::new();
    let mut defs = None;
    if let Some(corpus) = &corpus {
        variants = match &config.variants {
            Some(list) => list.clone(),
            None => variant_matrix(corpus.has_roles),
        };
        for v in variants.iter().filter(|v| v.roles && !corpus.has_roles) {
            report.push(
                format!("variants.{v}"),
                format!(
                    "variant {v} needs rhetorical role annotations but corpus \"{}\" has none",
                    corpus.name
                ),
            );
        }
        let mut seen = std::collections::HashSet::new();
        for v in &variants {
            if !seen.insert(*v) {
                report.push(format!("variants.{v}"), "listed twice");
            }
        }
        if config.scopes.contains(&EvaluationScope::Chainwise) {
            for v in &variants {
                if !variants.contains(&v.chain_partner()) {
                    report.push(
                        format!("variants.{v}"),
                        format!("chainwise scope needs its partner {}", v.chain_partner()),
                    );
                }
            }
        }
        if let Some(t) = &template {
            if variants.iter().any(|v| v.definitions) {
                match t.definitions_for(&definition_roles(&corpus.taxonomy, corpus.has_roles)) {
                    Ok(d) => defs = Some(d),
                    Err(e) => report.push("template.definitions", e),
                }
            }
        }
    }

    let backend = match config.backend.build() {
        Ok(b) => {
            if !dry_run {
                if let Err(e) = b.probe() {
                    report.push(format!("backend {}", b.id()), e);
                }
            }
            Some(b)
        }
        Err(e) => {
            report.push("backend", e);
            None
        }
    };

    let prepared = match (report.is_ok(), corpus, template) {
        (true, Some(corpus), Some(template)) => Some(Prepared {
            corpus,
            prompts: PromptBuilder::new(template),
            defs,
            order,
            variants,
            backend,
        }),
        _ => None,
    };
    (prepared, report)
}

pub fn cmd_validate(config: &ExperimentConfig, dry_run: bool) -> ValidationReport {
    prepare(config, dry_run).1
}
