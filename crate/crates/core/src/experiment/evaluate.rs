use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use super::{write_file, ExperimentConfig, ExperimentError};
use crate::backend::GenerationParams;
use crate::cache::TranscriptStore;
use crate::chain::ChainTranscript;
use crate::corpus::load_corpus;
use crate::corpus::{reference_explanation, Corpus, Outcome};
use crate::metrics::{
    aggregate_runs, explanation_metrics, prediction_metrics, select_scope, AggregateReport,
    ConfusionCounts, EvaluationScope, ExplanationMetrics, MetricsReport, PairSimilarity, Summary,
    VerdictTable,
};
use crate::prompt::PromptVariant;
use crate::prompt::Template;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub variant: PromptVariant,
    pub scope: EvaluationScope,
    #[serde(flatten)]
    pub metrics: AggregateReport<f64>,
}

/// Canonical evaluation output: no timestamps or latencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub corpus: String,
    pub backend_id: String,
    pub template_hash: String,
    pub params: Option<GenerationParams>,
    pub variants: Vec<PromptVariant>,
    pub scopes: Vec<EvaluationScope>,
    pub rows: Vec<ResultsRow>,
}

impl ResultsFile {
    /// Pretty JSON with sorted keys.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("results serialize");
        let mut s = serde_json::to_string_pretty(&value).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text)
            .map_err(|e| ExperimentError::Config(format!("results file: {e}")))
    }

    pub fn row(&self, variant: PromptVariant, scope: EvaluationScope) -> Option<&ResultsRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.scope == scope)
    }
}

/// Restricts evaluation to transcripts from one backend/template.
#[derive(Debug, Clone, Default)]
pub struct EvalFilter {
    pub backend_id: Option<String>,
    pub template_hash: Option<String>,
}

impl EvalFilter {
    fn keeps(&self, t: &ChainTranscript) -> bool {
        self.backend_id.as_ref().is_none_or(|b| *b == t.backend_id)
            && self
                .template_hash
                .as_ref()
                .is_none_or(|h| *h == t.template_hash)
    }
}

fn single<'a>(
    values: impl Iterator<Item = &'a str>,
    what: &str,
) -> Result<String, ExperimentError> {
    let set: BTreeSet<&str> = values.collect();
    match set.len() {
        0 => Ok(String::new()),
        1 => Ok(set.into_iter().next().unwrap().to_string()),
        _ => Err(ExperimentError::Integrity(format!(
            "store mixes {} values of {what}: {set:?}; filter by backend/template",
            set.len()
        ))),
    }
}

/// Verdicts of one run, plus its transcripts by (variant, case).
type RunView<'a> = (
    VerdictTable,
    HashMap<(PromptVariant, &'a str), &'a ChainTranscript>,
);

/// Scores every variant present in `transcripts` under each scope.
pub fn evaluate(
    transcripts: &[ChainTranscript],
    gold: &Corpus,
    scopes: &[EvaluationScope],
    filter: &EvalFilter,
    similarity: Option<&dyn PairSimilarity>,
) -> Result<ResultsFile, ExperimentError> {
    let kept: Vec<&ChainTranscript> = transcripts.iter().filter(|t| filter.keeps(t)).collect();
    let backend_id = single(kept.iter().map(|t| t.backend_id.as_str()), "backend_id")?;
    let template_hash = single(
        kept.iter().map(|t| t.template_hash.as_str()),
        "template_hash",
    )?;
    let params = kept.first().map(|t| t.params);

    let gold_labels: HashMap<String, Outcome> = gold
        .cases
        .iter()
        .map(|c| (c.case_id.clone(), c.gold_verdict))
        .collect();
    let mut seen = HashSet::new();
    for t in &kept {
        if !gold_labels.contains_key(&t.case_id) {
            return Err(ExperimentError::Integrity(format!(
                "no gold label for case {}",
                t.case_id
            )));
        }
        if !seen.insert((t.case_id.as_str(), t.variant, t.run_index)) {
            return Err(ExperimentError::Integrity(format!(
                "duplicate transcript for {} / {} run {}",
                t.case_id, t.variant, t.run_index
            )));
        }
    }

    let references: HashMap<&str, String> = if gold.has_roles {
        gold.cases
            .iter()
            .filter_map(|c| {
                reference_explanation(c)
                    .ok()
                    .map(|r| (c.case_id.as_str(), r))
            })
            .collect()
    } else {
        HashMap::new()
    };

    let runs: BTreeSet<u32> = kept.iter().map(|t| t.run_index).collect();
    let variants: Vec<PromptVariant> = kept
        .iter()
        .map(|t| t.variant)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut scopes: Vec<EvaluationScope> = scopes.to_vec();
    scopes.sort();
    scopes.dedup();

    let per_run: BTreeMap<u32, RunView> = runs
        .iter()
        .map(|&r| {
            let in_run: Vec<&ChainTranscript> =
                kept.iter().copied().filter(|t| t.run_index == r).collect();
            let table = VerdictTable::from_transcripts(in_run.iter().copied());
            let lookup = in_run
                .iter()
                .map(|t| ((t.variant, t.case_id.as_str()), *t))
                .collect();
            (r, (table, lookup))
        })
        .collect();

    let mut rows = Vec::new();
    for &scope in &scopes {
        for &variant in &variants {
            let mut reports = Vec::with_capacity(per_run.len());
            for (table, lookup) in per_run.values() {
                let undecided = table
                    .verdicts(variant)
                    .map(|m| m.values().filter(|v| !v.is_decisive()).count())
                    .unwrap_or(0);
                let ids = if table.verdicts(variant).is_some() {
                    select_scope(table, scope, variant)?
                } else {
                    BTreeSet::new()
                };
                let mut counts = ConfusionCounts::default();
                let mut expl: Vec<ExplanationMetrics<f64>> = Vec::new();
                for id in &ids {
                    let t = lookup[&(variant, id.as_str())];
                    counts.record(t.verdict, gold_labels[id]);
                    if let Some(reference) = references.get(id.as_str()) {
                        expl.push(explanation_metrics(&t.explanation, reference, similarity)?);
                    }
                }
                let prediction = (counts.decided() > 0)
                    .then(|| prediction_metrics(&counts))
                    .transpose()?;
                let explanation = mean_explanation(&expl);
                reports.push(MetricsReport {
                    n_scored: counts.decided(),
                    undecided,
                    prediction,
                    explanation,
                    n_explained: expl.len(),
                });
            }
            rows.push(ResultsRow {
                variant,
                scope,
                metrics: aggregate_runs(&reports),
            });
        }
    }

    Ok(ResultsFile {
        corpus: gold.name.clone(),
        backend_id,
        template_hash,
        params,
        variants,
        scopes,
        rows,
    })
}

/// Loads the store and gold corpus named by `config`, evaluates, and writes
/// `results.json` plus an aligned `results.txt` next to it.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    store: Option<&Path>,
    scopes: Option<&[EvaluationScope]>,
) -> Result<(ResultsFile, PathBuf), ExperimentError> {
    let expected = config
        .taxonomy
        .expected()
        .map_err(ExperimentError::Config)?;
    let gold = load_corpus(&config.corpus, &expected)?;
    let store_path = store
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.store_path());
    let transcripts = TranscriptStore::new(&store_path).load()?;
    let template = match &config.template {
        None => Template::builtin(),
        Some(path) => Template::load(path).map_err(|e| ExperimentError::Config(e.to_string()))?,
    };
    let filter = EvalFilter {
        backend_id: Some(config.backend.backend_id()),
        template_hash: Some(template.hash()),
    };
    let results = evaluate(
        &transcripts,
        &gold,
        scopes.unwrap_or(&config.scopes),
        &filter,
        None,
    )?;
    let path = config.results_path();
    write_file(&path, &results.to_canonical_json())?;
    write_file(&path.with_extension("txt"), &render_results_table(&results))?;
    Ok((results, path))
}

/// Reads a results file and renders the comparison report.
pub fn cmd_report(results_path: &Path) -> Result<String, ExperimentError> {
    let text =
        std::fs::read_to_string(results_path).map_err(|e| ExperimentError::io(results_path, e))?;
    Ok(super::render_report(&ResultsFile::parse(&text)?))
}

fn mean_explanation(items: &[ExplanationMetrics<f64>]) -> Option<ExplanationMetrics<f64>> {
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    let mean = |f: fn(&ExplanationMetrics<f64>) -> f64| items.iter().map(f).sum::<f64>() / n;
    let externals: Vec<f64> = items.iter().filter_map(|e| e.external).collect();
    Some(ExplanationMetrics {
        rouge1_f: mean(|e| e.rouge1_f),
        rouge2_f: mean(|e| e.rouge2_f),
        meteor: mean(|e| e.meteor),
        external: (!externals.is_empty())
            .then(|| externals.iter().sum::<f64>() / externals.len() as f64),
    })
}

/// Fraction as a percentage with two decimals, rounding half to even.
pub fn format_pct(fraction: f64) -> String {
    let scaled = (fraction * 10_000.0).round_ties_even();
    let sign = if scaled < 0.0 { "-" } else { "" };
    let units = scaled.abs() as u64;
    format!("{sign}{}.{:02}", units / 100, units % 100)
}

/// `mean` or `mean ±std`; `-` when absent.
pub fn format_summary(s: &Summary<f64>) -> String {
    match (s.mean, s.std) {
        (None, _) => "-".to_string(),
        (Some(m), None) => format_pct(m),
        (Some(m), Some(sd)) => format!("{} ±{}", format_pct(m), format_pct(sd)),
    }
}

pub(crate) fn format_n(row: &ResultsRow) -> String {
    let range = |v: &[usize]| match (v.iter().min(), v.iter().max()) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        (Some(a), Some(b)) => format!("{a}-{b}"),
        _ => "0".to_string(),
    };
    format!(
        "{} (u={})",
        range(&row.metrics.n_scored),
        range(&row.metrics.undecided)
    )
}

pub(crate) type MetricGetter = fn(&AggregateReport<f64>) -> &Summary<f64>;

/// Metric rows of the text table in display order.
pub(crate) const TABLE_METRICS: [(&str, MetricGetter, bool); 6] = [
    ("FPR", |m| &m.fpr, false),
    ("FNR", |m| &m.fnr, false),
    ("F1", |m| &m.macro_f1, true),
    ("R1", |m| &m.rouge1, true),
    ("R2", |m| &m.rouge2, true),
    ("METEOR", |m| &m.meteor, true),
];

pub(crate) fn align_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(i, cell)| {
                    if i == 0 {
                        format!("{cell:<w$}", w = widths[i])
                    } else {
                        format!("{cell:>w$}", w = widths[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// One aligned block per scope; variants as columns in canonical order.
pub fn render_results_table(results: &ResultsFile) -> String {
    let mut out = Vec::new();
    for &scope in &results.scopes {
        let mut rows = vec![std::iter::once(format!("[{scope}]"))
            .chain(results.variants.iter().map(|v| v.name()))
            .collect::<Vec<_>>()];
        let cells = |f: &dyn Fn(&ResultsRow) -> String| -> Vec<String> {
            results
                .variants
                .iter()
                .map(|&v| results.row(v, scope).map(f).unwrap_or_else(|| "-".into()))
                .collect()
        };
        rows.push(
            std::iter::once("n".to_string())
                .chain(cells(&format_n))
                .collect(),
        );
        for (label, get, _) in TABLE_METRICS {
            rows.push(
                std::iter::once(label.to_string())
                    .chain(cells(&|r: &ResultsRow| format_summary(get(&r.metrics))))
                    .collect(),
            );
        }
        out.push(align_table(&rows));
    }
    let mut s = out.join("\n\n");
    s.push('\n');
    s
}
