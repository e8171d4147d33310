use super::evaluate::{
    align_table, format_n, format_pct, format_summary, MetricGetter, ResultsFile, ResultsRow,
    TABLE_METRICS,
};
use crate::metrics::EvaluationScope;

/// Side-by-side comparison per scope. The best cell of each metric row is
/// marked with `*` (lowest for FPR/FNR, highest otherwise); the chainwise
/// section adds one delta row per chained/non-chained pair.
pub fn render_report(results: &ResultsFile) -> String {
    let mut sections = vec![format!(
        "corpus: {}\nbackend: {}\ntemplate: {}",
        results.corpus, results.backend_id, results.template_hash
    )];

    for &scope in &results.scopes {
        let present: Vec<&ResultsRow> = results
            .variants
            .iter()
            .filter_map(|&v| results.row(v, scope))
            .collect();
        let mut rows = vec![std::iter::once(format!("[{scope}]"))
            .chain(present.iter().map(|r| r.variant.name()))
            .collect::<Vec<_>>()];
        rows.push(
            std::iter::once("n".to_string())
                .chain(present.iter().map(|r| format_n(r)))
                .collect(),
        );
        for (label, get, higher_is_better) in TABLE_METRICS {
            let means: Vec<Option<f64>> = present.iter().map(|r| get(&r.metrics).mean).collect();
            let best = means.iter().flatten().copied().reduce(|a, b| {
                if higher_is_better {
                    a.max(b)
                } else {
                    a.min(b)
                }
            });
            let mark = present.len() > 1;
            let cells = present.iter().zip(&means).map(|(r, m)| {
                let text = format_summary(get(&r.metrics));
                match (m, best) {
                    (Some(x), Some(b)) if mark && *x == b => format!("{text}*"),
                    _ => text,
                }
            });
            rows.push(std::iter::once(label.to_string()).chain(cells).collect());
        }
        let mut section = align_table(&rows);

        if scope == EvaluationScope::Chainwise {
            let mut deltas = vec![vec![
                "chained vs plain".to_string(),
                "dF1".to_string(),
                "dFPR".to_string(),
                "dFNR".to_string(),
                "n".to_string(),
            ]];
            for chained in present.iter().filter(|r| r.variant.chain) {
                let Some(plain) = results.row(chained.variant.chain_partner(), scope) else {
                    continue;
                };
                let delta = |get: MetricGetter| match (
                    get(&chained.metrics).mean,
                    get(&plain.metrics).mean,
                ) {
                    (Some(a), Some(b)) => {
                        let d = a - b;
                        let sign = if d > 0.0 { "+" } else { "" };
                        format!("{sign}{}", format_pct(d))
                    }
                    _ => "-".to_string(),
                };
                deltas.push(vec![
                    format!("{} vs {}", chained.variant, plain.variant),
                    delta(|m| &m.macro_f1),
                    delta(|m| &m.fpr),
                    delta(|m| &m.fnr),
                    format_n(chained),
                ]);
            }
            if deltas.len() > 1 {
                section.push_str("\n\n");
                section.push_str(&align_table(&deltas));
            }
        }
        sections.push(section);
    }
    let mut out = sections.join("\n\n");
    out.push('\n');
    out
}
