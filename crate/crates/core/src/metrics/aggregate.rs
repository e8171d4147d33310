use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{ExplanationMetrics, PredictionMetrics};

/// Scores of one variant, scope and run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub n_scored: usize,
    pub undecided: usize,
    pub prediction: Option<PredictionMetrics<T>>,
    /// Mean explanation scores over the scored cases that have a reference.
    pub explanation: Option<ExplanationMetrics<T>>,
    pub n_explained: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub mean: Option<T>,
    /// Sample standard deviation; absent for fewer than two values.
    pub std: Option<T>,
    pub n: usize,
}

pub fn summarize<T: Float>(values: impl IntoIterator<Item = T>) -> Summary<T> {
    let values: Vec<T> = values.into_iter().collect();
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: None,
            std: None,
            n,
        };
    }
    let count = T::from(n).expect("count fits");
    let mean = values.iter().fold(T::zero(), |a, &b| a + b) / count;
    let std = (n > 1).then(|| {
        let ss = values
            .iter()
            .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
        (ss / (count - T::one())).sqrt()
    });
    Summary {
        mean: Some(mean),
        std,
        n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport<T> {
    pub runs: usize,
    pub n_scored: Vec<usize>,
    pub undecided: Vec<usize>,
    pub macro_f1: Summary<T>,
    pub fpr: Summary<T>,
    pub fnr: Summary<T>,
    pub rouge1: Summary<T>,
    pub rouge2: Summary<T>,
    pub meteor: Summary<T>,
}

/// Mean and sample std per field across runs. Runs where a field is absent
/// do not contribute to that field.
pub fn aggregate_runs<T: Float>(per_run: &[MetricsReport<T>]) -> AggregateReport<T> {
    let pred = |f: fn(&PredictionMetrics<T>) -> Option<T>| {
        summarize(
            per_run
                .iter()
                .filter_map(|r| r.prediction.as_ref().and_then(f)),
        )
    };
    let expl = |f: fn(&ExplanationMetrics<T>) -> T| {
        summarize(per_run.iter().filter_map(|r| r.explanation.as_ref().map(f)))
    };
    AggregateReport {
        runs: per_run.len(),
        n_scored: per_run.iter().map(|r| r.n_scored).collect(),
        undecided: per_run.iter().map(|r| r.undecided).collect(),
        macro_f1: pred(|p| Some(p.macro_f1)),
        fpr: pred(|p| p.fpr),
        fnr: pred(|p| p.fnr),
        rouge1: expl(|e| e.rouge1_f),
        rouge2: expl(|e| e.rouge2_f),
        meteor: expl(|e| e.meteor),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_examples() {
        let s = summarize([0.6, 0.6, 0.6]);
        assert!((s.mean.unwrap() - 0.6).abs() < 1e-15);
        assert!(s.std.unwrap().abs() < 1e-15);

        let s = summarize([0.5f64, 0.7]);
        assert!((s.mean.unwrap() - 0.6).abs() < 1e-15);
        assert!((s.std.unwrap() - 0.141421356237).abs() < 1e-9);

        let s = summarize([0.4f32]);
        assert_eq!((s.mean, s.std), (Some(0.4), None));

        let s = summarize(Vec::<f64>::new());
        assert_eq!((s.mean, s.std, s.n), (None, None, 0));
    }

    #[test]
    fn aggregate_skips_absent_fields() {
        let report = |f1: f64, fnr: Option<f64>| MetricsReport {
            n_scored: 4,
            undecided: 0,
            prediction: Some(PredictionMetrics {
                macro_f1: f1,
                fpr: Some(0.0),
                fnr,
                n_scored: 4,
            }),
            explanation: None,
            n_explained: 0,
        };
        let agg = aggregate_runs(&[report(0.5, Some(0.25)), report(0.7, None)]);
        assert_eq!(agg.runs, 2);
        assert_eq!(agg.macro_f1.n, 2);
        assert_eq!(agg.fnr.n, 1);
        assert_eq!(agg.fnr.std, None);
        assert_eq!(agg.rouge1.mean, None);
    }
}
