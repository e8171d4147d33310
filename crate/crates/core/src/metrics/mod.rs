//! Prediction and explanation metrics, evaluation scopes and run aggregation.
//!
//! Everything except aggregation is generic over [`Scalar`], so the same code
//! runs in `f64` and in exact rational arithmetic.

mod aggregate;
mod classification;
mod scope;
mod text;

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num};
use thiserror::Error;

pub use aggregate::{aggregate_runs, summarize, AggregateReport, MetricsReport, Summary};
pub use classification::{confusion, prediction_metrics, ConfusionCounts, PredictionMetrics};
pub use scope::{select_scope, EvaluationScope, VerdictTable};
pub use text::{
    explanation_metrics, meteor, rouge_n, tokenize, ExplanationMetrics, PairSimilarity, RougeScore,
};

/// Numeric type metrics are computed in.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + Debug {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T: Num + Copy + PartialOrd + FromPrimitive + Debug> Scalar for T {}

/// `num / den`, or zero when `den == 0`.
pub(crate) fn ratio_or_zero<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction for unknown case \"{0}\"")]
    UnknownCase(String),
    #[error("no decisive predictions to score")]
    NoDecisions,
    #[error("reference text has no tokens")]
    EmptyReference,
    #[error("scope configuration: {0}")]
    Scope(String),
}
