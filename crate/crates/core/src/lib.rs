//! Structured-prompting harness for legal judgment prediction.
//!
//! Judgments arrive sentence-segmented and tagged with rhetorical roles. The
//! harness regroups them into role-headed paragraphs, optionally prefixes role
//! definitions, runs the ANALYSIS → RATIO → RPC reasoning chain (or a single
//! ANALYSIS step) against a text-generation backend, asks a YES/NO verdict
//! follow-up, and scores verdicts and explanations.

pub mod backend;
pub mod cache;
pub mod chain;
pub mod corpus;
pub mod experiment;
mod hash;
pub mod matrix;
pub mod metrics;
pub mod prompt;
pub mod restructure;

pub use hash::sha256_hex;

/// Exact arithmetic for metric oracles.
pub type Rational = num_rational::Ratio<i64>;

pub type PredictionMetricsF64 = metrics::PredictionMetrics<f64>;
pub type PredictionMetricsExact = metrics::PredictionMetrics<Rational>;
pub type RougeScoreF64 = metrics::RougeScore<f64>;
pub type RougeScoreExact = metrics::RougeScore<Rational>;
pub type ExplanationMetricsF64 = metrics::ExplanationMetrics<f64>;
pub type MetricsReportF64 = metrics::MetricsReport<f64>;
pub type AggregateReportF64 = metrics::AggregateReport<f64>;
