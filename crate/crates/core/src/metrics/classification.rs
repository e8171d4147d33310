use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ratio_or_zero, MetricsError, Scalar};
use crate::chain::Verdict;
use crate::corpus::Outcome;

/// Binary confusion counts; the positive class is "plaintiff favored".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub undecided: usize,
}

impl ConfusionCounts {
    pub fn decided(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn total(&self) -> usize {
        self.decided() + self.undecided
    }

    pub fn record(&mut self, verdict: Verdict, gold: Outcome) {
        match (verdict, gold) {
            (Verdict::Yes, Outcome::Favored) => self.tp += 1,
            (Verdict::Yes, Outcome::NotFavored) => self.fp += 1,
            (Verdict::No, Outcome::NotFavored) => self.tn += 1,
            (Verdict::No, Outcome::Favored) => self.fn_ += 1,
            (Verdict::Undecided, _) => self.undecided += 1,
        }
    }
}

pub fn confusion<'a, I>(
    preds: I,
    gold: &HashMap<String, Outcome>,
) -> Result<ConfusionCounts, MetricsError>
where
    I: IntoIterator<Item = (&'a str, Verdict)>,
{
    let mut c = ConfusionCounts::default();
    for (case_id, verdict) in preds {
        let g = gold
            .get(case_id)
            .ok_or_else(|| MetricsError::UnknownCase(case_id.to_string()))?;
        c.record(verdict, *g);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics<T> {
    pub macro_f1: T,
    /// `None` when no gold-negative case was decided.
    pub fpr: Option<T>,
    /// `None` when no gold-positive case was decided.
    pub fnr: Option<T>,
    pub n_scored: usize,
}

fn f1_of<T: Scalar>(tp: usize, fp: usize, fn_: usize) -> T {
    ratio_or_zero(2 * tp, 2 * tp + fp + fn_)
}

pub fn prediction_metrics<T: Scalar>(
    c: &ConfusionCounts,
) -> Result<PredictionMetrics<T>, MetricsError> {
    if c.decided() == 0 {
        return Err(MetricsError::NoDecisions);
    }
    let f1_yes: T = f1_of(c.tp, c.fp, c.fn_);
    let f1_no: T = f1_of(c.tn, c.fn_, c.fp);
    let two = T::one() + T::one();
    let rate = |num: usize, den: usize| (den > 0).then(|| T::from_count(num) / T::from_count(den));
    Ok(PredictionMetrics {
        macro_f1: (f1_yes + f1_no) / two,
        fpr: rate(c.fp, c.fp + c.tn),
        fnr: rate(c.fn_, c.fn_ + c.tp),
        n_scored: c.decided(),
    })
}
