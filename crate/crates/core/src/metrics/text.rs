//! ROUGE-N and METEOR over a shared tokenizer.
//!
//! Tokenizer: lowercase, then split on every non-alphanumeric character and
//! drop empty pieces. METEOR matches exact tokens first, then Porter stems of
//! the tokens still unmatched; each stage scans candidate tokens left to right
//! and takes the leftmost free reference token. No synonym stage.

use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::{ratio_or_zero, MetricsError, Scalar};

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn harmonic<T: Scalar>(p: T, r: T) -> T {
    if p + r == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * p * r / (p + r)
    }
}

/// ROUGE-N with clipped n-gram overlap. A reference shorter than `n` tokens
/// has no n-grams and scores zero.
pub fn rouge_n<T: Scalar>(
    candidate: &str,
    reference: &str,
    n: usize,
) -> Result<RougeScore<T>, MetricsError> {
    let ref_tokens = tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let cand_tokens = tokenize(candidate);
    let ref_counts = ngram_counts(&ref_tokens, n);
    let cand_counts = ngram_counts(&cand_tokens, n);
    let overlap: usize = cand_counts
        .iter()
        .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    let ref_total: usize = ref_counts.values().sum();
    let cand_total: usize = cand_counts.values().sum();
    let precision = ratio_or_zero(overlap, cand_total);
    let recall = ratio_or_zero(overlap, ref_total);
    Ok(RougeScore {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

/// Alignment as (candidate index, reference index), sorted by candidate index.
fn align(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; reference.len()];
    let mut cand_match: Vec<Option<usize>> = vec![None; cand.len()];

    for (i, tok) in cand.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && reference[j] == *tok) {
            ref_used[j] = true;
            cand_match[i] = Some(j);
        }
    }

    let stemmer = Stemmer::create(Algorithm::English);
    let ref_stems: Vec<String> = reference
        .iter()
        .map(|t| stemmer.stem(t).into_owned())
        .collect();
    for (i, tok) in cand.iter().enumerate() {
        if cand_match[i].is_some() {
            continue;
        }
        let stem = stemmer.stem(tok);
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && ref_stems[j] == stem) {
            ref_used[j] = true;
            cand_match[i] = Some(j);
        }
    }

    cand_match
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}

fn count_chunks(matches: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in matches {
        match prev {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((i, j));
    }
    chunks
}

/// METEOR with `Fmean = 10PR / (R + 9P)` and fragmentation penalty
/// `0.5 * (chunks / matches)^3`.
pub fn meteor<T: Scalar>(candidate: &str, reference: &str) -> Result<T, MetricsError> {
    let ref_tokens = tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let cand_tokens = tokenize(candidate);
    let matches = align(&cand_tokens, &ref_tokens);
    let m = matches.len();
    if m == 0 {
        return Ok(T::zero());
    }
    let p: T = ratio_or_zero(m, cand_tokens.len());
    let r: T = ratio_or_zero(m, ref_tokens.len());
    let nine = T::from_count(9);
    let ten = T::from_count(10);
    let fmean = ten * p * r / (r + nine * p);
    let frag: T = ratio_or_zero(count_chunks(&matches), m);
    let half = T::one() / (T::one() + T::one());
    let penalty = half * frag * frag * frag;
    Ok(fmean * (T::one() - penalty))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMetrics<T> {
    pub rouge1_f: T,
    pub rouge2_f: T,
    pub meteor: T,
    /// Score from an externally supplied similarity model, when configured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<T>,
}

/// Extension point for model-based similarity (e.g. embedding scores).
pub trait PairSimilarity: Sync {
    fn score(&self, candidate: &str, reference: &str) -> Option<f64>;
}

pub fn explanation_metrics<T: Scalar>(
    candidate: &str,
    reference: &str,
    external: Option<&dyn PairSimilarity>,
) -> Result<ExplanationMetrics<T>, MetricsError> {
    Ok(ExplanationMetrics {
        rouge1_f: rouge_n::<T>(candidate, reference, 1)?.f1,
        rouge2_f: rouge_n::<T>(candidate, reference, 2)?.f1,
        meteor: meteor(candidate, reference)?,
        external: external
            .and_then(|s| s.score(candidate, reference))
            .and_then(T::from_f64),
    })
}
