//! Evaluation arithmetic: the unbiased pass@k estimator, P/FE/SE
//! tabulation over run manifests, and BLEU for schema-constrained
//! comprehension outputs.

use crate::orchestrator::{ManifestRun, RunStatus};
use crate::validation::OutcomeClass;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("pass@k domain violation: n={n}, c={c}, k={k}")]
    DomainError { n: u64, c: u64, k: u64 },
}

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k.min(n - k) {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// Unbiased pass@k estimate from n samples with c successes:
/// 1 − C(n−c, k) / C(n, k), evaluated as an exact rational and then
/// converted to a float.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if c > n || k < 1 || k > n {
        return Err(MetricsError::DomainError { n, c, k });
    }
    let ratio = BigRational::new(binomial(n - c, k), binomial(n, k));
    let value = (BigRational::one() - ratio).to_f64().unwrap_or(0.0);
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTally {
    pub category: String,
    pub p: u32,
    pub fe: u32,
    pub se: u32,
}

impl OutcomeTally {
    pub fn total(&self) -> u32 {
        self.p + self.fe + self.se
    }
}

/// Per-category P/FE/SE counts over each task's first replicate, categories
/// sorted lexicographically. Backend failures count as SE via the terminal
/// classification.
pub fn tabulate_outcomes(runs: &[ManifestRun]) -> Vec<OutcomeTally> {
    let mut firsts: BTreeMap<&str, &ManifestRun> = BTreeMap::new();
    for run in runs {
        firsts
            .entry(run.task_id.as_str())
            .and_modify(|existing| {
                if run.replicate < existing.replicate {
                    *existing = run;
                }
            })
            .or_insert(run);
    }
    let mut tallies: BTreeMap<&str, OutcomeTally> = BTreeMap::new();
    for run in firsts.values() {
        let tally = tallies.entry(run.category.as_str()).or_insert_with(|| OutcomeTally {
            category: run.category.clone(),
            p: 0,
            fe: 0,
            se: 0,
        });
        match run.terminal_class() {
            OutcomeClass::P => tally.p += 1,
            OutcomeClass::FE => tally.fe += 1,
            OutcomeClass::SE => tally.se += 1,
        }
    }
    tallies.into_values().collect()
}

/// Per-category mean pass@1 over tasks, from all replicates of each task.
pub fn pass_at_1_by_category(runs: &[ManifestRun]) -> Vec<(String, f64)> {
    let mut per_task: BTreeMap<&str, (&str, u64, u64)> = BTreeMap::new();
    for run in runs {
        let entry = per_task
            .entry(run.task_id.as_str())
            .or_insert((run.category.as_str(), 0, 0));
        entry.1 += 1;
        if run.status == RunStatus::Passed {
            entry.2 += 1;
        }
    }
    let mut per_category: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for (category, n, c) in per_task.values() {
        let value = pass_at_k(*n, *c, 1).unwrap_or(0.0);
        let entry = per_category.entry(category).or_insert((0.0, 0));
        entry.0 += value;
        entry.1 += 1;
    }
    per_category
        .into_iter()
        .map(|(category, (sum, count))| (category.to_string(), sum / count as f64))
        .collect()
}

const BLEU_MAX_N: usize = 4;

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> BTreeMap<Vec<&'a str>, u64> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-4 on whitespace tokens: modified n-gram precisions with add-one
/// smoothing on zero precisions for n ≥ 2, geometric mean, and the standard
/// brevity penalty against the closest reference length.
pub fn bleu(candidate: &str, references: &[String]) -> f64 {
    let cand_tokens: Vec<&str> = candidate.split_whitespace().collect();
    if cand_tokens.is_empty() || references.is_empty() {
        return 0.0;
    }
    let ref_tokens: Vec<Vec<&str>> = references
        .iter()
        .map(|r| r.split_whitespace().collect())
        .collect();

    let mut log_sum = 0.0_f64;
    for n in 1..=BLEU_MAX_N {
        let cand_counts = ngram_counts(&cand_tokens, n);
        let denominator: u64 = cand_counts.values().sum();
        let mut numerator = 0u64;
        for (gram, count) in &cand_counts {
            let max_ref = ref_tokens
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            numerator += (*count).min(max_ref);
        }
        let precision = if numerator > 0 {
            numerator as f64 / denominator as f64
        } else if n >= 2 {
            // Add-one smoothing keeps the geometric mean finite.
            (numerator + 1) as f64 / (denominator + 1) as f64
        } else {
            return 0.0;
        };
        log_sum += precision.ln();
    }
    let geo_mean = (log_sum / BLEU_MAX_N as f64).exp();

    let c = cand_tokens.len() as f64;
    let r = ref_tokens
        .iter()
        .map(|r| r.len())
        .min_by_key(|len| {
            let diff = (*len as i64 - cand_tokens.len() as i64).abs();
            (diff, *len)
        })
        .unwrap_or(0) as f64;
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    geo_mean * brevity
}
