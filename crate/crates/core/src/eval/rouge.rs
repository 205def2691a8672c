//! ROUGE-N and ROUGE-L.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Length cap of the limited-length evaluation mode.
pub const TRUNCATION_TOKENS: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeMode {
    #[default]
    Recall,
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore<T> {
    pub rouge1: T,
    pub rouge2: T,
    pub rouge_l: T,
    pub mode: RougeMode,
    pub truncation: Option<usize>,
}

fn truncate<S>(candidate: &[S], truncation: Option<usize>) -> &[S] {
    match truncation {
        Some(limit) if candidate.len() > limit => &candidate[..limit],
        _ => candidate,
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

fn check_refs<S>(references: &[Vec<S>]) -> Result<()> {
    if references.is_empty() {
        Err(Error::validation("ROUGE needs at least one reference"))
    } else {
        Ok(())
    }
}

/// Clipped matches and totals summed over references.
fn ngram_overlap<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], n: usize) -> (usize, usize, usize) {
    let cand = ngram_counts(candidate, n);
    let cand_total: usize = cand.values().sum();
    let (mut matched, mut total) = (0, 0);
    for r in references {
        for (gram, count) in ngram_counts(r, n) {
            total += count;
            matched += count.min(cand.get(&gram).copied().unwrap_or(0));
        }
    }
    (matched, total, cand_total)
}

/// Recall-oriented ROUGE-N: clipped matches over reference n-grams, both
/// summed across references.
pub fn rouge_n<T: Scalar, S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    n: usize,
    truncation: Option<usize>,
) -> Result<T> {
    rouge_n_mode(candidate, references, n, truncation, RougeMode::Recall)
}

pub fn rouge_n_mode<T: Scalar, S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    n: usize,
    truncation: Option<usize>,
    mode: RougeMode,
) -> Result<T> {
    if n == 0 {
        return Err(Error::validation("n-gram order must be at least 1"));
    }
    check_refs(references)?;
    let candidate = truncate(candidate, truncation);
    let (matched, total, cand_total) = ngram_overlap(candidate, references, n);
    let recall = ratio::<T>(matched, total);
    Ok(match mode {
        RougeMode::Recall => recall,
        RougeMode::F1 => {
            let precision = ratio::<T>(matched, cand_total * references.len());
            f1(precision, recall)
        }
    })
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::of_usize(num) / T::of_usize(den)
    }
}

fn f1<T: Scalar>(p: T, r: T) -> T {
    if p + r == T::zero() {
        T::zero()
    } else {
        T::of(2.0) * p * r / (p + r)
    }
}

/// Length of the longest common subsequence.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS recall against each reference, best reference wins.
pub fn rouge_l<T: Scalar, S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], truncation: Option<usize>) -> Result<T> {
    rouge_l_mode(candidate, references, truncation, RougeMode::Recall)
}

pub fn rouge_l_mode<T: Scalar, S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    truncation: Option<usize>,
    mode: RougeMode,
) -> Result<T> {
    check_refs(references)?;
    let candidate = truncate(candidate, truncation);
    Ok(references
        .iter()
        .map(|r| {
            let l = lcs_len(candidate, r);
            let recall = ratio::<T>(l, r.len());
            match mode {
                RougeMode::Recall => recall,
                RougeMode::F1 => f1(ratio::<T>(l, candidate.len()), recall),
            }
        })
        .fold(T::zero(), T::max))
}

pub fn rouge_scores<T: Scalar, S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    truncation: Option<usize>,
    mode: RougeMode,
) -> Result<RougeScore<T>> {
    Ok(RougeScore {
        rouge1: rouge_n_mode(candidate, references, 1, truncation, mode)?,
        rouge2: rouge_n_mode(candidate, references, 2, truncation, mode)?,
        rouge_l: rouge_l_mode(candidate, references, truncation, mode)?,
        mode,
        truncation,
    })
}
