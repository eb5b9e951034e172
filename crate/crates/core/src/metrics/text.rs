use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Longest common subsequence length, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over whitespace tokens, scaled to `[0, 100]`.
pub fn rouge_l(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    let l = lcs_len(&r, &h) as f64;
    let precision = if h.is_empty() { 0.0 } else { l / h.len() as f64 };
    let recall = if r.is_empty() { 0.0 } else { l / r.len() as f64 };
    if precision + recall == 0.0 {
        return 0.0;
    }
    100.0 * 2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextMetrics {
    pub rouge_l_f1: f64,
    pub identical: bool,
}

/// Compares a round's code against the previous round's (both canonical).
pub fn text_metrics(previous: &str, next: &str) -> TextMetrics {
    let identical = previous == next;
    // Identical empty strings have no tokens, but are still a perfect echo.
    let rouge_l_f1 = if identical { 100.0 } else { rouge_l(previous, next) };
    TextMetrics { rouge_l_f1, identical }
}

/// Percentage of pairs whose canonical code is unchanged.
pub fn identical_rate<A: AsRef<str>, B: AsRef<str>>(pairs: &[(A, B)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::NoPairs);
    }
    let same = pairs.iter().filter(|(a, b)| a.as_ref() == b.as_ref()).count();
    Ok(100.0 * same as f64 / pairs.len() as f64)
}
