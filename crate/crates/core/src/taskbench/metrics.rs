//! Task metrics. Predictions are `Option<usize>`; `None` marks a malformed
//! generation, which never matches any label.

use crate::error::{Result, WeeError};

fn check_lengths(preds: usize, labels: usize) -> Result<()> {
    if preds != labels || preds == 0 {
        return Err(WeeError::InvalidInput(format!(
            "{preds} predictions for {labels} labels"
        )));
    }
    Ok(())
}

/// Unweighted mean over classes of `2PR/(P+R)`; a class with `P+R = 0`
/// scores 0.
pub fn macro_f1(preds: &[Option<usize>], labels: &[usize], num_classes: usize) -> Result<f64> {
    check_lengths(preds.len(), labels.len())?;
    if num_classes == 0 {
        return Err(WeeError::InvalidInput("zero classes".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut label_count = vec![0usize; num_classes];
    for (p, &l) in preds.iter().zip(labels) {
        if l >= num_classes {
            return Err(WeeError::InvalidInput(format!("label {l} >= {num_classes}")));
        }
        label_count[l] += 1;
        if let Some(p) = *p {
            if p >= num_classes {
                return Err(WeeError::InvalidInput(format!(
                    "prediction {p} >= {num_classes}"
                )));
            }
            pred_count[p] += 1;
            if p == l {
                tp[p] += 1;
            }
        }
    }
    let f1_sum: f64 = (0..num_classes)
        .map(|c| {
            let precision = if pred_count[c] > 0 {
                tp[c] as f64 / pred_count[c] as f64
            } else {
                0.0
            };
            let recall = if label_count[c] > 0 {
                tp[c] as f64 / label_count[c] as f64
            } else {
                0.0
            };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Ok(f1_sum / num_classes as f64)
}

pub fn accuracy(preds: &[Option<usize>], labels: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| **p == Some(**l))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Share of positives among the `k` highest scores; equal scores rank the
/// lower index first.
pub fn precision_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(WeeError::Config("k must be positive".into()));
    }
    check_lengths(scores.len(), labels.len())?;
    if k > scores.len() {
        return Err(WeeError::Config(format!(
            "k = {k} exceeds {} items",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps index order among ties
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let hits = order[..k].iter().filter(|&&i| labels[i]).count();
    Ok(hits as f64 / k as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-score with β = 1. An empty candidate or a zero LCS scores 0.
pub fn rouge_l(candidate: &[usize], reference: &[usize]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}
