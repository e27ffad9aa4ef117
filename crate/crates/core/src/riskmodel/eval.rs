use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Step-wise average precision over the PR curve.
    pub pr_auc: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Seed of the train/test split the scores came from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    /// `[recall, precision]` at every distinct score, thresholds descending.
    pub pr_curve: Vec<[f64; 2]>,
}

fn class_counts(scores: &[(f64, u8)]) -> Result<(usize, usize)> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let pos = scores.iter().filter(|(_, y)| *y == 1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// PR points at every distinct score threshold, highest threshold first.
pub fn pr_curve(scores: &[(f64, u8)]) -> Result<Vec<[f64; 2]>> {
    let (pos, _) = class_counts(scores)?;
    let mut sorted: Vec<(f64, u8)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push([tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64]);
    }
    Ok(curve)
}

/// `Σ (Rᵢ − Rᵢ₋₁)·Pᵢ` with `R₀ = 0`.
pub fn average_precision(scores: &[(f64, u8)]) -> Result<f64> {
    let curve = pr_curve(scores)?;
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for [r, p] in curve {
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    Ok(ap)
}

/// Precision, recall and F1 at `threshold` (score ≥ threshold is positive),
/// plus the PR curve and average precision.
pub fn evaluate(scores: &[(f64, u8)], threshold: f64) -> Result<EvalReport> {
    let (positives, negatives) = class_counts(scores)?;
    let tp = scores.iter().filter(|(s, y)| *s >= threshold && *y == 1).count();
    let fp = scores.iter().filter(|(s, y)| *s >= threshold && *y == 0).count();
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / positives as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        threshold,
        precision,
        recall,
        f1,
        pr_auc: average_precision(scores)?,
        positives,
        negatives,
        split_seed: None,
        pr_curve: pr_curve(scores)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let s = [(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)];
        let r = evaluate(&s, 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.pr_auc), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_counted_example() {
        let s = [(1.0, 1), (0.0, 0), (1.0, 1), (0.4, 0)];
        let r = evaluate(&s, 0.5).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
    }

    #[test]
    fn no_predicted_positives_has_unit_precision() {
        let s = [(0.3, 1), (0.1, 0)];
        let r = evaluate(&s, 0.9).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn ties_form_one_point() {
        // one threshold at 0.5 covering all four rows
        let s = [(0.5, 1), (0.5, 0), (0.5, 1), (0.5, 0)];
        assert_eq!(pr_curve(&s).unwrap(), vec![[1.0, 0.5]]);
        assert_eq!(average_precision(&s).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(evaluate(&[(0.2, 1), (0.9, 1)], 0.5), Err(Error::SingleClass)));
        assert!(matches!(evaluate(&[(0.2, 0)], 0.5), Err(Error::SingleClass)));
    }

    #[test]
    fn known_average_precision() {
        // ranks: + - + -  => P@1 = 1, P@3 = 2/3 ; AP = 0.5*1 + 0.5*2/3
        let s = [(0.9, 1), (0.8, 0), (0.7, 1), (0.6, 0)];
        let ap = average_precision(&s).unwrap();
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }
}
