use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::DataArray;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("mask shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("score matrix is ragged: row {row} has {len} cases, expected {expected}")]
    RaggedMatrix { row: usize, len: usize, expected: usize },
    #[error("score matrix is empty")]
    EmptyMatrix,
    #[error("score at model {model}, case {case} is not finite")]
    NonFinite { model: usize, case: usize },
}

/// Fraction of items whose truth is among the first `k` predicted labels.
/// Zero items give 0.0.
pub fn top_k_accuracy<S: AsRef<str>>(predictions: &[Vec<S>], truths: &[S], k: usize) -> Result<f64, MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if truths.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.iter().take(k).any(|l| l.as_ref() == t.as_ref()))
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

fn same_shape(a: &DataArray, b: &DataArray) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch { a: a.shape().to_vec(), b: b.shape().to_vec() });
    }
    Ok(())
}

fn dice_of(a: impl Iterator<Item = bool>, b: impl Iterator<Item = bool>) -> f64 {
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (x, y) in a.zip(b) {
        na += u64::from(x);
        nb += u64::from(y);
        inter += u64::from(x && y);
    }
    if na + nb == 0 {
        return 1.0;
    }
    2.0 * inter as f64 / (na + nb) as f64
}

/// `2|A∩B| / (|A|+|B|)` with any nonzero element counted as foreground.
/// Two empty masks score 1.0.
pub fn dice(a: &DataArray, b: &DataArray) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let n = a.len();
    Ok(dice_of((0..n).map(|i| a.get_f64(i) != 0.0), (0..n).map(|i| b.get_f64(i) != 0.0)))
}

/// Mean per-label Dice over every nonzero label present in either mask.
pub fn macro_dice(a: &DataArray, b: &DataArray) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let n = a.len();
    let labels: BTreeSet<i64> = (0..n)
        .flat_map(|i| [a.get_f64(i) as i64, b.get_f64(i) as i64])
        .filter(|&l| l != 0)
        .collect();
    if labels.is_empty() {
        return Ok(1.0);
    }
    let total: f64 = labels
        .iter()
        .map(|&l| dice_of((0..n).map(|i| a.get_f64(i) as i64 == l), (0..n).map(|i| b.get_f64(i) as i64 == l)))
        .sum();
    Ok(total / labels.len() as f64)
}

/// True when some element is neither 0 nor the single shared foreground value.
pub fn is_multilabel(mask: &DataArray) -> bool {
    let mut seen = None;
    for i in 0..mask.len() {
        let v = mask.get_f64(i);
        if v == 0.0 {
            continue;
        }
        match seen {
            None => seen = Some(v),
            Some(s) if s != v => return true,
            _ => {}
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRank {
    /// Row index in the score matrix.
    pub model: usize,
    pub mean_rank: f64,
}

/// Mean per-case rank for each model (rows), sorted ascending; rank 1 is best.
/// Ties share the mean of the tied positions.
pub fn rank_models(scores: &[Vec<f64>], higher_is_better: bool) -> Result<Vec<ModelRank>, MetricError> {
    let m = scores.len();
    let cases = scores.first().map(Vec::len).ok_or(MetricError::EmptyMatrix)?;
    for (row, s) in scores.iter().enumerate() {
        if s.len() != cases {
            return Err(MetricError::RaggedMatrix { row, len: s.len(), expected: cases });
        }
        if let Some(case) = s.iter().position(|x| !x.is_finite()) {
            return Err(MetricError::NonFinite { model: row, case });
        }
    }
    if cases == 0 {
        return Err(MetricError::EmptyMatrix);
    }
    let mut totals = vec![0.0f64; m];
    let mut order: Vec<usize> = (0..m).collect();
    for c in 0..cases {
        order.sort_by(|&i, &j| {
            let (a, b) = (scores[i][c], scores[j][c]);
            if higher_is_better { b.total_cmp(&a) } else { a.total_cmp(&b) }
        });
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && scores[order[end]][c] == scores[order[start]][c] {
                end += 1;
            }
            // positions start..end hold ranks start+1..=end
            let shared = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                totals[i] += shared;
            }
            start = end;
        }
    }
    let mut ranks: Vec<ModelRank> =
        totals.into_iter().enumerate().map(|(model, t)| ModelRank { model, mean_rank: t / cases as f64 }).collect();
    ranks.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then(a.model.cmp(&b.model)));
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(shape: Vec<usize>, px: &[u8]) -> DataArray {
        DataArray::from_u8(shape, px.to_vec()).unwrap()
    }

    #[test]
    fn top_k_five_items() {
        let truths = ["a", "b", "c", "d", "e"];
        let preds: Vec<Vec<&str>> = vec![
            vec!["a", "x"],
            vec!["b", "x"],
            vec!["c", "x"],
            vec!["x", "y", "z", "w", "v", "d"],
            vec!["x", "y", "z", "w", "v", "e"],
        ];
        assert_eq!(top_k_accuracy(&preds, &truths, 1).unwrap(), 0.6);
        assert_eq!(top_k_accuracy(&preds, &truths, 5).unwrap(), 0.6);
        assert_eq!(top_k_accuracy(&preds, &truths, 6).unwrap(), 1.0);
        assert!(matches!(top_k_accuracy(&preds[..2], &truths, 1), Err(MetricError::LengthMismatch { .. })));
        assert_eq!(top_k_accuracy(&preds, &truths, 0), Err(MetricError::ZeroK));
    }

    #[test]
    fn dice_cases() {
        let a = mask(vec![2, 4], &[1, 1, 1, 1, 0, 0, 0, 0]);
        let b = mask(vec![2, 4], &[0, 0, 1, 1, 1, 1, 0, 0]);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let c = mask(vec![2, 4], &[0, 0, 0, 0, 0, 0, 1, 1]);
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        let empty = mask(vec![2, 4], &[0; 8]);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert!(matches!(dice(&a, &mask(vec![8], &[0; 8])), Err(MetricError::ShapeMismatch { .. })));
    }

    #[test]
    fn macro_dice_averages_labels() {
        let a = mask(vec![4], &[1, 1, 2, 2]);
        let b = mask(vec![4], &[1, 1, 2, 0]);
        // label 1: 1.0, label 2: 2*1/(2+1)
        assert!((macro_dice(&a, &b).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!(is_multilabel(&a));
        assert!(!is_multilabel(&mask(vec![3], &[0, 255, 255])));
    }

    #[test]
    fn ranking() {
        let tied = rank_models(&[vec![0.9, 0.8], vec![0.9, 0.8], vec![0.1, 0.2]], true).unwrap();
        assert_eq!(tied[0].mean_rank, 1.5);
        assert_eq!(tied[1].mean_rank, 1.5);
        assert_eq!(tied[2], ModelRank { model: 2, mean_rank: 3.0 });

        // case 0: m1 > m0 > m2; case 1: m2 > m0 > m1
        let mixed = rank_models(&[vec![0.5, 0.5], vec![0.9, 0.1], vec![0.1, 0.9]], true).unwrap();
        assert_eq!(mixed, vec![
            ModelRank { model: 0, mean_rank: 2.0 },
            ModelRank { model: 1, mean_rank: 2.0 },
            ModelRank { model: 2, mean_rank: 2.0 },
        ]);

        let lower = rank_models(&[vec![3.0], vec![1.0]], false).unwrap();
        assert_eq!(lower[0], ModelRank { model: 1, mean_rank: 1.0 });

        assert!(matches!(rank_models(&[vec![1.0], vec![]], true), Err(MetricError::RaggedMatrix { row: 1, .. })));
        assert!(matches!(rank_models(&[vec![f64::NAN]], true), Err(MetricError::NonFinite { .. })));
        assert_eq!(rank_models(&[], true), Err(MetricError::EmptyMatrix));
    }
}
