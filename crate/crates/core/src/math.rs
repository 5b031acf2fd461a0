// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small numeric helpers shared across modules.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// In-place softmax with max subtraction.
pub fn softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for x in xs.iter_mut() {
        *x = libm::expf(*x - max);
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Natural-log softmax of one entry of `logits`, accumulated in f64.
pub fn log_softmax_at(logits: &[f32], index: usize) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = logits.iter().map(|&l| libm::exp(l as f64 - max)).sum();
    logits[index] as f64 - max - libm::log(sum)
}

/// Softmax of `scores / temperature`.
pub fn softmax_with_temperature(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::NonFiniteScores);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NonFiniteScores);
    }
    let mut out: Vec<f64> = scores
        .iter()
        .map(|&s| libm::exp((s - max) / temperature))
        .collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Indices sorted by descending score, ties broken by lower index.
pub fn argsort_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn softmax_sums_to_one() {
        let mut xs = vec![1.0f32, 2.0, -3.0, 0.5];
        softmax_in_place(&mut xs);
        let s: f32 = xs.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn temperature_rejects_nonpositive() {
        assert!(softmax_with_temperature(&[1.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[1.0], -1.0).is_err());
        assert!(softmax_with_temperature(&[f64::NEG_INFINITY; 2], 1.0).is_err());
    }

    #[test]
    fn argsort_breaks_ties_by_index() {
        assert_eq!(argsort_descending(&[0.2, 0.1, 0.1]), vec![0, 1, 2]);
        assert_eq!(argsort_descending(&[0.1, 0.4, 0.2]), vec![1, 2, 0]);
    }

    #[test]
    fn argmax_lowest_index_on_tie() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
