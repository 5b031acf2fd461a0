// SPDX-License-Identifier: MIT OR Apache-2.0

//! Planted positional-bias attention and the statistics used to test the
//! additive `relevance + position bias` model of document attention.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are documents, columns are positions.
pub type Matrix = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    /// `Attn = rel + bias + noise`, clamped at 0.
    #[default]
    Linear,
    /// `ln Attn = rel + bias + noise`.
    LogLinear,
}

impl Link {
    pub fn apply(self, rel: f64, bias: f64, noise: f64) -> f64 {
        match self {
            Link::Linear => (rel + bias + noise).max(0.0),
            Link::LogLinear => libm::exp(rel + bias + noise),
        }
    }
}

/// Symmetric quadratic U over 0-based positions:
/// `amplitude * ((k - (K-1)/2) / ((K-1)/2))^2 + offset`.
pub fn u_shape(k: usize, amplitude: f64, offset: f64) -> Vec<f64> {
    if k == 1 {
        return alloc::vec![offset];
    }
    let mid = (k as f64 - 1.0) / 2.0;
    (0..k)
        .map(|i| {
            let x = (i as f64 - mid) / mid;
            amplitude * x * x + offset
        })
        .collect()
}

/// Deterministic Normal(0, sigma) draw for one (document, position) cell.
pub fn cell_noise(seed: u64, doc_key: u64, position: u64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let mixed = splitmix(splitmix(splitmix(seed) ^ doc_key) ^ position);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    Normal::new(0.0, sigma)
        .expect("sigma validated")
        .sample(&mut rng)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to key noise by document id.
pub fn doc_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedBiasModel {
    pub rel: Vec<f64>,
    pub bias: Vec<f64>,
    pub noise_sigma: f64,
    pub link: Link,
    pub seed: u64,
}

impl PlantedBiasModel {
    pub fn with_u_shape(
        rel: Vec<f64>,
        amplitude: f64,
        offset: f64,
        noise_sigma: f64,
        link: Link,
        seed: u64,
    ) -> Self {
        let bias = u_shape(rel.len(), amplitude, offset);
        Self {
            rel,
            bias,
            noise_sigma,
            link,
            seed,
        }
    }

    pub fn value(&self, doc: usize, position: usize) -> f64 {
        let noise = cell_noise(self.seed, doc as u64, position as u64, self.noise_sigma);
        self.link.apply(self.rel[doc], self.bias[position], noise)
    }
}

pub fn planted_attention(model: &PlantedBiasModel) -> Result<Matrix> {
    if !(model.noise_sigma >= 0.0) {
        return Err(Error::NegativeSigma(model.noise_sigma));
    }
    let k = model.rel.len();
    if k < 2 {
        return Err(Error::TooFewDocuments { need: 2, got: k });
    }
    if model.bias.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: model.bias.len(),
        });
    }
    Ok((0..k)
        .map(|d| (0..k).map(|p| model.value(d, p)).collect())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Fixed document pair, varying positions: position effects agree.
    PositionAgreement = 1,
    /// Fixed position pair, varying documents: relevance order agrees.
    RelevanceAgreement = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    /// Quadruplets with no exact tie in either difference.
    pub n_pairs: usize,
    pub n_valid: usize,
    pub fraction: f64,
}

fn check_shape(matrix: &Matrix) -> Result<(usize, usize)> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::MatrixShape);
    }
    Ok((rows, cols))
}

/// Visits every quadruplet `(d1 < d2, k < l)` with the two differences the
/// condition compares.
fn for_each_quadruplet(
    matrix: &Matrix,
    which: Condition,
    mut f: impl FnMut(f64, f64),
) -> Result<()> {
    let (rows, cols) = check_shape(matrix)?;
    for d1 in 0..rows {
        for d2 in d1 + 1..rows {
            for k in 0..cols {
                for l in k + 1..cols {
                    let (a, b) = match which {
                        Condition::PositionAgreement => (
                            matrix[d1][k] - matrix[d1][l],
                            matrix[d2][k] - matrix[d2][l],
                        ),
                        Condition::RelevanceAgreement => (
                            matrix[d1][k] - matrix[d2][k],
                            matrix[d1][l] - matrix[d2][l],
                        ),
                    };
                    f(a, b);
                }
            }
        }
    }
    Ok(())
}

/// Fraction of quadruplets whose two differences share a sign. Exact ties in
/// either difference are excluded from the count.
pub fn check_condition(matrix: &Matrix, which: Condition) -> Result<ConditionReport> {
    let (mut n_pairs, mut n_valid) = (0usize, 0usize);
    for_each_quadruplet(matrix, which, |a, b| {
        if a == 0.0 || b == 0.0 {
            return;
        }
        n_pairs += 1;
        if (a > 0.0) == (b > 0.0) {
            n_valid += 1;
        }
    })?;
    if n_pairs == 0 {
        return Err(Error::DegeneratePairs);
    }
    Ok(ConditionReport {
        condition: which,
        n_pairs,
        n_valid,
        fraction: n_valid as f64 / n_pairs as f64,
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    average_ranks_within(xs, 0.0)
}

/// Like [`average_ranks`], but sorted neighbours no more than `tol` apart
/// share a rank.
pub fn average_ranks_within(xs: &[f64], tol: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] - xs[order[j - 1]] <= tol {
            j += 1;
        }
        // positions i..j (0-based) share rank mean of (i+1..=j)
        let rank = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = rank;
        }
        i = j;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantVector);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::ConstantVector);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Relative gap below which two differences count as tied in
/// [`model_fit_correlation`]. `(r1 + b) - (r2 + b)` need not equal `r1 - r2`
/// bit for bit, and without a tolerance that rounding reorders tie groups.
pub const FIT_TIE_RTOL: f64 = 1e-9;

/// Spearman correlation between `A(d1,k) - A(d2,k)` and `A(d1,l) - A(d2,l)`
/// over all quadruplets; the log-linear link compares log-attention.
pub fn model_fit_correlation(matrix: &Matrix, link: Link) -> Result<f64> {
    let transformed: Matrix;
    let m = match link {
        Link::Linear => matrix,
        Link::LogLinear => {
            transformed = matrix
                .iter()
                .map(|r| r.iter().map(|&v| libm::log(v)).collect())
                .collect();
            &transformed
        }
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for_each_quadruplet(m, Condition::RelevanceAgreement, |a, b| {
        xs.push(a);
        ys.push(b);
    })?;
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScores);
    }
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(libm::fabs(*v)));
    let tol = FIT_TIE_RTOL * scale;
    pearson(&average_ranks_within(&xs, tol), &average_ranks_within(&ys, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_rel_rows_equal_bias() {
        let m = PlantedBiasModel {
            rel: vec![0.0; 3],
            bias: vec![0.3, 0.1, 0.3],
            noise_sigma: 0.0,
            link: Link::Linear,
            seed: 0,
        };
        for row in planted_attention(&m).unwrap() {
            assert_eq!(row, vec![0.3, 0.1, 0.3]);
        }
    }

    #[test]
    fn zero_bias_rows_equal_rel() {
        let m = PlantedBiasModel {
            rel: vec![0.2, 0.0],
            bias: vec![0.0, 0.0],
            noise_sigma: 0.0,
            link: Link::Linear,
            seed: 0,
        };
        assert_eq!(
            planted_attention(&m).unwrap(),
            vec![vec![0.2, 0.2], vec![0.0, 0.0]]
        );
    }

    #[test]
    fn log_linear_ratio_is_e() {
        let m = PlantedBiasModel {
            rel: vec![0.0, 1.0],
            bias: vec![0.0, 0.0],
            noise_sigma: 0.0,
            link: Link::LogLinear,
            seed: 0,
        };
        let a = planted_attention(&m).unwrap();
        for (hi, lo) in a[1].iter().zip(&a[0]) {
            assert!((hi / lo - core::f64::consts::E).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_sigma_rejected() {
        let m = PlantedBiasModel::with_u_shape(vec![0.0, 1.0], 1.0, 0.0, -0.1, Link::Linear, 0);
        assert_eq!(planted_attention(&m), Err(Error::NegativeSigma(-0.1)));
    }

    #[test]
    fn u_shape_is_symmetric_with_min_in_middle() {
        let b = u_shape(5, 2.0, 0.5);
        assert_eq!(b, vec![2.5, 1.0, 0.5, 1.0, 2.5]);
    }

    #[test]
    fn strict_disagreement() {
        let m = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let c1 = check_condition(&m, Condition::PositionAgreement).unwrap();
        assert_eq!((c1.n_pairs, c1.fraction), (1, 0.0));
    }

    #[test]
    fn all_ties_is_degenerate() {
        let m = vec![vec![1.0; 3]; 3];
        assert_eq!(
            check_condition(&m, Condition::RelevanceAgreement),
            Err(Error::DegeneratePairs)
        );
        assert!(check_condition(&vec![vec![1.0]], Condition::PositionAgreement).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantVector)
        );
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }
}
