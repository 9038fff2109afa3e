use serde::{Deserialize, Serialize};

use super::StructuralFeatures;

/// Gaussian kernel bandwidth `γ` in `exp(-γ‖x - y‖²)`.
pub const MMD_GAMMA: f64 = 0.5;
/// Added to the standard deviation during z-scoring.
pub const ZSCORE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MmdEstimator {
    /// Empirical means over all pairs, self-pairs included.
    #[default]
    Biased,
    /// Within-set means exclude self-pairs.
    Unbiased,
}

/// Z-scores both sets with the mean and population std of their union.
pub fn zscore_jointly(a: &[Vec<f64>], b: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let all: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let d = all.first().map_or(0, |v| v.len());
    let n = all.len() as f64;
    let mut mu = vec![0.0; d];
    for v in &all {
        for k in 0..d {
            mu[k] += v[k] / n;
        }
    }
    let mut sd = vec![0.0; d];
    for v in &all {
        for k in 0..d {
            sd[k] += (v[k] - mu[k]).powi(2) / n;
        }
    }
    sd.iter_mut().for_each(|s| *s = s.sqrt());
    let norm = |v: &Vec<f64>| (0..d).map(|k| (v[k] - mu[k]) / (sd[k] + ZSCORE_EPS)).collect();
    (a.iter().map(norm).collect(), b.iter().map(norm).collect())
}

fn kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-gamma * d2).exp()
}

fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, skip_diag: bool) -> f64 {
    let mut s = 0.0;
    let mut count = 0usize;
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if skip_diag && i == j {
                continue;
            }
            s += kernel(x, y, gamma);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        s / count as f64
    }
}

/// MMD² between two sets of already-normalised vectors.
pub fn mmd_squared_with(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, estimator: MmdEstimator) -> f64 {
    let within = estimator == MmdEstimator::Unbiased;
    mean_kernel(a, a, gamma, within) + mean_kernel(b, b, gamma, within) - 2.0 * mean_kernel(a, b, gamma, false)
}

/// Biased MMD² over jointly z-scored structural features.
pub fn mmd_squared(a: &[StructuralFeatures], b: &[StructuralFeatures], gamma: f64) -> f64 {
    let av: Vec<Vec<f64>> = a.iter().map(|f| f.0.to_vec()).collect();
    let bv: Vec<Vec<f64>> = b.iter().map(|f| f.0.to_vec()).collect();
    let (an, bn) = zscore_jointly(&av, &bv);
    mmd_squared_with(&an, &bn, gamma, MmdEstimator::Biased)
}
