//! Evaluation metrics.

mod mmd;
mod structural;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use mmd::{mmd_squared, mmd_squared_with, zscore_jointly, MmdEstimator, MMD_GAMMA, ZSCORE_EPS};
pub use structural::{structural_features, StructuralFeatures};

/// ROC-AUC as the Mann–Whitney statistic `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim(
            "roc_auc",
            format!("{} scores, {} labels", scores.len(), labels.len()),
        ));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("roc_auc needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of positions where the two label vectors agree.
pub fn fidelity(surrogate: &[usize], target: &[usize]) -> Result<f64> {
    if surrogate.len() != target.len() {
        return Err(Error::dim(
            "fidelity",
            format!("{} vs {} labels", surrogate.len(), target.len()),
        ));
    }
    if surrogate.is_empty() {
        return Err(Error::UndefinedMetric("fidelity of an empty set"));
    }
    let hits = surrogate.iter().zip(target).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / surrogate.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauVariant {
    /// Tie-corrected.
    #[default]
    B,
    /// `(C - D) / (n(n-1)/2)`.
    A,
}

/// Kendall's tau-b between two equally long vectors.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    kendall_tau_with(x, y, TauVariant::B)
}

pub fn kendall_tau_with(x: &[f64], y: &[f64], variant: TauVariant) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("kendall_tau", format!("{} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::UndefinedMetric("kendall_tau needs at least 2 points"));
    }
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]);
            let dy = y[i].partial_cmp(&y[j]);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Some(Equal), Some(Equal)) => {}
                (Some(Equal), _) => tie_x += 1,
                (_, Some(Equal)) => tie_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let num = concordant as f64 - discordant as f64;
    let denom = match variant {
        TauVariant::B => {
            ((concordant + discordant + tie_x) as f64 * (concordant + discordant + tie_y) as f64).sqrt()
        }
        TauVariant::A => (n * (n - 1) / 2) as f64,
    };
    if variant == TauVariant::B && denom == 0.0 {
        return Err(Error::UndefinedMetric("kendall_tau of a constant vector"));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if variant == TauVariant::A && (constant(x) || constant(y)) {
        return Err(Error::UndefinedMetric("kendall_tau of a constant vector"));
    }
    Ok(num / denom)
}

/// Mean per-graph Kendall tau between paired explanations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub mean: f64,
    pub evaluated: usize,
    /// Graphs whose tau is undefined (fewer than two nodes or a constant vector).
    pub skipped: usize,
}

pub fn rank_correlation<'a>(
    pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
    variant: TauVariant,
) -> Result<RankCorrelation> {
    let (mut sum, mut evaluated, mut skipped) = (0.0, 0, 0);
    for (a, b) in pairs {
        match kendall_tau_with(a, b, variant) {
            Ok(t) => {
                sum += t;
                evaluated += 1;
            }
            Err(Error::UndefinedMetric(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let mean = if evaluated == 0 { 0.0 } else { sum / evaluated as f64 };
    Ok(RankCorrelation {
        mean,
        evaluated,
        skipped,
    })
}

/// Mean and sample standard deviation; `std` is `None` for a single value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    Some(MeanStd { mean, std, n })
}

/// Surrogate-vs-target scores on one evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub fidelity: Option<f64>,
    pub rank_corr: Option<f64>,
    pub rank_corr_skipped: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(roc_auc(&s, &[true, true, false, false]).unwrap(), 1.0);
        let s = [0.9, 0.6, 0.4, 0.2];
        assert!((roc_auc(&s, &[true, false, true, false]).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let s = [0.3, 0.3, 0.7, 0.1, 0.7, 0.5, 0.3];
        let l = [true, false, true, false, false, true, true];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((roc_auc(&s, &l).unwrap() - num / den).abs() < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(fidelity(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(fidelity(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert_eq!(fidelity(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert!(fidelity(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn tau_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let t = kendall_tau(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-12);
        assert!(kendall_tau(&x, &[1.0; 4]).is_err());
    }

    #[test]
    fn tau_b_with_ties() {
        // x has one tied pair; pairs: (0,1) tie_x, rest concordant → C=5, D=0, Tx=1, Ty=0.
        let t = kendall_tau(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((t - 5.0 / (6.0f64 * 5.0).sqrt()).abs() < 1e-12);
        let a = kendall_tau_with(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0], TauVariant::A).unwrap();
        assert!((a - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn rank_correlation_skips_constant() {
        let a = [1.0, 2.0, 3.0];
        let c = [0.0, 0.0, 0.0];
        let rc = rank_correlation([(&a[..], &a[..]), (&a[..], &c[..])], TauVariant::B).unwrap();
        assert_eq!(rc.evaluated, 1);
        assert_eq!(rc.skipped, 1);
        assert_eq!(rc.mean, 1.0);
    }

    #[test]
    fn mean_std_single_seed() {
        let m = mean_std(&[0.5]).unwrap();
        assert_eq!(m.std, None);
        let m = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
