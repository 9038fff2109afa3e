//! Explanation alignment losses.
//!
//! For a pair `(i, j)` with surrogate scores `s` and target scores `t`,
//! `Δ = s_i − s_j` and `r = 1` if `t_i > t_j`, `0` if `t_i < t_j`, `½` on ties.
//! The pair loss is the binary cross-entropy of `σ(Δ)` against `r`, written as
//! `r·softplus(−Δ) + (1−r)·softplus(Δ)`, whose derivative in `Δ` is `σ(Δ) − r`.
//! A graph's loss is the mean over its pairs `i < j`; a batch's loss is the
//! mean over its graphs, graphs with fewer than two nodes contributing zero.

use rand::seq::index::sample;

use crate::diff::{Tape, Tensor, Var};
use crate::{rng, Error, Result};

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn pair_target(ti: f64, tj: f64) -> f64 {
    if ti > tj {
        1.0
    } else if ti < tj {
        0.0
    } else {
        0.5
    }
}

/// Loss for one pair with score gap `delta` and target `r`.
pub fn pair_loss(delta: f64, r: f64) -> f64 {
    r * softplus(-delta) + (1.0 - r) * softplus(delta)
}

fn check_len(op: &'static str, target: &[f64], surrogate_len: usize) -> Result<()> {
    if target.len() != surrogate_len {
        return Err(Error::dim(
            op,
            format!("target has {} scores, surrogate {surrogate_len}", target.len()),
        ));
    }
    Ok(())
}

/// Plain-number rank loss for one graph.
pub fn rank_alignment_value(target: &[f64], surrogate: &[f64]) -> Result<f64> {
    check_len("rank_alignment_loss", target, surrogate.len())?;
    let n = target.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += pair_loss(surrogate[i] - surrogate[j], pair_target(target[i], target[j]));
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Plain-number MSE alignment for one graph.
pub fn mse_alignment_value(target: &[f64], surrogate: &[f64]) -> Result<f64> {
    check_len("mse_alignment_loss", target, surrogate.len())?;
    if target.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = target.iter().zip(surrogate).map(|(t, s)| (s - t) * (s - t)).sum();
    Ok(s / target.len() as f64)
}

/// Rank loss for one graph on the tape; `surrogate` is `n × 1`.
pub fn rank_alignment_loss(tape: &mut Tape, target: &[f64], surrogate: Var) -> Result<Var> {
    rank_alignment_batch(tape, surrogate, &[target], None)
}

/// MSE alignment for one graph on the tape; `surrogate` is `n × 1`.
pub fn mse_alignment_loss(tape: &mut Tape, target: &[f64], surrogate: Var) -> Result<Var> {
    mse_alignment_batch(tape, surrogate, &[target])
}

fn check_batch(op: &'static str, tape: &Tape, scores: Var, targets: &[&[f64]]) -> Result<()> {
    let total: usize = targets.iter().map(|t| t.len()).sum();
    let shape = tape.value(scores).shape();
    if shape != [total, 1] {
        return Err(Error::dim(op, format!("scores {shape:?} for {total} target scores")));
    }
    if targets.is_empty() {
        return Err(Error::dim(op, "empty batch"));
    }
    Ok(())
}

/// Batched rank loss. `scores` stacks every graph's node scores (`N × 1`) in
/// the order of `targets`. With `pair_cap = Some((rng, m))`, graphs with more
/// than `m` pairs use `m` pairs sampled without replacement.
pub(crate) fn rank_alignment_batch(
    tape: &mut Tape,
    scores: Var,
    targets: &[&[f64]],
    mut pair_cap: Option<(&mut rng::Rng, usize)>,
) -> Result<Var> {
    check_batch("rank_alignment_loss", tape, scores, targets)?;
    let b = targets.len() as f64;
    let (mut left, mut right, mut r, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut off = 0;
    for t in targets {
        let n = t.len();
        let all = n * n.saturating_sub(1) / 2;
        if all > 0 {
            let mut pairs = Vec::with_capacity(all);
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((i, j));
                }
            }
            if let Some((rng, m)) = pair_cap.as_mut() {
                if all > *m {
                    let mut pick = sample(*rng, all, *m).into_vec();
                    pick.sort_unstable();
                    pairs = pick.into_iter().map(|k| pairs[k]).collect();
                }
            }
            let weight = 1.0 / (pairs.len() as f64 * b);
            for (i, j) in pairs {
                left.push(off + i);
                right.push(off + j);
                r.push(pair_target(t[i], t[j]));
                w.push(weight);
            }
        }
        off += n;
    }
    if left.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let si = tape.gather_rows(scores, left)?;
    let sj = tape.gather_rows(scores, right)?;
    let delta = tape.sub(si, sj)?;
    let neg = tape.scale(delta, -1.0)?;
    let sp_neg = tape.softplus(neg)?;
    let sp_pos = tape.softplus(delta)?;
    let one_minus: Vec<f64> = r.iter().map(|x| 1.0 - x).collect();
    let a = tape.mul_const(sp_neg, Tensor::column(r))?;
    let c = tape.mul_const(sp_pos, Tensor::column(one_minus))?;
    let per_pair = tape.add(a, c)?;
    let weighted = tape.scale_rows(per_pair, w)?;
    tape.sum_all(weighted)
}

/// Batched MSE alignment: per-graph mean squared difference, averaged over graphs.
pub(crate) fn mse_alignment_batch(tape: &mut Tape, scores: Var, targets: &[&[f64]]) -> Result<Var> {
    check_batch("mse_alignment_loss", tape, scores, targets)?;
    let b = targets.len() as f64;
    let flat: Vec<f64> = targets.iter().flat_map(|t| t.iter().copied()).collect();
    let w: Vec<f64> = targets
        .iter()
        .flat_map(|t| std::iter::repeat(1.0 / (t.len() as f64 * b)).take(t.len()))
        .collect();
    let t = tape.constant(Tensor::column(flat));
    let d = tape.sub(scores, t)?;
    let sq = tape.mul(d, d)?;
    let weighted = tape.scale_rows(sq, w)?;
    tape.sum_all(weighted)
}
