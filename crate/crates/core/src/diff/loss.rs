use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (rows, classes) = (tape.value(logits).rows(), tape.value(logits).cols());
    if labels.len() != rows {
        return Err(Error::dim(
            "cross_entropy",
            format!("{} labels for {rows} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Index {
            op: "cross_entropy",
            index: bad,
            bound: classes,
        });
    }
    let logp = tape.log_softmax_rows(logits)?;
    let picked = tape.pick(logp, labels.to_vec())?;
    let total = tape.sum_all(picked)?;
    tape.scale(total, -1.0 / rows as f64)
}

/// Mean over the batch of `-Σ_c p_c · log softmax(logits)_c` against target
/// distributions `targets` (same shape as `logits`).
pub fn soft_cross_entropy(tape: &mut Tape, logits: Var, targets: &Tensor) -> Result<Var> {
    let rows = tape.value(logits).rows();
    let logp = tape.log_softmax_rows(logits)?;
    let weighted = tape.mul_const(logp, targets.clone())?;
    let total = tape.sum_all(weighted)?;
    tape.scale(total, -1.0 / rows as f64)
}

/// Mean squared difference between `pred` and a constant `target`.
pub fn mse(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    if !tape.value(pred).same_shape(target) {
        return Err(Error::dim(
            "mse",
            format!("{:?} vs {:?}", tape.value(pred).shape(), target.shape()),
        ));
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean_all(sq)
}
