use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forward::{argmax, params_on_tape};
use super::{forward_batch, forward_tape, GraphBatch, ModelConfig, ModelState};
use crate::diff::{adam_step, cross_entropy, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::graph::{Dataset, Graph};
use crate::metrics::roc_auc;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

/// Mini-batch Adam loop shared by target and surrogate training.
///
/// Each epoch shuffles `0..n_samples` with a stream derived from `seed`,
/// cuts consecutive batches of `batch_size` and asks `batch_loss` for a
/// scalar loss over the parameter handles and the batch's sample indices.
/// `on_epoch` sees the state after every epoch together with the mean batch
/// loss.
pub fn run_epochs<L, E>(
    state: &mut ModelState,
    n_samples: usize,
    config: &TrainConfig,
    seed: u64,
    mut batch_loss: L,
    mut on_epoch: E,
) -> Result<()>
where
    L: FnMut(&mut Tape, &[Var], &[usize]) -> Result<Var>,
    E: FnMut(usize, &ModelState, f64) -> Result<()>,
{
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if n_samples == 0 {
        return Err(Error::Config("no training samples".into()));
    }
    let mut order_rng = rng::stream(seed, "batches");
    let mut adam = AdamState::new(config.adam, state.params());
    let mut order: Vec<usize> = (0..n_samples).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let params = params_on_tape(&mut tape, state, true);
            let loss = batch_loss(&mut tape, &params, chunk)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = params
                .iter()
                .map(|&p| grads.get_or_zeros(p, tape.value(p)))
                .collect();
            adam_step(&mut state.params_mut(), &g, &mut adam)?;
            total += value;
            batches += 1;
        }
        if !state.all_finite() {
            return Err(Error::Diverged { epoch });
        }
        on_epoch(epoch, state, total / batches as f64)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
}

/// Checkpoint score on a labelled set: ROC-AUC on class-1 probability when
/// both classes are present (binary), otherwise accuracy.
fn validation_score(state: &ModelState, val: &Dataset) -> Result<f64> {
    let graphs: Vec<&Graph> = val.graphs().iter().collect();
    let labels = val.labels()?;
    let outs = forward_batch(state, &graphs)?;
    if state.num_classes() == 2 {
        let scores: Vec<f64> = outs.iter().map(|o| o.probs[1]).collect();
        let binary: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        if let Ok(auc) = roc_auc(&scores, &binary) {
            return Ok(auc);
        }
    }
    let hits = outs
        .iter()
        .zip(&labels)
        .filter(|(o, &l)| argmax(&o.probs) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn train_model(
    config: &ModelConfig,
    train: &Dataset,
    val: &Dataset,
    epochs: usize,
    batch_size: usize,
) -> Result<ModelState> {
    let tc = TrainConfig {
        epochs,
        batch_size,
        ..TrainConfig::default()
    };
    Ok(train_model_with_history(config, train, val, &tc)?.0)
}

/// Cross-entropy training on true labels, returning the epoch with the best
/// validation score (earliest on ties) and the per-epoch history.
pub fn train_model_with_history(
    config: &ModelConfig,
    train: &Dataset,
    val: &Dataset,
    tc: &TrainConfig,
) -> Result<(ModelState, Vec<EpochRecord>)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be nonempty".into()));
    }
    if train.feature_dim() != config.feature_dim || val.feature_dim() != config.feature_dim {
        return Err(Error::dim("train_model", "dataset feature dim differs from model config"));
    }
    let mut state = ModelState::init(config)?;
    let labels = train.labels()?;
    let graphs = train.graphs();
    let mut best: Option<(f64, ModelState)> = None;
    let mut history = Vec::with_capacity(tc.epochs);
    let template = state.clone();
    run_epochs(
        &mut state,
        graphs.len(),
        tc,
        config.seed,
        |tape, params, idx| {
            let batch_graphs: Vec<&Graph> = idx.iter().map(|&i| &graphs[i]).collect();
            let batch = GraphBatch::new(&batch_graphs, template.feature_dim())?;
            let out = forward_tape(tape, params, &template, &batch)?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            cross_entropy(tape, out.logits, &y)
        },
        |epoch, st, loss| {
            let score = validation_score(st, val)?;
            history.push(EpochRecord {
                epoch,
                train_loss: loss,
                val_score: score,
            });
            if best.as_ref().map_or(true, |(b, _)| score > *b) {
                best = Some((score, st.clone()));
            }
            Ok(())
        },
    )?;
    let state = best.map_or(state, |(_, s)| s);
    Ok((state, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_motif_dataset;

    fn tiny() -> (ModelConfig, Dataset, Dataset) {
        let ds = generate_motif_dataset(24, 3);
        let idx: Vec<usize> = (0..24).collect();
        let cfg = ModelConfig {
            hidden_dim: 8,
            num_layers: 2,
            feature_dim: ds.feature_dim(),
            ..Default::default()
        };
        (cfg, ds.subset("tr", &idx[..16]), ds.subset("va", &idx[16..]))
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (cfg, tr, va) = tiny();
        let st = train_model(&cfg, &tr, &va, 0, 8).unwrap();
        assert_eq!(st, ModelState::init(&cfg).unwrap());
    }

    #[test]
    fn deterministic_and_checkpoint_is_best() {
        let (cfg, tr, va) = tiny();
        let tc = TrainConfig {
            epochs: 5,
            batch_size: 8,
            ..Default::default()
        };
        let (a, hist) = train_model_with_history(&cfg, &tr, &va, &tc).unwrap();
        let (b, _) = train_model_with_history(&cfg, &tr, &va, &tc).unwrap();
        assert_eq!(a, b);
        let chosen = validation_score(&a, &va).unwrap();
        assert!(hist.iter().all(|h| chosen >= h.val_score));
        assert_eq!(hist.len(), 5);
    }

    #[test]
    fn zero_batch_size_rejected() {
        let (cfg, tr, va) = tiny();
        assert!(train_model(&cfg, &tr, &va, 1, 0).is_err());
    }
}
