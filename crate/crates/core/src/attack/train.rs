use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{mse_alignment_batch, rank_alignment_batch};
use super::{AlignMode, AttackConfig, TrainingSet};
use crate::diff::{adam_step, cross_entropy, soft_cross_entropy, AdamState, Tape, Tensor, Var};
use crate::graph::Graph;
use crate::model::{forward_tape, params_on_tape, run_epochs, GraphBatch, ModelState};
use crate::oracle::QueryRecord;
use crate::{rng, Error, Result};

/// One surrogate training example: a query answer or an augment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub graph: Graph,
    pub label: usize,
    /// Oracle probabilities; augments carry their origin's.
    pub probs: Option<Vec<f64>>,
    pub explanation: Vec<f64>,
}

impl TrainingSample {
    fn from_record(r: &QueryRecord) -> Self {
        TrainingSample {
            graph: r.graph.clone(),
            label: r.predicted_label,
            probs: r.probs.clone(),
            explanation: r.explanation.scores.clone(),
        }
    }
}

impl TrainingSet {
    /// Queries first, then augments.
    pub fn samples(&self) -> Vec<TrainingSample> {
        let mut out: Vec<TrainingSample> = self.queries.iter().map(TrainingSample::from_record).collect();
        out.extend(self.augments.iter().map(|a| TrainingSample {
            graph: a.graph.clone(),
            label: a.label,
            probs: self.queries[a.origin].probs.clone(),
            explanation: a.explanation.scores.clone(),
        }));
        out
    }
}

fn check_samples(samples: &[TrainingSample], config: &AttackConfig) -> Result<bool> {
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let c = config.surrogate.num_classes;
    for s in samples {
        if s.graph.feature_dim() != config.surrogate.feature_dim {
            return Err(Error::dim(
                "train_surrogate",
                format!(
                    "sample feature width {} != surrogate feature dim {}",
                    s.graph.feature_dim(),
                    config.surrogate.feature_dim
                ),
            ));
        }
        if s.label >= c {
            return Err(Error::Index {
                op: "train_surrogate",
                index: s.label,
                bound: c,
            });
        }
        if s.probs.as_ref().is_some_and(|p| p.len() != c) {
            return Err(Error::dim("train_surrogate", "oracle probabilities do not match class count"));
        }
        if s.explanation.len() != s.graph.num_nodes() {
            return Err(Error::dim("train_surrogate", "explanation length differs from node count"));
        }
    }
    Ok(config.soft_labels && samples.iter().all(|s| s.probs.is_some()))
}

/// Cross-entropy against oracle probabilities (`soft`) or oracle labels.
fn prediction_loss(tape: &mut Tape, logits: Var, batch: &[&TrainingSample], soft: bool) -> Result<Var> {
    if soft {
        let c = tape.value(logits).cols();
        let rows: Vec<Vec<f64>> = batch.iter().map(|s| s.probs.clone().expect("checked")).collect();
        let t = Tensor::from_rows(&rows)?;
        if t.cols() != c {
            return Err(Error::dim("prediction_loss", "probability width differs from class count"));
        }
        soft_cross_entropy(tape, logits, &t)
    } else {
        let y: Vec<usize> = batch.iter().map(|s| s.label).collect();
        cross_entropy(tape, logits, &y)
    }
}

/// Graph-CAM node scores of the surrogate on the tape (`N × 1`), each graph
/// explained for its currently predicted class.
fn surrogate_cam(tape: &mut Tape, node_emb: Var, logits: Var, cls_w: Var, batch: &GraphBatch) -> Result<Var> {
    let cam = tape.matmul(node_emb, cls_w)?;
    let lv = tape.value(logits);
    let pred: Vec<usize> = (0..lv.rows()).map(|g| crate::model::argmax(lv.row_slice(g))).collect();
    let per_node = batch.node_graph.iter().map(|&g| pred[g]).collect();
    tape.pick(cam, per_node)
}

/// Trains a fresh surrogate on queries and augments under
/// `l_pred + lambda * l_align`, returning the final-epoch parameters.
pub fn train_surrogate(set: &TrainingSet, config: &AttackConfig) -> Result<ModelState> {
    config.validate()?;
    if set.queries.is_empty() {
        return Err(Error::Config("no query records".into()));
    }
    let samples = set.samples();
    let soft = check_samples(&samples, config)?;
    let mut state = ModelState::init(&config.surrogate)?;
    let template = state.clone();
    let align = if config.lambda == 0.0 { AlignMode::None } else { config.align_mode };
    let mut pair_rng = rng::stream(config.seed, "pairs");
    run_epochs(
        &mut state,
        samples.len(),
        &config.train_config(),
        config.seed,
        |tape, params, idx| {
            let batch_samples: Vec<&TrainingSample> = idx.iter().map(|&i| &samples[i]).collect();
            let graphs: Vec<&Graph> = batch_samples.iter().map(|s| &s.graph).collect();
            let batch = GraphBatch::new(&graphs, template.feature_dim())?;
            let out = forward_tape(tape, params, &template, &batch)?;
            let l_pred = prediction_loss(tape, out.logits, &batch_samples, soft)?;
            if align == AlignMode::None {
                return Ok(l_pred);
            }
            let cls_w = params[params.len() - 2];
            let scores = surrogate_cam(tape, out.node_embeddings, out.logits, cls_w, &batch)?;
            let targets: Vec<&[f64]> = batch_samples.iter().map(|s| s.explanation.as_slice()).collect();
            let l_align = match align {
                AlignMode::Rank => {
                    let cap = config.max_pairs.map(|m| (&mut pair_rng, m));
                    rank_alignment_batch(tape, scores, &targets, cap)?
                }
                AlignMode::MSE => mse_alignment_batch(tape, scores, &targets)?,
                AlignMode::None => unreachable!(),
            };
            let weighted = tape.scale(l_align, config.lambda)?;
            tape.add(l_pred, weighted)
        },
        |_, _, _| Ok(()),
    )?;
    Ok(state)
}

/// Teacher-student baseline: fit oracle outputs on the queried graphs only.
///
/// Written as its own loop on purpose; with `align_mode = None` and no
/// augments, [`train_surrogate`] must land on bitwise the same parameters.
pub fn teacher_student(queries: &[QueryRecord], config: &AttackConfig) -> Result<ModelState> {
    config.validate()?;
    let samples: Vec<TrainingSample> = queries.iter().map(TrainingSample::from_record).collect();
    let soft = check_samples(&samples, config)?;
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut state = ModelState::init(&config.surrogate)?;
    let mut adam = AdamState::new(config.adam, state.params());
    let mut order_rng = rng::stream(config.seed, "batches");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch_samples: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let graphs: Vec<&Graph> = batch_samples.iter().map(|s| &s.graph).collect();
            let batch = GraphBatch::new(&graphs, state.feature_dim())?;
            let mut tape = Tape::new();
            let params = params_on_tape(&mut tape, &state, true);
            let out = forward_tape(&mut tape, &params, &state, &batch)?;
            let loss = prediction_loss(&mut tape, out.logits, &batch_samples, soft)?;
            if !tape.value(loss).item().is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = params.iter().map(|&p| grads.get_or_zeros(p, tape.value(p))).collect();
            adam_step(&mut state.params_mut(), &g, &mut adam)?;
        }
        if !state.all_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(state)
}
