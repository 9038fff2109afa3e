//! Node-importance explanations for graph classifiers.
//!
//! All three model-based methods read the final-layer node embeddings `F`
//! (one row per node) and the classifier column `w^c` of the explained class:
//!
//! - Graph-CAM: `E_v = Σ_k w^c_k F_{v,k}`.
//! - Gradient: `E_v = ‖ReLU(∂y_c/∂F_v)‖₂`.
//! - Grad-CAM: `α_k = mean_v ∂y_c/∂F_{v,k}`, `E_v = ReLU(Σ_k α_k F_{v,k})`.
//!
//! With global mean pooling and a linear head, `∂y_c/∂F_{v,k} = w^c_k / |V|`
//! for every node, so the gradient method is node-uniform and Grad-CAM equals
//! `ReLU(Graph-CAM) / |V|`. Raw scores are not normalised; consumers compare
//! rankings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diff::Tape;
use crate::graph::Graph;
use crate::model::{self, ForwardOutput, GraphBatch, ModelState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExplainMethod {
    GraphCAM,
    Grad,
    GradCAM,
    /// Scores produced outside this crate (e.g. converted edge scores).
    External,
}

impl std::fmt::Display for ExplainMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExplainMethod::GraphCAM => "GraphCAM",
            ExplainMethod::Grad => "Grad",
            ExplainMethod::GradCAM => "GradCAM",
            ExplainMethod::External => "External",
        })
    }
}

impl std::str::FromStr for ExplainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "graphcam" | "cam" => Ok(ExplainMethod::GraphCAM),
            "grad" | "gradient" => Ok(ExplainMethod::Grad),
            "gradcam" => Ok(ExplainMethod::GradCAM),
            _ => Err(Error::Config(format!("unknown explainer {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationVector {
    pub scores: Vec<f64>,
    pub class_used: usize,
    pub method: ExplainMethod,
}

impl ExplanationVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores at `keep`, in that order.
    pub fn restrict(&self, keep: &[usize]) -> ExplanationVector {
        ExplanationVector {
            scores: keep.iter().map(|&i| self.scores[i]).collect(),
            ..self.clone()
        }
    }
}

fn check_class(state: &ModelState, c: usize) -> Result<()> {
    if c >= state.num_classes() {
        return Err(Error::Index {
            op: "explain class",
            index: c,
            bound: state.num_classes(),
        });
    }
    Ok(())
}

pub fn graph_cam(fwd: &ForwardOutput, state: &ModelState, class_c: usize) -> Result<ExplanationVector> {
    let w = state.class_weights(class_c)?;
    let f = &fwd.node_embeddings;
    if f.cols() != w.len() {
        return Err(Error::dim("graph_cam", format!("{} embedding dims, {} weights", f.cols(), w.len())));
    }
    let scores = (0..f.rows())
        .map(|v| f.row_slice(v).iter().zip(&w).map(|(a, b)| a * b).sum())
        .collect();
    Ok(ExplanationVector {
        scores,
        class_used: class_c,
        method: ExplainMethod::GraphCAM,
    })
}

/// Final-layer embeddings and `∂y_c/∂F`, both `[num_nodes × hidden]`.
fn embedding_gradient(state: &ModelState, graph: &Graph, class_c: usize) -> Result<(crate::diff::Tensor, crate::diff::Tensor)> {
    check_class(state, class_c)?;
    let batch = GraphBatch::new(&[graph], state.feature_dim())?;
    let mut tape = Tape::new();
    let params = model::params_on_tape(&mut tape, state, false);
    let f = model::encode(&mut tape, &params, state, &batch)?;
    let f_leaf = tape.leaf(tape.value(f).clone());
    let k = params.len();
    let (_, logits) = model::head_tape(&mut tape, f_leaf, params[k - 2], params[k - 1], &batch)?;
    let y = tape.pick(logits, vec![class_c])?;
    let grads = tape.backward(y)?;
    let g = grads.get_or_zeros(f_leaf, tape.value(f_leaf));
    Ok((tape.value(f_leaf).clone(), g))
}

pub fn grad_explain(state: &ModelState, graph: &Graph, class_c: usize) -> Result<ExplanationVector> {
    let (_, g) = embedding_gradient(state, graph, class_c)?;
    let scores = (0..g.rows())
        .map(|v| g.row_slice(v).iter().map(|x| x.max(0.0).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(ExplanationVector {
        scores,
        class_used: class_c,
        method: ExplainMethod::Grad,
    })
}

pub fn grad_cam(state: &ModelState, graph: &Graph, class_c: usize) -> Result<ExplanationVector> {
    let (f, g) = embedding_gradient(state, graph, class_c)?;
    let n = g.rows() as f64;
    let alpha: Vec<f64> = (0..g.cols())
        .map(|k| (0..g.rows()).map(|v| g.get(v, k)).sum::<f64>() / n)
        .collect();
    let scores = (0..f.rows())
        .map(|v| {
            f.row_slice(v)
                .iter()
                .zip(&alpha)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0)
        })
        .collect();
    Ok(ExplanationVector {
        scores,
        class_used: class_c,
        method: ExplainMethod::GradCAM,
    })
}

/// Forward pass plus an explanation of the predicted class.
pub fn explain_prediction(
    state: &ModelState,
    graph: &Graph,
    method: ExplainMethod,
) -> Result<(ForwardOutput, ExplanationVector)> {
    let fwd = model::forward(state, graph)?;
    let c = fwd.predicted_class();
    let e = explain_with(state, graph, &fwd, method, c)?;
    Ok((fwd, e))
}

/// Explanation of class `c` given an already computed forward pass.
pub fn explain_with(
    state: &ModelState,
    graph: &Graph,
    fwd: &ForwardOutput,
    method: ExplainMethod,
    c: usize,
) -> Result<ExplanationVector> {
    match method {
        ExplainMethod::GraphCAM => graph_cam(fwd, state, c),
        ExplainMethod::Grad => grad_explain(state, graph, c),
        ExplainMethod::GradCAM => grad_cam(state, graph, c),
        ExplainMethod::External => Err(Error::Config("External is not a model explainer".into())),
    }
}

/// Node scores as the mean score of incident scored edges; nodes without
/// any scored incident edge get 0. Keys are undirected (`(u, v)` and
/// `(v, u)` name the same edge).
pub fn edges_to_node_scores(edge_scores: &BTreeMap<(usize, usize), f64>, graph: &Graph) -> Result<ExplanationVector> {
    let n = graph.num_nodes();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (&(u, v), &s) in edge_scores {
        if u >= n || v >= n || !graph.has_edge(u, v) {
            return Err(Error::UnknownEdge(u, v));
        }
        for x in [u, v] {
            sum[x] += s;
            count[x] += 1;
        }
    }
    let scores = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(ExplanationVector {
        scores,
        class_used: 0,
        method: ExplainMethod::External,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::model::{ModelConfig, ModelState};

    fn fwd_with(f: Tensor) -> ForwardOutput {
        ForwardOutput {
            node_embeddings: f,
            pooled: vec![],
            logits: vec![],
            probs: vec![],
        }
    }

    fn two_dim_state(wc: [f64; 2]) -> ModelState {
        let mut st = ModelState::init(&ModelConfig {
            hidden_dim: 2,
            feature_dim: 1,
            num_layers: 1,
            ..Default::default()
        })
        .unwrap();
        st.cls_w = Tensor::from_rows(&[vec![wc[0], 0.0], vec![wc[1], 0.0]]).unwrap();
        st
    }

    #[test]
    fn graph_cam_direct_sum() {
        let st = two_dim_state([0.5, -1.0]);
        let f = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let e = graph_cam(&fwd_with(f), &st, 0).unwrap();
        assert_eq!(e.scores, vec![0.5, -2.0]);
        let mean: f64 = e.scores.iter().sum::<f64>() / 2.0;
        assert_eq!(mean, -0.75);
        assert_eq!(e.class_used, 0);
    }

    #[test]
    fn zero_weights_zero_scores() {
        let st = two_dim_state([0.0, 0.0]);
        let f = Tensor::from_rows(&[vec![1.0, 3.0], vec![-4.0, 2.0]]).unwrap();
        assert_eq!(graph_cam(&fwd_with(f), &st, 0).unwrap().scores, vec![0.0, 0.0]);
    }

    #[test]
    fn class_out_of_range() {
        let st = two_dim_state([1.0, 1.0]);
        let f = Tensor::from_rows(&[vec![1.0, 3.0]]).unwrap();
        assert!(matches!(graph_cam(&fwd_with(f), &st, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn grad_is_uniform_norm_of_positive_weights() {
        let mut st = two_dim_state([0.5, -1.0]);
        st.cls_w = Tensor::from_rows(&[vec![0.3, 0.0], vec![-0.4, 0.0]]).unwrap();
        let g = Graph::new(4, vec![(0, 1), (1, 2)], Tensor::column(vec![1.0, 2.0, 3.0, 4.0]), None).unwrap();
        let e = grad_explain(&st, &g, 0).unwrap();
        for s in e.scores {
            assert!((s - 0.3 / 4.0).abs() < 1e-15);
        }
        // every partial negative for class 1's weights → 0
        st.cls_w = Tensor::from_rows(&[vec![0.3, -0.1], vec![-0.4, -0.2]]).unwrap();
        assert!(grad_explain(&st, &g, 1).unwrap().scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn edges_to_nodes() {
        let g = Graph::new(4, vec![(0, 1), (1, 2)], Tensor::zeros(4, 1), None).unwrap();
        let mut m = BTreeMap::new();
        m.insert((0, 1), 0.2);
        m.insert((2, 1), 0.4);
        let e = edges_to_node_scores(&m, &g).unwrap();
        assert!((e.scores[1] - 0.3).abs() < 1e-15);
        assert_eq!(e.scores[0], 0.2);
        assert_eq!(e.scores[3], 0.0);
        m.insert((0, 3), 1.0);
        assert!(matches!(edges_to_node_scores(&m, &g), Err(Error::UnknownEdge(0, 3))));
    }

    #[test]
    fn unit_edge_scores() {
        let g = Graph::new(4, vec![(0, 1), (1, 2)], Tensor::zeros(4, 1), None).unwrap();
        let m: BTreeMap<_, _> = g.edges().iter().map(|&e| (e, 1.0)).collect();
        assert_eq!(edges_to_node_scores(&m, &g).unwrap().scores, vec![1.0, 1.0, 1.0, 0.0]);
    }
}
