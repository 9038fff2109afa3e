use super::{Arch, Layer, ModelState};
use crate::diff::{Tape, Tensor, Var};
use crate::graph::Graph;
use crate::{Error, Result};

/// Disjoint union of graphs laid out for one tape evaluation.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub features: Tensor,
    /// Directed message endpoints (each undirected edge appears twice).
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Graph index of every node.
    pub node_graph: Vec<usize>,
    /// First node of each graph.
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph], feature_dim: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::dim("batch", "empty batch"));
        }
        let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let mut data = Vec::with_capacity(total * feature_dim);
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        let mut node_graph = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut sizes = Vec::with_capacity(graphs.len());
        let mut off = 0;
        for (gi, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::dim(
                    "forward",
                    format!("graph feature width {} != model feature dim {feature_dim}", g.feature_dim()),
                ));
            }
            data.extend_from_slice(g.features().data());
            for &(u, v) in g.edges() {
                src.push(off + u);
                dst.push(off + v);
                src.push(off + v);
                dst.push(off + u);
            }
            node_graph.extend(std::iter::repeat(gi).take(g.num_nodes()));
            offsets.push(off);
            sizes.push(g.num_nodes());
            off += g.num_nodes();
        }
        Ok(GraphBatch {
            features: Tensor::new(total, feature_dim, data)?,
            src,
            dst,
            node_graph,
            offsets,
            sizes,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_graph.len()
    }

    /// GCN propagation with self-loops: `(src, dst, weight)` over all messages.
    fn gcn_messages(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let n = self.num_nodes();
        let mut deg = vec![1.0f64; n];
        for &d in &self.dst {
            deg[d] += 1.0;
        }
        let mut src = self.src.clone();
        let mut dst = self.dst.clone();
        src.extend(0..n);
        dst.extend(0..n);
        let w = src
            .iter()
            .zip(&dst)
            .map(|(&u, &v)| 1.0 / (deg[u] * deg[v]).sqrt())
            .collect();
        (src, dst, w)
    }
}

/// Tape handles produced by [`forward_tape`].
#[derive(Clone, Copy, Debug)]
pub struct TapeForward {
    /// Final-layer node embeddings `[N × hidden]`.
    pub node_embeddings: Var,
    /// Per-graph mean of node embeddings `[B × hidden]`.
    pub pooled: Var,
    /// `pooled · W_cls + b` `[B × C]`.
    pub logits: Var,
}

/// Places every parameter on the tape, as leaves when `trainable`.
pub fn params_on_tape(tape: &mut Tape, state: &ModelState, trainable: bool) -> Vec<Var> {
    state
        .params()
        .into_iter()
        .map(|p| {
            if trainable {
                tape.leaf(p.clone())
            } else {
                tape.constant(p.clone())
            }
        })
        .collect()
}

/// Encoder on the tape; returns final-layer node embeddings.
pub fn encode(tape: &mut Tape, params: &[Var], state: &ModelState, batch: &GraphBatch) -> Result<Var> {
    let n = batch.num_nodes();
    let mut h = tape.constant(batch.features.clone());
    let gcn = matches!(state.config.arch, Arch::GCN).then(|| batch.gcn_messages());
    let mut p = 0;
    for layer in &state.layers {
        h = match layer {
            Layer::Gin { .. } => {
                let (w1, b1, w2, b2, eps) = (params[p], params[p + 1], params[p + 2], params[p + 3], params[p + 4]);
                p += 5;
                let msg = tape.gather_rows(h, batch.src.clone())?;
                let agg = tape.scatter_add_rows(msg, batch.dst.clone(), n)?;
                let self_term = tape.scale_by(h, eps)?;
                let x = tape.add(h, self_term)?;
                let x = tape.add(x, agg)?;
                let x = tape.matmul(x, w1)?;
                let x = tape.add_row(x, b1)?;
                let x = tape.relu(x)?;
                let x = tape.matmul(x, w2)?;
                let x = tape.add_row(x, b2)?;
                tape.relu(x)?
            }
            Layer::Gcn { .. } => {
                let (w, b) = (params[p], params[p + 1]);
                p += 2;
                let (src, dst, wts) = gcn.as_ref().expect("gcn messages");
                let msg = tape.gather_rows(h, src.clone())?;
                let msg = tape.scale_rows(msg, wts.clone())?;
                let agg = tape.scatter_add_rows(msg, dst.clone(), n)?;
                let x = tape.matmul(agg, w)?;
                let x = tape.add_row(x, b)?;
                tape.relu(x)?
            }
        };
    }
    Ok(h)
}

/// Mean pooling and the linear head over given node embeddings.
///
/// Returns `(pooled, logits)`.
pub fn head_tape(
    tape: &mut Tape,
    node_embeddings: Var,
    cls_w: Var,
    cls_b: Var,
    batch: &GraphBatch,
) -> Result<(Var, Var)> {
    let summed = tape.scatter_add_rows(node_embeddings, batch.node_graph.clone(), batch.num_graphs())?;
    let inv: Vec<f64> = batch.sizes.iter().map(|&s| 1.0 / s as f64).collect();
    let pooled = tape.scale_rows(summed, inv)?;
    let logits = tape.matmul(pooled, cls_w)?;
    let logits = tape.add_row(logits, cls_b)?;
    Ok((pooled, logits))
}

/// Full forward pass on the tape with the given parameter handles
/// (as returned for `state.params()` order).
pub fn forward_tape(tape: &mut Tape, params: &[Var], state: &ModelState, batch: &GraphBatch) -> Result<TapeForward> {
    if batch.features.cols() != state.feature_dim() {
        return Err(Error::dim(
            "forward",
            format!("batch feature width {} != model feature dim {}", batch.features.cols(), state.feature_dim()),
        ));
    }
    let node_embeddings = encode(tape, params, state, batch)?;
    let k = params.len();
    let (pooled, logits) = head_tape(tape, node_embeddings, params[k - 2], params[k - 1], batch)?;
    Ok(TapeForward {
        node_embeddings,
        pooled,
        logits,
    })
}

/// Inference outputs for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// `[num_nodes × hidden]`, final layer, before pooling.
    pub node_embeddings: Tensor,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardOutput {
    /// Argmax of `probs`; the first maximum wins ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn forward(state: &ModelState, graph: &Graph) -> Result<ForwardOutput> {
    Ok(forward_batch(state, &[graph])?.pop().expect("one output"))
}

/// Inference over several graphs in one tape evaluation.
pub fn forward_batch(state: &ModelState, graphs: &[&Graph]) -> Result<Vec<ForwardOutput>> {
    let batch = GraphBatch::new(graphs, state.feature_dim())?;
    let mut tape = Tape::new();
    let params = params_on_tape(&mut tape, state, false);
    let out = forward_tape(&mut tape, &params, state, &batch)?;
    let probs = tape.softmax_rows(out.logits)?;
    let emb = tape.value(out.node_embeddings);
    let h = emb.cols();
    Ok((0..batch.num_graphs())
        .map(|g| {
            let (off, size) = (batch.offsets[g], batch.sizes[g]);
            ForwardOutput {
                node_embeddings: Tensor::new(size, h, emb.data()[off * h..(off + size) * h].to_vec())
                    .expect("shape"),
                pooled: tape.value(out.pooled).row_slice(g).to_vec(),
                logits: tape.value(out.logits).row_slice(g).to_vec(),
                probs: tape.value(probs).row_slice(g).to_vec(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelState};

    fn graph(n: usize, edges: Vec<(usize, usize)>, feats: Vec<f64>, d: usize) -> Graph {
        Graph::new(n, edges, Tensor::new(n, d, feats).unwrap(), None).unwrap()
    }

    fn small(arch: Arch) -> ModelState {
        ModelState::init(&ModelConfig {
            arch,
            num_layers: 2,
            hidden_dim: 6,
            num_classes: 2,
            feature_dim: 3,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn gin_layer_closed_form() {
        // One GIN layer with identity weights, zero biases, eps = 0.5:
        // h' = ReLU(ReLU((1.5·h_v + h_u))), two nodes joined by an edge.
        let cfg = ModelConfig {
            arch: Arch::GIN,
            num_layers: 1,
            hidden_dim: 2,
            num_classes: 2,
            feature_dim: 2,
            seed: 0,
        };
        let mut st = ModelState::init(&cfg).unwrap();
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        st.layers[0] = Layer::Gin {
            w1: eye.clone(),
            b1: Tensor::zeros(1, 2),
            w2: eye.clone(),
            b2: Tensor::zeros(1, 2),
            eps: Tensor::scalar(0.5),
        };
        st.cls_w = eye;
        let g = graph(2, vec![(0, 1)], vec![1.0, -2.0, 3.0, 0.5], 2);
        let out = forward(&st, &g).unwrap();
        // node0: 1.5·[1,-2] + [3,0.5] = [4.5,-2.5] -> [4.5,0]
        // node1: 1.5·[3,0.5] + [1,-2] = [5.5,-1.25] -> [5.5,0]
        assert_eq!(out.node_embeddings.data(), &[4.5, 0.0, 5.5, 0.0]);
        assert_eq!(out.pooled, vec![5.0, 0.0]);
        assert_eq!(out.logits, vec![5.0, 0.0]);
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let st = small(Arch::GIN);
        let a = graph(2, vec![], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 3);
        let single = graph(1, vec![], vec![1.0, 0.0, 0.0], 3);
        let fa = forward(&st, &a).unwrap();
        let fs = forward(&st, &single).unwrap();
        assert_eq!(fa.node_embeddings.row_slice(0), fs.node_embeddings.row_slice(0));
    }

    #[test]
    fn pooling_and_classifier_identities() {
        for arch in [Arch::GIN, Arch::GCN] {
            let st = small(arch);
            let g = graph(4, vec![(0, 1), (1, 2), (2, 3), (0, 2)], (0..12).map(|i| (i % 3) as f64).collect(), 3);
            let out = forward(&st, &g).unwrap();
            for k in 0..6 {
                let m: f64 = (0..4).map(|v| out.node_embeddings.get(v, k)).sum::<f64>() / 4.0;
                assert!((m - out.pooled[k]).abs() < 1e-12);
            }
            for c in 0..2 {
                let y: f64 = (0..6).map(|k| out.pooled[k] * st.cls_w.get(k, c)).sum::<f64>() + st.cls_b.get(0, c);
                assert!((y - out.logits[c]).abs() < 1e-12);
            }
            assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relabelled_graph_same_logits() {
        for arch in [Arch::GIN, Arch::GCN] {
            let st = small(arch);
            let g = graph(4, vec![(0, 1), (1, 2), (2, 3)], (0..12).map(|i| (i % 5) as f64 * 0.3).collect(), 3);
            let p = g.permute(&[2, 0, 3, 1]).unwrap();
            let (a, b) = (forward(&st, &g).unwrap(), forward(&st, &p).unwrap());
            for c in 0..2 {
                assert!((a.logits[c] - b.logits[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let st = small(Arch::GIN);
        let g = graph(1, vec![], vec![1.0, 0.0], 2);
        assert!(matches!(forward(&st, &g), Err(Error::Dimension { .. })));
    }

    #[test]
    fn batched_matches_single() {
        let st = small(Arch::GIN);
        let g1 = graph(3, vec![(0, 1), (1, 2)], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3);
        let g2 = graph(2, vec![(0, 1)], vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0], 3);
        let b = forward_batch(&st, &[&g1, &g2]).unwrap();
        let s2 = forward(&st, &g2).unwrap();
        for c in 0..2 {
            assert!((b[1].logits[c] - s2.logits[c]).abs() < 1e-12);
        }
    }
}
