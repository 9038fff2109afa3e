use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{AttackConfig, AugmentKind, AugmentedSample, TrainingSet};
use crate::explain::ExplanationVector;
use crate::graph::{frac_floor, Dataset};
use crate::oracle::{QueryOracle, QueryRecord};
use crate::{rng, Error, Result};

/// Partition of a queried graph into low-importance style nodes and the rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StylePlan {
    /// Ascending node indices.
    pub style_nodes: Vec<usize>,
    pub causal_nodes: Vec<usize>,
}

impl StylePlan {
    pub fn is_style(&self, v: usize) -> bool {
        self.style_nodes.binary_search(&v).is_ok()
    }
}

/// The `floor(alpha * n)` lowest-scoring nodes; equal scores rank by node index.
pub fn select_style_nodes(explanation: &ExplanationVector, alpha: f64) -> Result<StylePlan> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha = {alpha} outside [0, 1]")));
    }
    let n = explanation.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| explanation.scores[a].total_cmp(&explanation.scores[b]).then(a.cmp(&b)));
    let m = frac_floor(alpha, n);
    let mut style_nodes = order[..m].to_vec();
    style_nodes.sort_unstable();
    let causal_nodes = (0..n).filter(|v| style_nodes.binary_search(v).is_err()).collect();
    Ok(StylePlan {
        style_nodes,
        causal_nodes,
    })
}

/// Removes `floor(beta * |V_S|)` uniformly chosen style nodes. Returns `None`
/// when nothing would be left.
pub fn augment_node_drop(
    record: &QueryRecord,
    origin: usize,
    plan: &StylePlan,
    beta: f64,
    rng: &mut rng::Rng,
) -> Result<Option<AugmentedSample>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta = {beta} outside [0, 1]")));
    }
    let n = record.graph.num_nodes();
    let m = frac_floor(beta, plan.style_nodes.len());
    let mut dropped = vec![false; n];
    for &v in plan.style_nodes.choose_multiple(rng, m) {
        dropped[v] = true;
    }
    let kept: Vec<usize> = (0..n).filter(|&v| !dropped[v]).collect();
    if kept.is_empty() {
        return Ok(None);
    }
    Ok(Some(AugmentedSample {
        graph: record.graph.induced_subgraph(&kept)?,
        label: record.predicted_label,
        explanation: record.explanation.restrict(&kept),
        origin,
        kind: AugmentKind::NodeDrop,
        kept,
    }))
}

/// Toggles each node pair inside the style set with probability `p`: edges are
/// removed, non-edges added. One draw per pair, pairs in ascending order.
pub fn augment_edge_perturb(
    record: &QueryRecord,
    origin: usize,
    plan: &StylePlan,
    p: f64,
    rng: &mut rng::Rng,
) -> Result<AugmentedSample> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("edge_perturb_prob = {p} outside [0, 1]")));
    }
    let g = &record.graph;
    let mut flip = Vec::new();
    for (i, &u) in plan.style_nodes.iter().enumerate() {
        for &v in &plan.style_nodes[i + 1..] {
            if rng.gen::<f64>() < p {
                flip.push((u, v));
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .copied()
        .filter(|e| flip.binary_search(e).is_err())
        .collect();
    edges.extend(flip.iter().copied().filter(|&(u, v)| !g.has_edge(u, v)));
    Ok(AugmentedSample {
        graph: g.with_edges(edges)?,
        label: record.predicted_label,
        explanation: record.explanation.clone(),
        origin,
        kind: AugmentKind::EdgePerturb,
        kept: (0..g.num_nodes()).collect(),
    })
}

/// Queries `budget` shadow graphs (uniform, without replacement) and, when
/// `config.augment`, derives `k_augments` samples from every answer.
///
/// Shadow labels are stripped before querying. Any oracle refusal aborts.
pub fn collect_training_set(
    oracle: &mut dyn QueryOracle,
    shadow: &Dataset,
    budget: usize,
    config: &AttackConfig,
) -> Result<TrainingSet> {
    if budget == 0 {
        return Err(Error::Config("query budget must be positive".into()));
    }
    if budget > shadow.len() {
        return Err(Error::Config(format!(
            "budget {budget} exceeds shadow size {}",
            shadow.len()
        )));
    }
    let mut order: Vec<usize> = (0..shadow.len()).collect();
    order.shuffle(&mut rng::stream(config.seed, "queries"));
    let mut set = TrainingSet::default();
    for &i in &order[..budget] {
        let g = shadow.graphs()[i].clone().with_label(None);
        set.queries.push(oracle.query(&g)?);
    }
    if !config.augment {
        return Ok(set);
    }
    let mut aug_rng = rng::stream(config.seed, "augment");
    for (origin, record) in set.queries.iter().enumerate() {
        let plan = select_style_nodes(&record.explanation, config.alpha)?;
        for k in 0..config.k_augments {
            if k % 2 == 0 {
                match augment_node_drop(record, origin, &plan, config.beta, &mut aug_rng)? {
                    Some(s) => set.augments.push(s),
                    None => {
                        log::warn!("node drop on query {origin} would empty the graph; skipped");
                        set.skipped += 1;
                    }
                }
            } else {
                set.augments
                    .push(augment_edge_perturb(record, origin, &plan, config.edge_perturb_prob, &mut aug_rng)?);
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::explain::ExplainMethod;
    use crate::graph::Graph;

    fn expl(scores: Vec<f64>) -> ExplanationVector {
        ExplanationVector {
            scores,
            class_used: 0,
            method: ExplainMethod::GraphCAM,
        }
    }

    fn record(g: Graph, scores: Vec<f64>) -> QueryRecord {
        QueryRecord {
            graph: g,
            predicted_label: 1,
            probs: Some(vec![0.3, 0.7]),
            explanation: expl(scores),
        }
    }

    #[test]
    fn style_selection() {
        let p = select_style_nodes(&expl(vec![0.9, 0.1, 0.5, 0.3]), 0.5).unwrap();
        assert_eq!(p.style_nodes, vec![1, 3]);
        assert_eq!(p.causal_nodes, vec![0, 2]);
        assert!(select_style_nodes(&expl(vec![0.9, 0.1]), 0.0).unwrap().style_nodes.is_empty());
        let tied = select_style_nodes(&expl(vec![1.0; 4]), 0.5).unwrap();
        assert_eq!(tied.style_nodes, vec![0, 1]);
    }

    #[test]
    fn node_drop_path() {
        let g = Graph::new(4, vec![(0, 1), (1, 2), (2, 3)], Tensor::zeros(4, 2), None).unwrap();
        let rec = record(g, vec![0.9, 0.1, 0.5, 0.3]);
        let plan = select_style_nodes(&rec.explanation, 0.5).unwrap();
        let mut r = rng::seeded(1);
        let s = augment_node_drop(&rec, 0, &plan, 1.0, &mut r).unwrap().unwrap();
        assert_eq!(s.kept, vec![0, 2]);
        assert_eq!(s.graph.num_edges(), 0);
        assert_eq!(s.explanation.scores, vec![0.9, 0.5]);
        assert_eq!(s.label, 1);
        let same = augment_node_drop(&rec, 0, &plan, 0.0, &mut r).unwrap().unwrap();
        assert_eq!(same.graph, rec.graph);
        assert_eq!(same.explanation, rec.explanation);
    }

    #[test]
    fn drop_everything_is_skipped() {
        let g = Graph::new(2, vec![(0, 1)], Tensor::zeros(2, 1), None).unwrap();
        let rec = record(g, vec![0.1, 0.2]);
        let plan = select_style_nodes(&rec.explanation, 1.0).unwrap();
        assert!(augment_node_drop(&rec, 0, &plan, 1.0, &mut rng::seeded(0)).unwrap().is_none());
    }

    #[test]
    fn perturb_triangle_at_p_one() {
        let g = Graph::new(4, vec![(0, 1), (0, 2), (1, 2), (2, 3)], Tensor::zeros(4, 1), None).unwrap();
        let rec = record(g.clone(), vec![0.0; 4]);
        let plan = StylePlan {
            style_nodes: vec![0, 1, 2],
            causal_nodes: vec![3],
        };
        let s = augment_edge_perturb(&rec, 0, &plan, 1.0, &mut rng::seeded(0)).unwrap();
        assert_eq!(s.graph.edges(), &[(2, 3)]);
        let plan4 = StylePlan {
            style_nodes: vec![0, 1, 3],
            causal_nodes: vec![2],
        };
        let s = augment_edge_perturb(&rec, 0, &plan4, 1.0, &mut rng::seeded(0)).unwrap();
        assert_eq!(s.graph.edges(), &[(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let s = augment_edge_perturb(&rec, 0, &plan4, 0.0, &mut rng::seeded(0)).unwrap();
        assert_eq!(s.graph, g);
        let empty = StylePlan {
            style_nodes: vec![],
            causal_nodes: vec![0, 1, 2, 3],
        };
        let s = augment_edge_perturb(&rec, 0, &empty, 1.0, &mut rng::seeded(0)).unwrap();
        assert_eq!(s.graph, g);
    }
}
