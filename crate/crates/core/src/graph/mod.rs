//! Graphs, datasets and everything that produces or reshapes them.

mod motif;
mod split;
mod tu;

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::{Error, Result};

pub use motif::{generate_motif_dataset, MotifConfig, MotifDataset};
pub(crate) use split::frac_floor;
pub use split::{split, Split, SplitSpec};
pub use tu::{load_tu_dataset, write_tu_dataset};

/// An undirected, attributed graph.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted and deduplicated.
/// Self-loops are dropped on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    label: Option<usize>,
}

/// JSON form: `{"num_nodes":n,"edges":[[u,v],...],"features":[[...],...]}`.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        let width = r.features.first().map_or(0, Vec::len);
        let features = if r.features.is_empty() {
            Tensor::zeros(0, 0)
        } else {
            Tensor::from_rows(&r.features)?
        };
        let features = if features.rows() == 0 {
            Tensor::zeros(0, width)
        } else {
            features
        };
        Graph::new(
            r.num_nodes,
            r.edges.into_iter().map(|[u, v]| (u, v)).collect(),
            features,
            r.label,
        )
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        let features = (0..g.num_nodes)
            .map(|r| g.features.row_slice(r).to_vec())
            .collect();
        GraphRepr {
            num_nodes: g.num_nodes,
            edges: g.edges.into_iter().map(|(u, v)| [u, v]).collect(),
            features,
            label: g.label,
        }
    }
}

impl Graph {
    /// Builds a graph, normalising the edge list.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        label: Option<usize>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::dim("graph", "a graph needs at least one node"));
        }
        if features.rows() != num_nodes {
            return Err(Error::dim(
                "graph",
                format!("{} feature rows for {num_nodes} nodes", features.rows()),
            ));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            let bad = u.max(v);
            if bad >= num_nodes {
                return Err(Error::Index {
                    op: "graph edge",
                    index: bad,
                    bound: num_nodes,
                });
            }
            if u != v {
                norm.push((u.min(v), u.max(v)));
            }
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Graph {
            num_nodes,
            edges: norm,
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim("permute", "not a permutation of the node set"));
        }
        let d = self.feature_dim();
        let mut feats = Tensor::zeros(n, d);
        for v in 0..n {
            for k in 0..d {
                feats.set(perm[v], k, self.features.get(v, k));
            }
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Graph::new(n, edges, feats, self.label)
    }

    /// Subgraph induced by `keep` (ascending, distinct), reindexed in that order.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Graph> {
        let mut new_index = vec![usize::MAX; self.num_nodes];
        for (i, &v) in keep.iter().enumerate() {
            if v >= self.num_nodes {
                return Err(Error::Index {
                    op: "induced_subgraph",
                    index: v,
                    bound: self.num_nodes,
                });
            }
            new_index[v] = i;
        }
        let d = self.feature_dim();
        let mut data = Vec::with_capacity(keep.len() * d);
        for &v in keep {
            data.extend_from_slice(self.features.row_slice(v));
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| new_index[u] != usize::MAX && new_index[v] != usize::MAX)
            .map(|&(u, v)| (new_index[u], new_index[v]))
            .collect();
        Graph::new(keep.len(), edges, Tensor::new(keep.len(), d, data)?, self.label)
    }

    /// Same nodes and features, different edge set.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Graph> {
        Graph::new(self.num_nodes, edges, self.features.clone(), self.label)
    }

    /// Features right-padded with zero columns up to `dim`.
    pub fn padded(&self, dim: usize) -> Result<Graph> {
        let d = self.feature_dim();
        if dim < d {
            return Err(Error::dim("pad_features", format!("target {dim} < feature dim {d}")));
        }
        let mut feats = Tensor::zeros(self.num_nodes, dim);
        for v in 0..self.num_nodes {
            for k in 0..d {
                feats.set(v, k, self.features.get(v, k));
            }
        }
        Ok(Graph {
            features: feats,
            ..self.clone()
        })
    }
}

/// A labelled collection of graphs sharing one feature width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::dim(
                    "dataset",
                    format!("graph {i} has feature width {}, expected {feature_dim}", g.feature_dim()),
                ));
            }
            if let Some(l) = g.label() {
                if l >= num_classes {
                    return Err(Error::Index {
                        op: "dataset label",
                        index: l,
                        bound: num_classes,
                    });
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Labels of every graph; errors if any graph is unlabelled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(i, g)| g.label().ok_or_else(|| Error::Config(format!("graph {i} has no label"))))
            .collect()
    }

    /// Subset by index, keeping order of `indices`.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }
}

/// Right-pads every feature row with zeros to `target_dim`.
pub fn pad_features(dataset: &Dataset, target_dim: usize) -> Result<Dataset> {
    if target_dim < dataset.feature_dim {
        return Err(Error::dim(
            "pad_features",
            format!("target {target_dim} < feature dim {}", dataset.feature_dim),
        ));
    }
    let graphs = dataset
        .graphs
        .iter()
        .map(|g| g.padded(target_dim))
        .collect::<Result<_>>()?;
    Dataset::new(dataset.name.clone(), graphs, dataset.num_classes, target_dim)
}
