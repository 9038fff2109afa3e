//! Planted-motif graph classification data.
//!
//! Each graph is an Erdős–Rényi base graph with a motif attached by a single
//! edge: class 1 carries a 5-cycle, class 0 a 4-clique. Node features are
//! one-hot over seven synthetic atom types. Base nodes mostly draw from types
//! 0..=3 and motif nodes mostly from 4..=6, with the same distributions for
//! both classes, so the label is decided by motif structure while the
//! features mark where the motif sits.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, Graph};
use crate::diff::Tensor;
use crate::rng;

pub const NUM_ATOM_TYPES: usize = 7;
const BASE_TYPES: [usize; 4] = [0, 1, 2, 3];
const MOTIF_TYPES: [usize; 3] = [4, 5, 6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotifConfig {
    pub n_graphs: usize,
    pub seed: u64,
    pub min_base_nodes: usize,
    pub max_base_nodes: usize,
    pub edge_prob: f64,
    /// Probability that a node draws its type from the other group.
    pub type_noise: f64,
}

impl Default for MotifConfig {
    fn default() -> Self {
        MotifConfig {
            n_graphs: 800,
            seed: 41,
            min_base_nodes: 10,
            max_base_nodes: 20,
            edge_prob: 0.2,
            type_noise: 0.15,
        }
    }
}

/// A generated dataset together with the node indices of each planted motif.
#[derive(Clone, Debug)]
pub struct MotifDataset {
    pub dataset: Dataset,
    pub motifs: Vec<Vec<usize>>,
}

/// Balanced planted-motif dataset with the default shape parameters.
pub fn generate_motif_dataset(n_graphs: usize, seed: u64) -> Dataset {
    MotifConfig {
        n_graphs,
        seed,
        ..MotifConfig::default()
    }
    .generate()
    .dataset
}

impl MotifConfig {
    pub fn generate(&self) -> MotifDataset {
        let mut rng = rng::stream(self.seed, "motif");
        let mut labels: Vec<usize> = (0..self.n_graphs).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);

        let mut graphs = Vec::with_capacity(self.n_graphs);
        let mut motifs = Vec::with_capacity(self.n_graphs);
        for &label in &labels {
            let base = rng.gen_range(self.min_base_nodes..=self.max_base_nodes.max(self.min_base_nodes));
            let motif_size = if label == 1 { 5 } else { 4 };
            let n = base + motif_size;

            let mut edges = Vec::new();
            for u in 0..base {
                for v in u + 1..base {
                    if rng.gen::<f64>() < self.edge_prob {
                        edges.push((u, v));
                    }
                }
            }
            let motif: Vec<usize> = (base..n).collect();
            if label == 1 {
                for i in 0..5 {
                    edges.push((motif[i], motif[(i + 1) % 5]));
                }
            } else {
                for i in 0..4 {
                    for j in i + 1..4 {
                        edges.push((motif[i], motif[j]));
                    }
                }
            }
            if base > 0 {
                let a = motif[rng.gen_range(0..motif_size)];
                let b = rng.gen_range(0..base);
                edges.push((a, b));
            }

            let mut feats = Tensor::zeros(n, NUM_ATOM_TYPES);
            for v in 0..n {
                let in_motif = v >= base;
                let flip = rng.gen::<f64>() < self.type_noise;
                let pool: &[usize] = if in_motif != flip { &MOTIF_TYPES } else { &BASE_TYPES };
                let t = pool[rng.gen_range(0..pool.len())];
                feats.set(v, t, 1.0);
            }
            graphs.push(Graph::new(n, edges, feats, Some(label)).expect("generator produces valid graphs"));
            motifs.push(motif);
        }
        let dataset = Dataset::new(format!("motif-{}-{}", self.n_graphs, self.seed), graphs, 2, NUM_ATOM_TYPES)
            .expect("generator produces a valid dataset");
        MotifDataset { dataset, motifs }
    }
}
