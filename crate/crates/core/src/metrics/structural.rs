use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;

/// Sixteen structural descriptors of one graph:
///
/// | idx    | feature                                                     |
/// |--------|-------------------------------------------------------------|
/// | 0..5   | degree mean, std, p25, median, p75                          |
/// | 5..10  | local clustering mean, std, p25, median, p75                |
/// | 10     | diameter of the largest connected component                 |
/// | 11..16 | five largest adjacency eigenvalues, descending, zero-padded |
///
/// Standard deviations are population (divide by n); percentiles interpolate
/// linearly between closest ranks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralFeatures(pub [f64; 16]);

impl StructuralFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.0[11..16]
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summary(values: &[f64]) -> [f64; 5] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    [mean, std, percentile(&s, 0.25), percentile(&s, 0.5), percentile(&s, 0.75)]
}

fn clustering(adj: &[Vec<usize>]) -> Vec<f64> {
    adj.iter()
        .map(|nb| {
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if adj[a].binary_search(&b).is_ok() {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        let d = dist[u].expect("visited");
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Diameter of the largest connected component (lowest node index wins size ties).
fn largest_component_diameter(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    let mut comp = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = bfs(adj, s)
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|_| v))
            .collect();
        for &v in &members {
            comp[v] = s;
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.iter()
        .map(|&s| bfs(adj, s).iter().filter_map(|d| *d).max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

pub fn structural_features(graph: &Graph) -> StructuralFeatures {
    let n = graph.num_nodes();
    let adj = graph.adjacency();
    let degrees: Vec<f64> = adj.iter().map(|a| a.len() as f64).collect();
    let mut out = [0.0; 16];
    out[0..5].copy_from_slice(&summary(&degrees));
    out[5..10].copy_from_slice(&summary(&clustering(&adj)));
    out[10] = largest_component_diameter(&adj) as f64;

    let mut a = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in graph.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let mut eig: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    for (slot, v) in out[11..16].iter_mut().zip(eig) {
        *slot = v;
    }
    StructuralFeatures(out)
}
