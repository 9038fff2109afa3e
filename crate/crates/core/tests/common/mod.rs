//! Shared helpers for the integration tests.

#![allow(dead_code)]

pub mod gradcheck;

use graphsteal::diff::Tensor;
use graphsteal::graph::Graph;
use rand::Rng;

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Erdős–Rényi graph with uniform random features.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, dim: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges, random_tensor(rng, n, dim, -1.0, 1.0), None).unwrap()
}

pub mod budget {
    use std::sync::Arc;
    use std::thread;

    use graphsteal::explain::ExplainMethod;
    use graphsteal::model::{ModelConfig, ModelState};
    use graphsteal::oracle::{spawn_server, Oracle, OracleError, QueryOracle, RemoteOracle};
    use graphsteal::rng::seeded;

    pub const CLIENTS: usize = 4;
    pub const PER_CLIENT: usize = 50;

    pub fn small_model() -> Arc<ModelState> {
        Arc::new(
            ModelState::init(&ModelConfig {
                hidden_dim: 8,
                num_layers: 1,
                feature_dim: 3,
                ..ModelConfig::default()
            })
            .unwrap(),
        )
    }

    /// One served oracle with `budget`, four clients each trying
    /// `PER_CLIENT` queries. Returns the total number of answered queries,
    /// after checking that every refusal was a budget refusal and that a
    /// fresh connection is refused too.
    pub fn concurrent_trial(model: &Arc<ModelState>, budget: usize, seed: u64) -> usize {
        let oracle = Arc::new(Oracle::new(model.clone(), ExplainMethod::GraphCAM, budget, true));
        let server = spawn_server(oracle, "127.0.0.1:0").unwrap();
        let addr = server.local_addr();
        let workers: Vec<_> = (0..CLIENTS)
            .map(|c| {
                thread::spawn(move || {
                    let mut rng = seeded(seed * 31 + c as u64);
                    let g = super::random_graph(&mut rng, 6, 0.4, 3);
                    let mut client = RemoteOracle::connect(addr).unwrap();
                    let mut ok = 0;
                    for _ in 0..PER_CLIENT {
                        match client.query(&g) {
                            Ok(_) => ok += 1,
                            Err(OracleError::BudgetExhausted) => {}
                            Err(e) => panic!("unexpected oracle error: {e}"),
                        }
                    }
                    ok
                })
            })
            .collect();
        let total = workers.into_iter().map(|w| w.join().unwrap()).sum();
        let mut late = RemoteOracle::connect(addr).unwrap();
        let g = super::random_graph(&mut seeded(seed), 4, 0.5, 3);
        assert!(matches!(late.query(&g), Err(OracleError::BudgetExhausted)));
        assert_eq!(late.remaining_budget().unwrap(), 0);
        drop(late);
        server.shutdown();
        total
    }
}
