//! The target model behind a budgeted query interface.
//!
//! [`Oracle`] is the in-process form. [`serve`] exposes the same oracle over
//! TCP with newline-delimited JSON, and [`RemoteOracle`] is the matching
//! client. Both implement [`QueryOracle`], which is all the attack sees.

mod client;
mod server;
pub mod wire;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::{explain_prediction, ExplainMethod, ExplanationVector};
use crate::graph::Graph;
use crate::model::ModelState;

pub use client::RemoteOracle;
pub use server::{serve, spawn_server, ServerHandle};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("query budget exhausted")]
    BudgetExhausted,
    #[error("graph feature width {got} does not match the model's {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bad request: {0}")]
    BadRequest(String),
    /// Transport failure; the caller may reconnect and retry.
    #[error("connection error: {0}")]
    Connection(#[from] std::io::Error),
    /// The peer spoke something other than the protocol.
    #[error("protocol decode error: {0}")]
    Decode(String),
    #[error("internal oracle error: {0}")]
    Internal(String),
}

impl OracleError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, OracleError::Connection(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub model_path: PathBuf,
    pub explainer: ExplainMethod,
    pub budget: usize,
    pub return_probs: bool,
    pub listen_address: String,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            model_path: PathBuf::from("target.model"),
            explainer: ExplainMethod::GraphCAM,
            budget: 120,
            return_probs: true,
            listen_address: "127.0.0.1:7878".into(),
        }
    }
}

/// One answered query: one unit of budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub graph: Graph,
    pub predicted_label: usize,
    pub probs: Option<Vec<f64>>,
    pub explanation: ExplanationVector,
}

/// Anything that answers queries against a hidden target.
pub trait QueryOracle {
    fn query(&mut self, graph: &Graph) -> Result<QueryRecord, OracleError>;
    fn remaining_budget(&mut self) -> Result<usize, OracleError>;
}

/// In-process oracle. Shareable across threads; the budget is a single
/// atomic counter.
#[derive(Debug)]
pub struct Oracle {
    model: Arc<ModelState>,
    explainer: ExplainMethod,
    return_probs: bool,
    budget: AtomicUsize,
}

impl Oracle {
    pub fn new(model: Arc<ModelState>, explainer: ExplainMethod, budget: usize, return_probs: bool) -> Self {
        Oracle {
            model,
            explainer,
            return_probs,
            budget: AtomicUsize::new(budget),
        }
    }

    pub fn from_config(config: &OracleConfig) -> crate::Result<Self> {
        let model = crate::model::load_model(&config.model_path)?;
        Ok(Self::new(Arc::new(model), config.explainer, config.budget, config.return_probs))
    }

    pub fn explainer(&self) -> ExplainMethod {
        self.explainer
    }

    pub fn returns_probs(&self) -> bool {
        self.return_probs
    }

    pub fn remaining(&self) -> usize {
        self.budget.load(Ordering::SeqCst)
    }

    /// Answers one query, charging one unit of budget. Refusals (exhausted
    /// budget, wrong feature width) charge nothing and reveal no model output.
    pub fn answer(&self, graph: &Graph) -> Result<(QueryRecord, usize), OracleError> {
        let expected = self.model.feature_dim();
        if graph.feature_dim() != expected {
            return Err(OracleError::DimensionMismatch {
                expected,
                got: graph.feature_dim(),
            });
        }
        let before = self
            .budget
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |b| b.checked_sub(1))
            .map_err(|_| OracleError::BudgetExhausted)?;
        let (fwd, explanation) =
            explain_prediction(&self.model, graph, self.explainer).map_err(|e| OracleError::Internal(e.to_string()))?;
        let record = QueryRecord {
            graph: graph.clone(),
            predicted_label: fwd.predicted_class(),
            probs: self.return_probs.then_some(fwd.probs),
            explanation,
        };
        Ok((record, before - 1))
    }
}

impl QueryOracle for &Oracle {
    fn query(&mut self, graph: &Graph) -> Result<QueryRecord, OracleError> {
        self.answer(graph).map(|(r, _)| r)
    }

    fn remaining_budget(&mut self) -> Result<usize, OracleError> {
        Ok(self.remaining())
    }
}

impl QueryOracle for Oracle {
    fn query(&mut self, graph: &Graph) -> Result<QueryRecord, OracleError> {
        self.answer(graph).map(|(r, _)| r)
    }

    fn remaining_budget(&mut self) -> Result<usize, OracleError> {
        Ok(self.remaining())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::explain::graph_cam;
    use crate::model::{forward, ModelConfig};

    fn setup(budget: usize, probs: bool) -> (Oracle, Graph, ModelState) {
        let st = ModelState::init(&ModelConfig {
            hidden_dim: 8,
            feature_dim: 2,
            ..Default::default()
        })
        .unwrap();
        let g = Graph::new(3, vec![(0, 1), (1, 2)], Tensor::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap(), None)
            .unwrap();
        (Oracle::new(Arc::new(st.clone()), ExplainMethod::GraphCAM, budget, probs), g, st)
    }

    #[test]
    fn budget_counter() {
        let (o, g, _) = setup(1, true);
        assert!(o.answer(&g).is_ok());
        assert!(matches!(o.answer(&g), Err(OracleError::BudgetExhausted)));
        assert_eq!(o.remaining(), 0);
    }

    #[test]
    fn matches_local_forward_and_cam() {
        let (o, g, st) = setup(5, true);
        let (rec, left) = o.answer(&g).unwrap();
        assert_eq!(left, 4);
        let fwd = forward(&st, &g).unwrap();
        let c = fwd.predicted_class();
        assert_eq!(rec.predicted_label, c);
        assert_eq!(rec.probs.as_ref().unwrap(), &fwd.probs);
        assert_eq!(rec.explanation, graph_cam(&fwd, &st, c).unwrap());
    }

    #[test]
    fn hard_label_mode_hides_probs() {
        let (o, g, _) = setup(2, false);
        let (rec, _) = o.answer(&g).unwrap();
        assert!(rec.probs.is_none());
    }

    #[test]
    fn wrong_width_is_refused_for_free() {
        let (o, _, _) = setup(2, true);
        let bad = Graph::new(1, vec![], Tensor::zeros(1, 3), None).unwrap();
        assert!(matches!(o.answer(&bad), Err(OracleError::DimensionMismatch { expected: 2, got: 3 })));
        assert_eq!(o.remaining(), 2);
    }
}
