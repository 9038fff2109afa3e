//! Newline-delimited JSON protocol.
//!
//! One UTF-8 JSON object per line in each direction. Requests:
//!
//! ```text
//! {"id":1,"op":"query","graph":{"num_nodes":n,"edges":[[u,v],...],"features":[[...],...]}}
//! {"id":2,"op":"status"}
//! ```
//!
//! Responses echo `id`:
//!
//! ```text
//! {"id":1,"label":0,"probs":[0.7,0.3],"explanation":[...],"remaining_budget":119}
//! {"id":2,"remaining_budget":119,"explainer":"GraphCAM"}
//! {"id":3,"error":"budget_exhausted"}        also "bad_request", "dimension_mismatch"
//! ```
//!
//! Floats are written in shortest round-trip form and parsed exactly, so
//! every `f64` survives the trip bit-for-bit.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Oracle, OracleError};
use crate::explain::ExplainMethod;
use crate::graph::Graph;

pub const BUDGET_EXHAUSTED: &str = "budget_exhausted";
pub const BAD_REQUEST: &str = "bad_request";
pub const DIMENSION_MISMATCH: &str = "dimension_mismatch";

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    #[serde(default)]
    pub id: Value,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<Graph>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    pub id: Value,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    pub explanation: Vec<f64>,
    pub remaining_budget: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub id: Value,
    pub remaining_budget: usize,
    pub explainer: ExplainMethod,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: Value,
    pub error: String,
}

fn error_line(id: Value, code: &str) -> String {
    serde_json::to_string(&ErrorResponse {
        id,
        error: code.to_string(),
    })
    .expect("serialisable")
}

/// Serves one request line against `oracle`, returning the response line
/// (without trailing newline).
pub fn handle_line(oracle: &Oracle, line: &str) -> String {
    let raw: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => return error_line(Value::Null, BAD_REQUEST),
    };
    let id = raw.get("id").cloned().unwrap_or(Value::Null);
    let req: Request = match serde_json::from_value(raw) {
        Ok(r) => r,
        Err(_) => return error_line(id, BAD_REQUEST),
    };
    match req.op.as_str() {
        "status" => serde_json::to_string(&StatusResponse {
            id,
            remaining_budget: oracle.remaining(),
            explainer: oracle.explainer(),
        })
        .expect("serialisable"),
        "query" => {
            let Some(graph) = req.graph else {
                return error_line(id, BAD_REQUEST);
            };
            match oracle.answer(&graph) {
                Ok((rec, remaining)) => serde_json::to_string(&QueryResponse {
                    id,
                    label: rec.predicted_label,
                    probs: rec.probs,
                    explanation: rec.explanation.scores,
                    remaining_budget: remaining,
                })
                .expect("serialisable"),
                Err(OracleError::BudgetExhausted) => error_line(id, BUDGET_EXHAUSTED),
                Err(OracleError::DimensionMismatch { .. }) => error_line(id, DIMENSION_MISMATCH),
                Err(_) => error_line(id, BAD_REQUEST),
            }
        }
        _ => error_line(id, BAD_REQUEST),
    }
}
