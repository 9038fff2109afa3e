use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde_json::Value;

use super::wire::{self, ErrorResponse, QueryResponse, Request, StatusResponse};
use super::{OracleError, QueryOracle, QueryRecord};
use crate::explain::{ExplainMethod, ExplanationVector};
use crate::graph::Graph;

/// Client for a served oracle. Mirrors the in-process contract.
#[derive(Debug)]
pub struct RemoteOracle {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
    explainer: ExplainMethod,
    last_remaining: Option<usize>,
}

impl RemoteOracle {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, OracleError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        let mut client = RemoteOracle {
            reader: BufReader::new(stream),
            writer,
            next_id: 0,
            explainer: ExplainMethod::External,
            last_remaining: None,
        };
        let st = client.status()?;
        client.explainer = st.explainer;
        Ok(client)
    }

    pub fn explainer(&self) -> ExplainMethod {
        self.explainer
    }

    /// Budget reported with the most recent response, if any.
    pub fn last_remaining(&self) -> Option<usize> {
        self.last_remaining
    }

    fn round_trip(&mut self, op: &str, graph: Option<&Graph>) -> Result<(u64, Value), OracleError> {
        self.next_id += 1;
        let id = self.next_id;
        let req = Request {
            id: Value::from(id),
            op: op.to_string(),
            graph: graph.cloned(),
        };
        let mut line = serde_json::to_string(&req).map_err(|e| OracleError::Decode(e.to_string()))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let mut resp = String::new();
        if self.reader.read_line(&mut resp)? == 0 {
            return Err(OracleError::Connection(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            )));
        }
        let v: Value = serde_json::from_str(&resp).map_err(|e| OracleError::Decode(e.to_string()))?;
        if v.get("id") != Some(&Value::from(id)) {
            return Err(OracleError::Decode(format!("response id mismatch: {resp}")));
        }
        if v.get("error").is_some() {
            let e: ErrorResponse = serde_json::from_value(v).map_err(|e| OracleError::Decode(e.to_string()))?;
            return Err(match e.error.as_str() {
                wire::BUDGET_EXHAUSTED => OracleError::BudgetExhausted,
                wire::DIMENSION_MISMATCH => OracleError::DimensionMismatch {
                    expected: 0,
                    got: graph.map_or(0, Graph::feature_dim),
                },
                other => OracleError::BadRequest(other.to_string()),
            });
        }
        Ok((id, v))
    }

    pub fn status(&mut self) -> Result<StatusResponse, OracleError> {
        let (_, v) = self.round_trip("status", None)?;
        let st: StatusResponse = serde_json::from_value(v).map_err(|e| OracleError::Decode(e.to_string()))?;
        self.last_remaining = Some(st.remaining_budget);
        Ok(st)
    }
}

impl QueryOracle for RemoteOracle {
    fn query(&mut self, graph: &Graph) -> Result<QueryRecord, OracleError> {
        let (_, v) = self.round_trip("query", Some(graph))?;
        let r: QueryResponse = serde_json::from_value(v).map_err(|e| OracleError::Decode(e.to_string()))?;
        if r.explanation.len() != graph.num_nodes() {
            return Err(OracleError::Decode(format!(
                "explanation has {} scores for {} nodes",
                r.explanation.len(),
                graph.num_nodes()
            )));
        }
        self.last_remaining = Some(r.remaining_budget);
        Ok(QueryRecord {
            graph: graph.clone(),
            predicted_label: r.label,
            probs: r.probs,
            explanation: ExplanationVector {
                scores: r.explanation,
                class_used: r.label,
                method: self.explainer,
            },
        })
    }

    fn remaining_budget(&mut self) -> Result<usize, OracleError> {
        Ok(self.status()?.remaining_budget)
    }
}
