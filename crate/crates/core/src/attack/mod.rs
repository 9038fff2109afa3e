//! Explanation-guided model extraction.
//!
//! Phase 1 ([`collect_training_set`]) spends the query budget on a uniform
//! sample of the shadow set and derives zero-cost augmentations from each
//! answer by intervening on its least important ("style") nodes. Phase 2
//! ([`train_surrogate`]) fits a surrogate to the oracle's labels while
//! aligning the surrogate's Graph-CAM rankings with the oracle's.

mod augment;
mod loss;
mod train;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::explain::ExplanationVector;
use crate::graph::Graph;
use crate::model::{ModelConfig, TrainConfig};
use crate::oracle::QueryRecord;
use crate::{Error, Result};

pub use augment::{augment_edge_perturb, augment_node_drop, collect_training_set, select_style_nodes, StylePlan};
pub use loss::{mse_alignment_loss, mse_alignment_value, pair_loss, rank_alignment_loss, rank_alignment_value};
pub use train::{teacher_student, train_surrogate, TrainingSample};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignMode {
    /// Pairwise ranking loss on node scores.
    #[default]
    Rank,
    /// Mean squared difference of raw scores.
    #[serde(alias = "Mse", alias = "mse")]
    MSE,
    /// Prediction loss only.
    None,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rank" => Ok(AlignMode::Rank),
            "mse" => Ok(AlignMode::MSE),
            "none" => Ok(AlignMode::None),
            _ => Err(Error::Config(format!("unknown align mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Fraction of nodes treated as style nodes.
    pub alpha: f64,
    /// Fraction of style nodes removed by a node-drop augment.
    pub beta: f64,
    /// Augments per query; even `k` drops nodes, odd `k` perturbs edges.
    pub k_augments: usize,
    pub edge_perturb_prob: f64,
    pub lambda: f64,
    pub align_mode: AlignMode,
    pub augment: bool,
    /// Train on the oracle's probabilities when it returns them. Off by
    /// default: the attacker's loss then sees only the oracle label and
    /// explanation.
    pub soft_labels: bool,
    /// Cap on ranked pairs per graph; `None` uses all pairs.
    pub max_pairs: Option<usize>,
    pub surrogate: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: crate::diff::AdamConfig,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            alpha: 0.2,
            beta: 0.5,
            k_augments: 2,
            edge_perturb_prob: 0.1,
            lambda: 1.0,
            align_mode: AlignMode::Rank,
            augment: true,
            soft_labels: false,
            max_pairs: None,
            surrogate: ModelConfig::default(),
            epochs: 200,
            batch_size: 64,
            adam: Default::default(),
            seed: 41,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("edge_perturb_prob", self.edge_perturb_prob)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if self.max_pairs == Some(0) {
            return Err(Error::Config("max_pairs must be positive".into()));
        }
        self.surrogate.validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentKind {
    NodeDrop,
    EdgePerturb,
}

/// A labelled sample derived from a query without asking the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub graph: Graph,
    pub label: usize,
    pub explanation: ExplanationVector,
    /// Index of the source record in the query list.
    pub origin: usize,
    pub kind: AugmentKind,
    /// Node `i` of `graph` is node `kept[i]` of the origin graph.
    pub kept: Vec<usize>,
}

/// Phase 1 output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub queries: Vec<QueryRecord>,
    pub augments: Vec<AugmentedSample>,
    /// Augments skipped because they would have emptied the graph.
    pub skipped: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DumpLine {
    Query(QueryRecord),
    Augment(AugmentedSample),
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.queries.len() + self.augments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty() && self.augments.is_empty()
    }

    /// JSON lines: every query record, then every augment, each tagged with
    /// `"kind"`.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut *w, &DumpLine::Query(q.clone()))?;
            w.write_all(b"\n")?;
        }
        for a in &self.augments {
            serde_json::to_writer(&mut *w, &DumpLine::Augment(a.clone()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let mut set = TrainingSet::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line).map_err(|e| Error::Format {
                file: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })? {
                DumpLine::Query(q) => set.queries.push(q),
                DumpLine::Augment(a) => set.augments.push(a),
            }
        }
        Ok(set)
    }
}
