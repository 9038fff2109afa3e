use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AlignMode, AttackConfig};
use crate::explain::ExplainMethod;
use crate::graph::{load_tu_dataset, Dataset, MotifConfig, SplitSpec};
use crate::model::{ModelConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Motif(MotifConfig),
    /// TU benchmark files `<dir>/<name>_A.txt` etc.
    Tu { dir: PathBuf, name: String },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Motif(MotifConfig::default())
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Motif(m) => Ok(m.generate().dataset),
            DatasetSpec::Tu { dir, name } => load_tu_dataset(dir, name),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Target,
    #[serde(rename = "ts")]
    TS,
    MseAlign,
    NoAug,
    NoAlign,
    Full,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Target,
        Method::TS,
        Method::MseAlign,
        Method::NoAug,
        Method::NoAlign,
        Method::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Target => "target",
            Method::TS => "ts",
            Method::MseAlign => "mse-align",
            Method::NoAug => "no-aug",
            Method::NoAlign => "no-align",
            Method::Full => "full",
        }
    }

    /// Alignment and augmentation switches; `None` for the target row and the
    /// teacher-student baseline, which have their own training paths.
    pub fn switches(self) -> Option<(AlignMode, bool)> {
        match self {
            Method::Target | Method::TS => None,
            Method::MseAlign => Some((AlignMode::MSE, false)),
            Method::NoAug => Some((AlignMode::Rank, false)),
            Method::NoAlign => Some((AlignMode::None, true)),
            Method::Full => Some((AlignMode::Rank, true)),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    #[default]
    InProcess,
    /// A loopback TCP service per cell, queried through the wire client.
    Tcp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    /// `split.seed` is replaced by the run seed.
    pub split: SplitSpec,
    /// `seed`, `feature_dim` and `num_classes` are filled in per run.
    pub target: ModelConfig,
    pub target_train: TrainConfig,
    pub explainer: ExplainMethod,
    pub return_probs: bool,
    /// `surrogate.seed`, `seed`, `align_mode` and `augment` are filled in per
    /// run and method.
    pub attack: AttackConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Query budget as a fraction of the shadow set, floored.
    pub budget_fraction: f64,
    /// Absolute budget; overrides `budget_fraction`.
    pub budget: Option<usize>,
    pub oracle: OracleMode,
    /// Worker threads; `None` uses the machine's parallelism.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "motif".into(),
            output_dir: PathBuf::from("results"),
            dataset: DatasetSpec::default(),
            split: SplitSpec::default(),
            target: ModelConfig::default(),
            target_train: TrainConfig::default(),
            explainer: ExplainMethod::GraphCAM,
            return_probs: true,
            attack: AttackConfig::default(),
            methods: vec![Method::Target, Method::TS, Method::Full],
            seeds: vec![41, 42, 43, 44, 45],
            budget_fraction: 0.30,
            budget: None,
            oracle: OracleMode::InProcess,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "budget_fraction = {} outside (0, 1]",
                self.budget_fraction
            )));
        }
        if self.budget == Some(0) {
            return Err(Error::Config("budget must be positive".into()));
        }
        self.split.validate()?;
        let mut attack = self.attack.clone();
        attack.surrogate.feature_dim = attack.surrogate.feature_dim.max(1);
        attack.validate()
    }

    /// Budget for a shadow set of `shadow_len` graphs.
    pub fn budget_for(&self, shadow_len: usize) -> Result<usize> {
        let q = match self.budget {
            Some(q) => q,
            None => crate::graph::frac_floor(self.budget_fraction, shadow_len),
        };
        if q == 0 || q > shadow_len {
            return Err(Error::Config(format!(
                "budget {q} not in 1..={shadow_len} (shadow size)"
            )));
        }
        Ok(q)
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

/// Parses TOML text, then applies `key.path=value` overrides. Values parse as
/// TOML (`0.5`, `[41, 42]`, `true`, `"GIN"`); anything that fails to parse is
/// taken as a bare string.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut parts: Vec<&str> = key.trim().split('.').collect();
        let last = parts.pop().expect("split yields one part");
        let mut cur = &mut table;
        for p in parts {
            cur = cur
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a section")))?;
        }
        cur.insert(last.to_string(), value);
    }
    if let Some(toml::Value::Table(ds)) = table.get_mut("dataset") {
        ds.entry("kind").or_insert_with(|| "motif".into());
    }
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Reads a config file (or starts from defaults when `path` is `None`).
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(p.to_path_buf()),
            _ => e.into(),
        })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
name = "x"
seeds = [1, 2]
methods = ["target", "ts", "full", "no-align"]

[dataset]
kind = "motif"
n_graphs = 40

[attack]
lambda = 2.0
align_mode = "MSE"
"#;
        let c = parse_config(text, &["attack.alpha=0.3".into(), "seeds=[7]".into(), "name=run-b".into()]).unwrap();
        assert_eq!(c.name, "run-b");
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.attack.alpha, 0.3);
        assert_eq!(c.attack.lambda, 2.0);
        assert_eq!(c.attack.align_mode, AlignMode::MSE);
        assert_eq!(c.methods.len(), 4);
        match c.dataset {
            DatasetSpec::Motif(m) => assert_eq!(m.n_graphs, 40),
            _ => panic!("wrong dataset kind"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_config("seeds = []", &[]).is_err());
        assert!(parse_config("budget_fraction = 1.5", &[]).is_err());
        assert!(parse_config("bogus = 1", &[]).is_err());
        assert!(parse_config("", &["attack.alpha=2".into()]).is_err());
    }

    #[test]
    fn dataset_kind_defaults_to_motif() {
        let c = parse_config("", &["dataset.type_noise=0.05".into()]).unwrap();
        match c.dataset {
            DatasetSpec::Motif(m) => assert_eq!(m.type_noise, 0.05),
            _ => panic!("wrong dataset kind"),
        }
    }

    #[test]
    fn budget_from_fraction() {
        let c = ExperimentConfig::default();
        assert_eq!(c.budget_for(320).unwrap(), 96);
        let c = ExperimentConfig {
            budget: Some(500),
            ..Default::default()
        };
        assert!(c.budget_for(320).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(s, format!("\"{}\"", m.name()));
        }
    }
}
