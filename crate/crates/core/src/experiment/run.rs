use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{summarize, sweep_csv, sweep_rows, write_summary_csv, CellReport, SummaryRow};
use super::{ExperimentConfig, Method, OracleMode};
use crate::attack::{collect_training_set, teacher_student, train_surrogate, AlignMode, AttackConfig, TrainingSet};
use crate::explain::{explain_with, graph_cam, ExplainMethod};
use crate::graph::{frac_floor, pad_features, split, Dataset, Graph, Split};
use crate::metrics::{
    fidelity, mmd_squared, rank_correlation, roc_auc, structural_features, EvalReport, StructuralFeatures, TauVariant,
    MMD_GAMMA,
};
use crate::model::{forward_batch, save_model, train_model_with_history, ModelConfig, ModelState};
use crate::oracle::{spawn_server, Oracle, QueryOracle, RemoteOracle};
use crate::{Error, Result};

/// Everything one seed's cells share: the split and the trained target.
#[derive(Clone, Debug)]
pub struct SeedContext {
    pub seed: u64,
    pub split: Split,
    pub target: Arc<ModelState>,
    pub target_report: EvalReport,
}

/// Splits `dataset` and trains the target for `seed`.
pub fn prepare_seed(config: &ExperimentConfig, dataset: &Dataset, seed: u64) -> Result<SeedContext> {
    let spec = crate::graph::SplitSpec {
        seed,
        ..config.split.clone()
    };
    let split = split(dataset, &spec)?;
    let model_cfg = ModelConfig {
        seed,
        feature_dim: dataset.feature_dim(),
        num_classes: dataset.num_classes(),
        ..config.target.clone()
    };
    let (target, _) = train_model_with_history(&model_cfg, &split.target_train, &split.target_val, &config.target_train)?;
    let outs = forward_batch(&target, &split.test.graphs().iter().collect::<Vec<_>>())?;
    let report = EvalReport {
        auc: test_auc(&outs.iter().map(|o| o.probs.clone()).collect::<Vec<_>>(), &split.test)?,
        fidelity: None,
        rank_corr: None,
        rank_corr_skipped: 0,
    };
    Ok(SeedContext {
        seed,
        split,
        target: Arc::new(target),
        target_report: report,
    })
}

/// ROC-AUC of the class-1 probability against true labels (binary tasks).
fn test_auc(probs: &[Vec<f64>], test: &Dataset) -> Result<f64> {
    if test.num_classes() != 2 {
        return Err(Error::UndefinedMetric("AUC needs a binary task"));
    }
    let labels: Vec<bool> = test.labels()?.iter().map(|&l| l == 1).collect();
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    roc_auc(&scores, &labels)
}

/// Scores `surrogate` against `target` on `test`: surrogate AUC on true
/// labels, label agreement with the target, and mean per-graph Kendall tau-b
/// between the target's explanations (`explainer`) and the surrogate's
/// Graph-CAM, each for its own predicted class.
pub fn evaluate(target: &ModelState, explainer: ExplainMethod, surrogate: &ModelState, test: &Dataset) -> Result<EvalReport> {
    let graphs: Vec<&Graph> = test.graphs().iter().collect();
    let t_out = forward_batch(target, &graphs)?;
    let s_out = forward_batch(surrogate, &graphs)?;
    let t_pred: Vec<usize> = t_out.iter().map(|o| o.predicted_class()).collect();
    let s_pred: Vec<usize> = s_out.iter().map(|o| o.predicted_class()).collect();
    let mut t_expl = Vec::with_capacity(graphs.len());
    let mut s_expl = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        t_expl.push(explain_with(target, g, &t_out[i], explainer, t_pred[i])?.scores);
        s_expl.push(graph_cam(&s_out[i], surrogate, s_pred[i])?.scores);
    }
    let rc = rank_correlation(
        t_expl.iter().zip(&s_expl).map(|(a, b)| (a.as_slice(), b.as_slice())),
        TauVariant::B,
    )?;
    Ok(EvalReport {
        auc: test_auc(&s_out.iter().map(|o| o.probs.clone()).collect::<Vec<_>>(), test)?,
        fidelity: Some(fidelity(&s_pred, &t_pred)?),
        rank_corr: (rc.evaluated > 0).then_some(rc.mean),
        rank_corr_skipped: rc.skipped,
    })
}

fn attack_config(config: &ExperimentConfig, ctx: &SeedContext, method: Method) -> AttackConfig {
    let (align_mode, augment) = method.switches().unwrap_or((AlignMode::None, false));
    AttackConfig {
        align_mode,
        augment,
        seed: ctx.seed,
        surrogate: ModelConfig {
            seed: ctx.seed,
            feature_dim: ctx.target.feature_dim(),
            num_classes: ctx.target.num_classes(),
            ..config.attack.surrogate.clone()
        },
        ..config.attack.clone()
    }
}

fn collect(config: &ExperimentConfig, ctx: &SeedContext, budget: usize, attack: &AttackConfig) -> Result<TrainingSet> {
    let oracle = Oracle::new(ctx.target.clone(), config.explainer, budget, config.return_probs);
    let (set, remaining) = match config.oracle {
        OracleMode::InProcess => {
            let mut o = &oracle;
            let set = collect_training_set(&mut o, &ctx.split.shadow, budget, attack)?;
            (set, oracle.remaining())
        }
        OracleMode::Tcp => {
            let server = spawn_server(Arc::new(oracle), "127.0.0.1:0")?;
            let mut client = RemoteOracle::connect(server.local_addr())?;
            let set = collect_training_set(&mut client, &ctx.split.shadow, budget, attack)?;
            let remaining = client.remaining_budget()?;
            drop(client);
            server.shutdown();
            (set, remaining)
        }
    };
    if remaining != 0 {
        return Err(Error::Config(format!(
            "budget accounting: {remaining} queries left after spending {budget}"
        )));
    }
    Ok(set)
}

/// Runs one (method, seed) cell; writes its artifacts under `dir` when given.
pub fn run_cell(
    config: &ExperimentConfig,
    ctx: &SeedContext,
    method: Method,
    budget: usize,
    dir: Option<&Path>,
) -> Result<CellReport> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let cell = if method == Method::Target {
        if let Some(d) = dir {
            save_model(&ctx.target, &d.join("target.model"))?;
        }
        CellReport {
            method,
            seed: ctx.seed,
            budget: 0,
            report: ctx.target_report.clone(),
            augments: 0,
            skipped_augments: 0,
        }
    } else {
        let attack = attack_config(config, ctx, method);
        let set = collect(config, ctx, budget, &attack)?;
        let surrogate = if method == Method::TS {
            teacher_student(&set.queries, &attack)?
        } else {
            train_surrogate(&set, &attack)?
        };
        let report = evaluate(&ctx.target, config.explainer, &surrogate, &ctx.split.test)?;
        if let Some(d) = dir {
            save_model(&surrogate, &d.join("surrogate.model"))?;
            set.save_jsonl(&d.join("training_set.jsonl"))?;
        }
        CellReport {
            method,
            seed: ctx.seed,
            budget,
            report,
            augments: set.augments.len(),
            skipped_augments: set.skipped,
        }
    };
    if let Some(d) = dir {
        std::fs::write(d.join("report.json"), serde_json::to_string_pretty(&cell)?)?;
    }
    Ok(cell)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    /// Successful cells, sorted by method then seed.
    pub cells: Vec<CellReport>,
    pub failures: Vec<CellFailure>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method)
    }
}

fn pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Serialize)]
struct Metadata<'a> {
    started_unix: f64,
    finished_unix: f64,
    crate_version: &'a str,
    failures: &'a [CellFailure],
}

/// Prepares every seed, failing the seed's cells rather than the whole run.
fn prepare_all(config: &ExperimentConfig, dataset: &Dataset) -> Vec<(u64, Result<SeedContext>)> {
    config
        .seeds
        .par_iter()
        .map(|&s| (s, prepare_seed(config, dataset, s)))
        .collect()
}

/// Runs every configured method on every prepared seed and writes outputs
/// under `dir`. `ctxs` may contain failed seeds; their cells are failures.
fn run_grid(
    config: &ExperimentConfig,
    ctxs: &[(u64, std::result::Result<SeedContext, String>)],
    budget_of: &(dyn Fn(&SeedContext) -> Result<usize> + Sync),
    dir: &Path,
) -> Result<ExperimentOutcome> {
    let started = unix_now();
    std::fs::create_dir_all(dir)?;
    let jobs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..ctxs.len()).map(move |i| (m, i)))
        .collect();
    let results: Vec<(Method, u64, Result<CellReport>)> = jobs
        .par_iter()
        .map(|&(m, i)| {
            let (seed, ctx) = &ctxs[i];
            let r = match ctx {
                Ok(ctx) => budget_of(ctx).and_then(|b| {
                    run_cell(config, ctx, m, b, Some(&dir.join(m.name()).join(seed.to_string())))
                }),
                Err(e) => Err(Error::Config(format!("seed preparation failed: {e}"))),
            };
            (m, *seed, r)
        })
        .collect();
    let mut out = ExperimentOutcome::default();
    for (method, seed, r) in results {
        match r {
            Ok(c) => out.cells.push(c),
            Err(e) => {
                log::error!("{method} seed {seed}: {e}");
                out.failures.push(CellFailure {
                    method,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    out.cells.sort_by_key(|c| (c.method, c.seed));
    out.failures.sort_by_key(|f| (f.method, f.seed));
    out.summary = summarize(&out.cells);
    write_summary_csv(&out.summary, &dir.join("summary.csv"))?;
    let meta = Metadata {
        started_unix: started,
        finished_unix: unix_now(),
        crate_version: env!("CARGO_PKG_VERSION"),
        failures: &out.failures,
    };
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(out)
}

fn stringify(ctxs: Vec<(u64, Result<SeedContext>)>) -> Vec<(u64, std::result::Result<SeedContext, String>)> {
    ctxs.into_iter().map(|(s, r)| (s, r.map_err(|e| e.to_string()))).collect()
}

/// Full protocol: every method on every seed at the configured budget.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    pool(config)?.install(|| {
        let ctxs = stringify(prepare_all(config, &dataset));
        run_grid(
            config,
            &ctxs,
            &|ctx| config.budget_for(ctx.split.shadow.len()),
            &config.experiment_dir(),
        )
    })
}

/// Repeats the protocol at each budget fraction, reusing each seed's target.
/// Writes `budget-<fraction>/…` per fraction and a long-format `sweep.csv`.
pub fn sweep_budget(config: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<(f64, ExperimentOutcome)>> {
    config.validate()?;
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Config(format!("budget fractions must lie in (0, 1]: {fractions:?}")));
    }
    let dataset = config.dataset.load()?;
    let root = config.experiment_dir();
    pool(config)?.install(|| {
        let ctxs = stringify(prepare_all(config, &dataset));
        let mut runs = Vec::new();
        let mut rows = Vec::new();
        for &f in fractions {
            let budget_of = move |ctx: &SeedContext| {
                let n = ctx.split.shadow.len();
                let q = frac_floor(f, n);
                if q == 0 {
                    return Err(Error::Config(format!("fraction {f} of {n} shadow graphs is zero queries")));
                }
                Ok(q)
            };
            let out = run_grid(config, &ctxs, &budget_of, &root.join(format!("budget-{f}")))?;
            rows.extend(sweep_rows(f, &out.summary));
            runs.push((f, out));
        }
        std::fs::write(root.join("sweep.csv"), sweep_csv(&rows))?;
        Ok(runs)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDistReport {
    /// Squared MMD between the override shadow and each seed's target-train set.
    pub mmd: Vec<f64>,
    pub mmd_mean: f64,
    pub outcome: ExperimentOutcome,
}

fn features(ds: &Dataset) -> Vec<StructuralFeatures> {
    ds.graphs().par_iter().map(structural_features).collect()
}

/// The protocol with the shadow set replaced by `shadow_override`, zero-padded
/// to the target's feature width when narrower.
pub fn cross_distribution(config: &ExperimentConfig, shadow_override: &Dataset) -> Result<CrossDistReport> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    if shadow_override.num_classes() != dataset.num_classes() {
        return Err(Error::dim(
            "cross_distribution",
            format!(
                "shadow has {} classes, target data {}",
                shadow_override.num_classes(),
                dataset.num_classes()
            ),
        ));
    }
    let shadow = if shadow_override.feature_dim() < dataset.feature_dim() {
        pad_features(shadow_override, dataset.feature_dim())?
    } else if shadow_override.feature_dim() > dataset.feature_dim() {
        return Err(Error::dim(
            "cross_distribution",
            format!(
                "shadow feature width {} exceeds target width {}",
                shadow_override.feature_dim(),
                dataset.feature_dim()
            ),
        ));
    } else {
        shadow_override.clone()
    };
    let shadow_feats = features(&shadow);
    let dir: PathBuf = config.experiment_dir().join(format!("cross-{}", shadow.name));
    pool(config)?.install(|| {
        let mut ctxs = prepare_all(config, &dataset);
        let mut mmd = Vec::new();
        for (_, ctx) in ctxs.iter_mut() {
            if let Ok(ctx) = ctx {
                mmd.push(mmd_squared(&shadow_feats, &features(&ctx.split.target_train), MMD_GAMMA));
                ctx.split.shadow = shadow.clone();
            }
        }
        let ctxs = stringify(ctxs);
        let outcome = run_grid(config, &ctxs, &|ctx| config.budget_for(ctx.split.shadow.len()), &dir)?;
        let mmd_mean = if mmd.is_empty() { f64::NAN } else { mmd.iter().sum::<f64>() / mmd.len() as f64 };
        let report = CrossDistReport { mmd, mmd_mean, outcome };
        std::fs::write(dir.join("cross_dist.json"), serde_json::to_string_pretty(&report)?)?;
        Ok(report)
    })
}
