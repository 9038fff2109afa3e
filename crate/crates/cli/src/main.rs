use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use graphsteal::attack::{collect_training_set, teacher_student, train_surrogate, AlignMode, AttackConfig};
use graphsteal::experiment::{
    self, load_config, prepare_seed, read_reports, summarize, write_summary_csv, DatasetSpec, ExperimentConfig,
    ExperimentOutcome, Method,
};
use graphsteal::explain::ExplainMethod;
use graphsteal::graph::{load_tu_dataset, split, write_tu_dataset, Dataset, MotifConfig, SplitSpec};
use graphsteal::model::{load_model, save_model, ModelConfig};
use graphsteal::oracle::{serve, Oracle, OracleConfig, QueryOracle, RemoteOracle};

// Training allocates and frees large tensors every step; the system
// allocator hands those back to the kernel each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "graphsteal", version, about = "Explanation-guided model extraction on graph classifiers")]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set attack.lambda=2 --set seeds=[41]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        load_config(self.config.as_deref(), &self.overrides).context("loading config")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the configured dataset as TU-format text files.
    Prepare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the target model for one seed and save it.
    TrainTarget {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 41)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a saved model as a budgeted oracle over TCP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "GraphCAM")]
        explainer: ExplainMethod,
        #[arg(long, default_value_t = 120)]
        budget: usize,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Return labels and explanations only.
        #[arg(long)]
        hard_labels: bool,
    },
    /// Run one attack against a served oracle or a saved target model.
    Attack {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 41)]
        seed: u64,
        #[arg(long, default_value = "full")]
        method: Method,
        /// Oracle address; the oracle's budget must cover the queries.
        #[arg(long, conflicts_with = "model")]
        remote: Option<String>,
        /// Saved target model queried in-process.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Number of queries; defaults to the configured fraction of the shadow set.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a surrogate against a target on the seed's test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 41)]
        seed: u64,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        surrogate: PathBuf,
    },
    /// Run every configured method on every seed and write summary.csv.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Repeat the experiment over query budget fractions.
    SweepBudget {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
        fractions: Vec<f64>,
    },
    /// Attack with a shadow set from another distribution.
    CrossDist {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// TU dataset as DIR:NAME.
        #[arg(long, conflicts_with = "shadow_edge_prob")]
        shadow_tu: Option<String>,
        /// Motif shadow set with this base-graph edge probability.
        #[arg(long)]
        shadow_edge_prob: Option<f64>,
    },
    /// Rebuild summary.csv from per-cell report.json files.
    Report {
        /// Experiment directory (`<output_dir>/<name>`).
        dir: PathBuf,
    },
}

fn print_outcome(out: &ExperimentOutcome) {
    print!("{}", experiment::summary_csv(&out.summary));
    for f in &out.failures {
        eprintln!("FAILED {} seed {}: {}", f.method, f.seed, f.error);
    }
}

fn outcome_code(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn seed_split(config: &ExperimentConfig, seed: u64) -> anyhow::Result<(Dataset, graphsteal::graph::Split)> {
    let ds = config.dataset.load()?;
    let s = split(
        &ds,
        &SplitSpec {
            seed,
            ..config.split.clone()
        },
    )?;
    Ok((ds, s))
}

fn attack_cmd(
    config: &ExperimentConfig,
    seed: u64,
    method: Method,
    remote: Option<&str>,
    model: Option<&Path>,
    budget: Option<usize>,
    out: &Path,
) -> anyhow::Result<()> {
    let Some((align_mode, augment)) = method.switches().or((method == Method::TS).then_some((AlignMode::None, false)))
    else {
        bail!("`{method}` is not an attack method");
    };
    let (ds, sp) = seed_split(config, seed)?;
    let budget = match budget {
        Some(q) => q,
        None => config.budget_for(sp.shadow.len())?,
    };
    let attack = AttackConfig {
        align_mode,
        augment,
        seed,
        surrogate: ModelConfig {
            seed,
            feature_dim: ds.feature_dim(),
            num_classes: ds.num_classes(),
            ..config.attack.surrogate.clone()
        },
        ..config.attack.clone()
    };
    let set = match (remote, model) {
        (Some(addr), _) => {
            let mut client = RemoteOracle::connect(addr).with_context(|| format!("connecting to {addr}"))?;
            let set = collect_training_set(&mut client, &sp.shadow, budget, &attack)?;
            log::info!("oracle reports {} queries left", client.remaining_budget()?);
            set
        }
        (None, Some(path)) => {
            let target = load_model(path)?;
            let oracle = Oracle::new(Arc::new(target), config.explainer, budget, config.return_probs);
            collect_training_set(&mut &oracle, &sp.shadow, budget, &attack)?
        }
        (None, None) => bail!("either --remote or --model is required"),
    };
    let surrogate = if method == Method::TS {
        teacher_student(&set.queries, &attack)?
    } else {
        train_surrogate(&set, &attack)?
    };
    std::fs::create_dir_all(out)?;
    save_model(&surrogate, &out.join("surrogate.model"))?;
    set.save_jsonl(&out.join("training_set.jsonl"))?;
    println!(
        "{} queries, {} augments ({} skipped); surrogate written to {}",
        set.queries.len(),
        set.augments.len(),
        set.skipped,
        out.join("surrogate.model").display()
    );
    Ok(())
}

fn cross_dist_shadow(config: &ExperimentConfig, tu: Option<&str>, edge_prob: Option<f64>) -> anyhow::Result<Dataset> {
    if let Some(spec) = tu {
        let (dir, name) = spec.rsplit_once(':').context("--shadow-tu expects DIR:NAME")?;
        return Ok(load_tu_dataset(Path::new(dir), name)?);
    }
    let base = match &config.dataset {
        DatasetSpec::Motif(m) => m.clone(),
        DatasetSpec::Tu { .. } => bail!("--shadow-edge-prob needs a motif dataset config"),
    };
    let p = edge_prob.context("one of --shadow-tu or --shadow-edge-prob is required")?;
    let mut ds = MotifConfig {
        edge_prob: p,
        seed: base.seed.wrapping_add(1000),
        ..base
    }
    .generate()
    .dataset;
    ds.name = format!("motif-p{p}");
    Ok(ds)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Prepare { cfg, out } => {
            let config = cfg.load()?;
            let ds = config.dataset.load()?;
            write_tu_dataset(&ds, &out, &ds.name)?;
            println!("{} graphs written to {}/{}_*.txt", ds.len(), out.display(), ds.name);
        }
        Command::TrainTarget { cfg, seed, out } => {
            let config = cfg.load()?;
            let ds = config.dataset.load()?;
            let ctx = prepare_seed(&config, &ds, seed)?;
            save_model(&ctx.target, &out)?;
            println!("target test AUC {:.4}; model written to {}", ctx.target_report.auc, out.display());
        }
        Command::Serve {
            model,
            explainer,
            budget,
            listen,
            hard_labels,
        } => {
            serve(&OracleConfig {
                model_path: model,
                explainer,
                budget,
                return_probs: !hard_labels,
                listen_address: listen,
            })?;
        }
        Command::Attack {
            cfg,
            seed,
            method,
            remote,
            model,
            budget,
            out,
        } => {
            let config = cfg.load()?;
            attack_cmd(&config, seed, method, remote.as_deref(), model.as_deref(), budget, &out)?;
        }
        Command::Evaluate {
            cfg,
            seed,
            target,
            surrogate,
        } => {
            let config = cfg.load()?;
            let (_, sp) = seed_split(&config, seed)?;
            let report = experiment::evaluate(&load_model(&target)?, config.explainer, &load_model(&surrogate)?, &sp.test)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run { cfg } => {
            let out = experiment::run_experiment(&cfg.load()?)?;
            print_outcome(&out);
            return Ok(outcome_code(out.all_succeeded()));
        }
        Command::SweepBudget { cfg, fractions } => {
            let config = cfg.load()?;
            let runs = experiment::sweep_budget(&config, &fractions)?;
            let mut ok = true;
            for (f, out) in &runs {
                println!("# budget fraction {f}");
                print_outcome(out);
                ok &= out.all_succeeded();
            }
            println!("sweep table: {}", config.experiment_dir().join("sweep.csv").display());
            return Ok(outcome_code(ok));
        }
        Command::CrossDist {
            cfg,
            shadow_tu,
            shadow_edge_prob,
        } => {
            let config = cfg.load()?;
            let shadow = cross_dist_shadow(&config, shadow_tu.as_deref(), shadow_edge_prob)?;
            let rep = experiment::cross_distribution(&config, &shadow)?;
            println!("# shadow {} MMD^2 mean {:.6} per seed {:?}", shadow.name, rep.mmd_mean, rep.mmd);
            print_outcome(&rep.outcome);
            return Ok(outcome_code(rep.outcome.all_succeeded()));
        }
        Command::Report { dir } => {
            let cells = read_reports(&dir)?;
            if cells.is_empty() {
                bail!("no report.json files under {}", dir.display());
            }
            let rows = summarize(&cells);
            write_summary_csv(&rows, &dir.join("summary.csv"))?;
            print!("{}", experiment::summary_csv(&rows));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
