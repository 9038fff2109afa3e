use std::fs;
use std::path::Path;

use graphsteal::experiment::{
    cross_distribution, read_reports, run_experiment, summarize, summary_csv, sweep_budget, DatasetSpec,
    ExperimentConfig, Method, OracleMode,
};
use graphsteal::graph::MotifConfig;
use graphsteal::model::TrainConfig;

fn tiny(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        name: "tiny".into(),
        output_dir: out.to_path_buf(),
        dataset: DatasetSpec::Motif(MotifConfig {
            n_graphs: 60,
            ..MotifConfig::default()
        }),
        methods: Method::ALL.to_vec(),
        seeds: vec![3, 4],
        threads: Some(2),
        ..ExperimentConfig::default()
    };
    c.target.hidden_dim = 8;
    c.target.num_layers = 2;
    c.target_train = TrainConfig {
        epochs: 4,
        batch_size: 16,
        ..TrainConfig::default()
    };
    c.attack.surrogate = c.target.clone();
    c.attack.epochs = 4;
    c.attack.batch_size = 16;
    c
}

#[test]
fn reruns_write_identical_summaries() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_experiment(&tiny(a.path())).unwrap();
    let second = run_experiment(&tiny(b.path())).unwrap();
    assert!(first.all_succeeded(), "{:?}", first.failures);
    let csv_a = fs::read(a.path().join("tiny/summary.csv")).unwrap();
    let csv_b = fs::read(b.path().join("tiny/summary.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(first.summary, second.summary);
    assert_eq!(first.summary.len(), Method::ALL.len());

    // Rebuilding from per-cell reports reproduces the file.
    let cells = read_reports(&a.path().join("tiny")).unwrap();
    assert_eq!(cells.len(), Method::ALL.len() * 2);
    assert_eq!(summary_csv(&summarize(&cells)).into_bytes(), csv_a);

    let target = first.row(Method::Target).unwrap();
    assert_eq!(target.n_seeds, 2);
    assert!(target.fidelity.is_none());
    assert!(first.row(Method::Full).unwrap().rank_corr.is_some());
    for seed in ["3", "4"] {
        let cell = a.path().join("tiny/full").join(seed);
        for f in ["surrogate.model", "training_set.jsonl", "report.json"] {
            assert!(cell.join(f).is_file(), "{} missing", cell.join(f).display());
        }
    }
}

#[test]
fn tcp_oracle_matches_in_process() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut local = tiny(a.path());
    local.methods = vec![Method::TS, Method::Full];
    let mut remote = local.clone();
    remote.output_dir = b.path().to_path_buf();
    remote.oracle = OracleMode::Tcp;
    let x = run_experiment(&local).unwrap();
    let y = run_experiment(&remote).unwrap();
    assert!(y.all_succeeded(), "{:?}", y.failures);
    assert_eq!(x.summary, y.summary);
}

#[test]
fn sweep_and_cross_distribution_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.methods = vec![Method::TS, Method::Full];
    c.seeds = vec![3];
    let runs = sweep_budget(&c, &[0.2, 0.5]).unwrap();
    assert_eq!(runs.len(), 2);
    let sweep = fs::read_to_string(dir.path().join("tiny/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 2 * 3);

    let shadow = MotifConfig {
        n_graphs: 60,
        edge_prob: 0.4,
        seed: 99,
        ..MotifConfig::default()
    }
    .generate()
    .dataset;
    let rep = cross_distribution(&c, &shadow).unwrap();
    assert!(rep.outcome.all_succeeded());
    assert_eq!(rep.mmd.len(), 1);
    assert!(rep.mmd[0] > 0.0);
}
