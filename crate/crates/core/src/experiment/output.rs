use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Method;
use crate::metrics::{mean_std, EvalReport, MeanStd};
use crate::{Error, Result};

/// Contents of one `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub seed: u64,
    /// Queries spent; 0 for the target row.
    pub budget: usize,
    pub report: EvalReport,
    pub augments: usize,
    pub skipped_augments: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n_seeds: usize,
    pub auc: MeanStd,
    pub fidelity: Option<MeanStd>,
    pub rank_corr: Option<MeanStd>,
}

/// One line of a long-format budget sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub std: Option<f64>,
}

/// Aggregates cells per method, in [`Method`] order.
pub fn summarize(cells: &[CellReport]) -> Vec<SummaryRow> {
    let mut by: BTreeMap<Method, Vec<&CellReport>> = BTreeMap::new();
    for c in cells {
        by.entry(c.method).or_default().push(c);
    }
    by.into_iter()
        .map(|(method, cs)| {
            let col = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> Option<MeanStd> {
                let v: Vec<f64> = cs.iter().filter_map(|c| f(&c.report)).collect();
                mean_std(&v)
            };
            SummaryRow {
                method,
                n_seeds: cs.len(),
                auc: col(&|r| Some(r.auc)).expect("at least one cell"),
                fidelity: col(&|r| r.fidelity),
                rank_corr: col(&|r| r.rank_corr),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("method,n_seeds,auc_mean,auc_std,fidelity_mean,fidelity_std,rank_corr_mean,rank_corr_std\n");
    for r in rows {
        let ms = |m: &Option<MeanStd>| (cell(m.map(|m| m.mean)), cell(m.and_then(|m| m.std)));
        let (fm, fs) = ms(&r.fidelity);
        let (rm, rs) = ms(&r.rank_corr);
        writeln!(
            s,
            "{},{},{},{},{fm},{fs},{rm},{rs}",
            r.method,
            r.n_seeds,
            cell(Some(r.auc.mean)),
            cell(r.auc.std)
        )
        .expect("write to string");
    }
    s
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    std::fs::write(path, summary_csv(rows))?;
    Ok(())
}

pub(crate) fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("fraction,method,metric,mean,std\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.fraction, r.method, r.metric, cell(Some(r.mean)), cell(r.std))
            .expect("write to string");
    }
    s
}

/// Long-format rows for every metric present in `rows`.
pub(crate) fn sweep_rows(fraction: f64, rows: &[SummaryRow]) -> Vec<SweepRow> {
    let mut out = Vec::new();
    for r in rows {
        for (metric, m) in [("auc", Some(r.auc)), ("fidelity", r.fidelity), ("rank_corr", r.rank_corr)] {
            if let Some(m) = m {
                out.push(SweepRow {
                    fraction,
                    method: r.method,
                    metric: metric.into(),
                    mean: m.mean,
                    std: m.std,
                });
            }
        }
    }
    out
}

/// Collects every `<method>/<seed>/report.json` below `dir`, sorted by
/// method then seed.
pub fn read_reports(dir: &Path) -> Result<Vec<CellReport>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for m in std::fs::read_dir(dir)? {
        let m = m?.path();
        if !m.is_dir() {
            continue;
        }
        for s in std::fs::read_dir(&m)? {
            let p = s?.path().join("report.json");
            if p.is_file() {
                out.push(serde_json::from_str::<CellReport>(&std::fs::read_to_string(&p)?)?);
            }
        }
    }
    out.sort_by_key(|c| (c.method, c.seed));
    Ok(out)
}
