//! TU benchmark text layout.
//!
//! `DS_A.txt` holds one `row, col` pair of 1-based global node ids per line,
//! `DS_graph_indicator.txt` the 1-based graph id of each node,
//! `DS_graph_labels.txt` one label per graph and `DS_node_labels.txt` one
//! categorical label per node. Node labels become one-hot features of width
//! `max - min + 1`; graph labels are remapped to `0..k` in sorted order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Dataset, Graph};
use crate::diff::Tensor;
use crate::{Error, Result};

fn read(dir: &Path, name: &str, suffix: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    match fs::read_to_string(&path) {
        Ok(s) => Ok((path, s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path)),
        Err(e) => Err(e.into()),
    }
}

fn fmt_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        file: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines as `(1-based line number, trimmed text)`.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_ints(path: &Path, text: &str) -> Result<Vec<(usize, i64)>> {
    lines(text)
        .map(|(ln, l)| {
            l.parse::<i64>()
                .map(|v| (ln, v))
                .map_err(|_| fmt_err(path, ln, format!("expected an integer, got {l:?}")))
        })
        .collect()
}

pub fn load_tu_dataset(directory: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = directory.as_ref();
    let (a_path, a_text) = read(dir, name, "A")?;
    let (gi_path, gi_text) = read(dir, name, "graph_indicator")?;
    let (gl_path, gl_text) = read(dir, name, "graph_labels")?;
    let (nl_path, nl_text) = read(dir, name, "node_labels")?;

    let indicator = parse_ints(&gi_path, &gi_text)?;
    let graph_labels = parse_ints(&gl_path, &gl_text)?;
    let node_labels = parse_ints(&nl_path, &nl_text)?;
    let num_nodes = indicator.len();
    let num_graphs = graph_labels.len();

    if node_labels.len() != num_nodes {
        return Err(fmt_err(
            &nl_path,
            node_labels.len(),
            format!("{} node labels for {num_nodes} nodes", node_labels.len()),
        ));
    }

    // global node -> (graph, local index)
    let mut owner = Vec::with_capacity(num_nodes);
    let mut sizes = vec![0usize; num_graphs];
    for &(ln, gid) in &indicator {
        if gid < 1 || gid as usize > num_graphs {
            return Err(fmt_err(&gi_path, ln, format!("graph id {gid} outside 1..={num_graphs}")));
        }
        let g = gid as usize - 1;
        owner.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(fmt_err(&gi_path, 0, format!("graph {} has no nodes", empty + 1)));
    }

    let mut edges = vec![Vec::new(); num_graphs];
    for (ln, l) in lines(&a_text) {
        let mut parts = l.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(fmt_err(&a_path, ln, format!("expected `u, v`, got {l:?}")));
        };
        let parse = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| fmt_err(&a_path, ln, format!("bad node index {s:?}")))?;
            if v < 1 || v > num_nodes {
                return Err(fmt_err(&a_path, ln, format!("node index {v} outside 1..={num_nodes}")));
            }
            Ok(v - 1)
        };
        let (u, v) = (parse(a)?, parse(b)?);
        let ((gu, lu), (gv, lv)) = (owner[u], owner[v]);
        if gu != gv {
            return Err(fmt_err(&a_path, ln, format!("edge joins graphs {} and {}", gu + 1, gv + 1)));
        }
        edges[gu].push((lu, lv));
    }

    let lo = node_labels.iter().map(|&(_, v)| v).min().unwrap_or(0);
    let hi = node_labels.iter().map(|&(_, v)| v).max().unwrap_or(0);
    let width = (hi - lo + 1) as usize;
    let mut feats: Vec<Tensor> = sizes.iter().map(|&s| Tensor::zeros(s, width)).collect();
    for (node, &(_, lab)) in node_labels.iter().enumerate() {
        let (g, local) = owner[node];
        feats[g].set(local, (lab - lo) as usize, 1.0);
    }

    let classes: BTreeMap<i64, usize> = graph_labels
        .iter()
        .map(|&(_, v)| v)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();

    let graphs = feats
        .into_iter()
        .zip(edges)
        .zip(&graph_labels)
        .map(|((f, e), &(_, lab))| Graph::new(f.rows(), e, f, Some(classes[&lab])))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, graphs, classes.len().max(2), width)
}

/// Writes `dataset` in TU layout. Features must be one-hot rows; the node
/// label written is the hot column plus one.
pub fn write_tu_dataset(dataset: &Dataset, directory: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = directory.as_ref();
    fs::create_dir_all(dir)?;
    let open = |suffix: &str| -> Result<std::io::BufWriter<fs::File>> {
        Ok(std::io::BufWriter::new(fs::File::create(
            dir.join(format!("{name}_{suffix}.txt")),
        )?))
    };
    let (mut a, mut gi, mut gl, mut nl) = (
        open("A")?,
        open("graph_indicator")?,
        open("graph_labels")?,
        open("node_labels")?,
    );
    let mut offset = 0;
    for (gid, g) in dataset.graphs().iter().enumerate() {
        for v in 0..g.num_nodes() {
            let row = g.features().row_slice(v);
            let hot: Vec<usize> = (0..row.len()).filter(|&k| row[k] != 0.0).collect();
            if hot.len() != 1 || row[hot[0]] != 1.0 {
                return Err(Error::Config(format!(
                    "graph {gid} node {v}: features are not one-hot, cannot export as node labels"
                )));
            }
            writeln!(gi, "{}", gid + 1)?;
            writeln!(nl, "{}", hot[0] + 1)?;
        }
        for &(u, v) in g.edges() {
            writeln!(a, "{}, {}", offset + u + 1, offset + v + 1)?;
            writeln!(a, "{}, {}", offset + v + 1, offset + u + 1)?;
        }
        let label = g
            .label()
            .ok_or_else(|| Error::Config(format!("graph {gid} has no label")))?;
        writeln!(gl, "{label}")?;
        offset += g.num_nodes();
    }
    for w in [&mut a, &mut gi, &mut gl, &mut nl] {
        w.flush()?;
    }
    Ok(())
}
