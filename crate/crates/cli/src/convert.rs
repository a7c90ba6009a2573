use std::path::{Path, PathBuf};

use oad_core::graph::{make_split, Graph, GraphDataset, Labels, Masks, SplitSizes};
use oad_core::{Matrix, SparseAdjacency};

use crate::error::{CliError, Result};
use crate::output::write_atomic;

#[derive(Clone, Debug)]
pub struct ConvertOptions {
    pub name: String,
    /// One of `train`, `val`, `test` or `none` per line, one line per node.
    /// Without it a per-class split is drawn (single-label data only).
    pub split_file: Option<PathBuf>,
    pub split: SplitSizes,
    pub seed: u64,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `u v` pairs, one per line, separated by whitespace or a comma. Blank
/// lines and `#` comments are skipped.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        let bad = || CliError::input(path, format!("line {}: expected \"u v\", got {line:?}", i + 1));
        if parts.len() != 2 {
            return Err(bad());
        }
        let u = parts[0].parse().map_err(|_| bad())?;
        let v = parts[1].parse().map_err(|_| bad())?;
        edges.push((u, v));
    }
    Ok(edges)
}

/// Numeric CSV without a header; every row must have the same width.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::input(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(path, format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::input(path, "no rows"));
    }
    Matrix::from_rows(&rows).map_err(|e| CliError::input(path, e.to_string()))
}

/// Builds a canonical single-graph dataset from plain-text inputs and
/// writes it to `out`. Directed edges are symmetrized and duplicates
/// merged. A single label column means class indices; several columns are
/// read as a multi-hot matrix.
pub fn convert_dataset(
    edges_path: &Path,
    features_path: &Path,
    labels_path: &Path,
    out: &Path,
    opts: &ConvertOptions,
) -> Result<GraphDataset> {
    let features = read_matrix(features_path)?;
    let label_matrix = read_matrix(labels_path)?;
    let n = features.rows();
    if label_matrix.rows() != n {
        return Err(CliError::input(
            labels_path,
            format!("{} label rows for {n} feature rows", label_matrix.rows()),
        ));
    }
    let edges = read_edge_list(edges_path)?;
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
        return Err(CliError::input(edges_path, format!("edge ({u}, {v}) refers to a node outside the {n} feature rows")));
    }
    let adj = SparseAdjacency::from_undirected_edges(n, &edges)?;

    let (labels, num_classes, multi) = if label_matrix.cols() == 1 {
        let y = label_matrix
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(CliError::input(labels_path, format!("row {}: {v} is not a class index", i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let k = y.iter().max().map_or(0, |m| m + 1);
        (Labels::Single(y), k, false)
    } else {
        let k = label_matrix.cols();
        (Labels::Multi(label_matrix), k, true)
    };

    let masks = match &opts.split_file {
        Some(p) => read_split(p, n)?,
        None => match &labels {
            Labels::Single(y) => make_split(y, num_classes, opts.split, opts.seed)?,
            Labels::Multi(_) => {
                return Err(CliError::Invalid("multi-label data needs a split file".into()));
            }
        },
    };
    let graph = Graph::new(adj, features, labels, masks)?;
    let ds = GraphDataset::new(opts.name.clone(), num_classes, multi, vec![graph], None)?;
    let text = ds.to_json_string()?;
    // what we write must load back
    GraphDataset::from_json_str(&text)?;
    write_atomic(out, text.as_bytes())?;
    Ok(ds)
}

fn read_split(path: &Path, n: usize) -> Result<Masks> {
    let text = read(path)?;
    let tokens: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    if tokens.len() != n {
        return Err(CliError::input(path, format!("{} split entries for {n} nodes", tokens.len())));
    }
    let mut masks = Masks::all_false(n);
    for (i, t) in tokens.iter().enumerate() {
        match *t {
            "train" => masks.train[i] = true,
            "val" => masks.val[i] = true,
            "test" => masks.test[i] = true,
            "none" => {}
            other => return Err(CliError::input(path, format!("node {i}: unknown split {other:?}"))),
        }
    }
    Ok(masks)
}
