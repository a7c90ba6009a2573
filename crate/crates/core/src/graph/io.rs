//! Canonical JSON dataset format, version 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, GraphDataset, GraphSplit, Labels, Masks};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sparse::SparseAdjacency;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    #[allow(dead_code)]
    version: u64,
    name: String,
    num_classes: usize,
    multi_label: bool,
    graphs: Vec<RawGraph>,
    #[serde(default)]
    graph_split: Option<RawSplit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    labels: RawLabels,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawLabels {
    Single(Vec<i64>),
    Multi(Vec<Vec<f64>>),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Serialize)]
struct OutDataset<'a> {
    version: u64,
    name: &'a str,
    num_classes: usize,
    multi_label: bool,
    graphs: Vec<OutGraph<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    graph_split: Option<RawSplit>,
}

#[derive(Serialize)]
struct OutGraph<'a> {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<&'a [f64]>,
    labels: OutLabels<'a>,
    train_mask: &'a [bool],
    val_mask: &'a [bool],
    test_mask: &'a [bool],
}

#[derive(Serialize)]
#[serde(untagged)]
enum OutLabels<'a> {
    Single(&'a [usize]),
    Multi(Vec<Vec<u8>>),
}

fn graph_from_raw(gi: usize, raw: RawGraph) -> Result<Graph> {
    let field = |name: &str| format!("graphs[{gi}].{name}");
    let n = raw.num_nodes;

    let mut edges = Vec::with_capacity(raw.edges.len());
    for (k, [u, v]) in raw.edges.into_iter().enumerate() {
        if u >= n || v >= n {
            return Err(Error::validation(
                field("edges"),
                format!("edge {k} ({u}, {v}) references a node outside [0, {n})"),
            ));
        }
        edges.push((u, v));
    }
    let adjacency = SparseAdjacency::from_undirected_edges(n, &edges)?;

    if raw.features.len() != n {
        return Err(Error::validation(
            field("features"),
            format!("{} rows for {n} nodes", raw.features.len()),
        ));
    }
    let d = raw.features.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(n * d);
    for (i, row) in raw.features.into_iter().enumerate() {
        if row.len() != d {
            return Err(Error::validation(field("features"), format!("row {i} has {} columns, expected {d}", row.len())));
        }
        data.extend(row);
    }
    let features = Matrix::new(n, d, data)?;

    let labels = match raw.labels {
        RawLabels::Single(v) => {
            let mut out = Vec::with_capacity(v.len());
            for (i, y) in v.into_iter().enumerate() {
                let y = usize::try_from(y)
                    .map_err(|_| Error::validation(field("labels"), format!("node {i} has negative label {y}")))?;
                out.push(y);
            }
            Labels::Single(out)
        }
        RawLabels::Multi(rows) => {
            let k = rows.first().map_or(0, Vec::len);
            let mut data = Vec::with_capacity(rows.len() * k);
            let r = rows.len();
            for (i, row) in rows.into_iter().enumerate() {
                if row.len() != k {
                    return Err(Error::validation(field("labels"), format!("row {i} has {} columns, expected {k}", row.len())));
                }
                data.extend(row);
            }
            Labels::Multi(Matrix::new(r, k, data)?)
        }
    };

    let masks = Masks {
        train: raw.train_mask,
        val: raw.val_mask,
        test: raw.test_mask,
    };
    Graph::new(adjacency, features, labels, masks).map_err(|e| super::prefix_graph(e, gi))
}

impl GraphDataset {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_slice(s.as_bytes())
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        match probe.version {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Version(v)),
            None => return Err(Error::validation("version", "missing")),
        }
        let raw: RawDataset = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        let graphs = raw
            .graphs
            .into_iter()
            .enumerate()
            .map(|(gi, g)| graph_from_raw(gi, g))
            .collect::<Result<Vec<_>>>()?;
        let graph_split = raw.graph_split.map(|s| GraphSplit {
            train: s.train,
            val: s.val,
            test: s.test,
        });
        GraphDataset::new(raw.name, raw.num_classes, raw.multi_label, graphs, graph_split)
    }

    pub fn from_reader(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_json_slice(&bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let graphs = self
            .graphs()
            .iter()
            .map(|g| OutGraph {
                num_nodes: g.num_nodes(),
                edges: g.adjacency().undirected_edges().into_iter().map(|(u, v)| [u, v]).chain(
                    (0..g.num_nodes()).filter(|&i| g.adjacency().has_self_loop(i)).map(|i| [i, i]),
                ).collect(),
                features: (0..g.num_nodes()).map(|i| g.features().row(i)).collect(),
                labels: match g.labels() {
                    Labels::Single(v) => OutLabels::Single(v),
                    Labels::Multi(m) => OutLabels::Multi(
                        (0..m.rows()).map(|i| m.row(i).iter().map(|&x| x as u8).collect()).collect(),
                    ),
                },
                train_mask: &g.masks().train,
                val_mask: &g.masks().val,
                test_mask: &g.masks().test,
            })
            .collect();
        let out = OutDataset {
            version: FORMAT_VERSION,
            name: self.name(),
            num_classes: self.num_classes(),
            multi_label: self.multi_label(),
            graphs,
            graph_split: self.graph_split().map(|s| RawSplit {
                train: s.train.clone(),
                val: s.val.clone(),
                test: s.test.clone(),
            }),
        };
        serde_json::to_writer(w, &out)?;
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{"version":1,"name":"tiny","num_classes":2,"multi_label":false,
        "graphs":[{"num_nodes":3,"edges":[[0,1],[2,1],[0,1]],
        "features":[[1.0,0.0],[0.0,1.0],[0.5,0.5]],"labels":[0,1,1],
        "train_mask":[true,false,false],"val_mask":[false,true,false],"test_mask":[false,false,true]}]}"#;

    #[test]
    fn loads_and_symmetrizes() {
        let ds = GraphDataset::from_json_str(TINY).unwrap();
        let g = &ds.graphs()[0];
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.adjacency().nnz(), 4);
        assert_eq!(ds.num_features(), 2);
        assert!(!ds.is_inductive());
    }

    #[test]
    fn round_trip() {
        let ds = GraphDataset::from_json_str(TINY).unwrap();
        let s = ds.to_json_string().unwrap();
        let back = GraphDataset::from_json_str(&s).unwrap();
        assert_eq!(back.to_json_string().unwrap(), s);
        assert_eq!(back.graphs()[0].adjacency(), ds.graphs()[0].adjacency());
    }

    #[test]
    fn overlapping_masks_rejected() {
        let bad = TINY.replace(r#""val_mask":[false,true,false]"#, r#""val_mask":[true,true,false]"#);
        let err = GraphDataset::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("masks not disjoint"), "{err}");
    }

    #[test]
    fn errors_name_the_field() {
        let bad = TINY.replace(r#""labels":[0,1,1]"#, r#""labels":[0,1,5]"#);
        let err = GraphDataset::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("graphs[0].labels"), "{err}");

        let bad = TINY.replace("[2,1]", "[2,7]");
        let err = GraphDataset::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("graphs[0].edges"), "{err}");

        let bad = TINY.replace(r#""train_mask":[true,false,false]"#, r#""train_mask":[true]"#);
        let err = GraphDataset::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("graphs[0].train_mask"), "{err}");
    }

    #[test]
    fn version_and_parse_errors() {
        let v2 = TINY.replace(r#""version":1"#, r#""version":2"#);
        assert!(matches!(GraphDataset::from_json_str(&v2), Err(Error::Version(2))));
        assert!(matches!(GraphDataset::from_json_str("{not json"), Err(Error::Parse(_))));
    }
}
