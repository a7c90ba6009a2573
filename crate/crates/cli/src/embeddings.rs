use std::path::Path;

use oad_core::graph::{GraphDataset, PreparedGraph};
use oad_core::models::Checkpoint;
use oad_core::rng::seeded_rng;
use rand::Rng;

use crate::error::{CliError, Result};
use crate::output::{write_atomic, CSV_SCHEMA_VERSION};

/// Exports the last hidden layer of a student checkpoint on graph `graph`
/// of `dataset` and the Euclidean distance of every node to an anchor node
/// drawn from `anchor_seed`. Returns the anchor.
///
/// Columns: `node, distance, h0, h1, ...`.
pub fn export_embeddings(
    checkpoint: &Path,
    dataset: &GraphDataset,
    graph: usize,
    anchor_seed: u64,
    out: &Path,
) -> Result<usize> {
    let model = Checkpoint::load(checkpoint)?.into_student()?;
    if model.input_dim() != dataset.num_features() {
        return Err(CliError::input(
            checkpoint,
            format!(
                "checkpoint expects {} features, dataset has {}",
                model.input_dim(),
                dataset.num_features()
            ),
        ));
    }
    let g = dataset
        .graphs()
        .get(graph)
        .ok_or_else(|| CliError::Invalid(format!("graph {graph} out of range")))?;
    let (h, _) = model.predict(&PreparedGraph::new(g)?)?;
    let anchor = seeded_rng(anchor_seed).random_range(0..h.rows());
    let distances = distances_to(&h, anchor);

    let mut bytes = format!("# oad embeddings v{CSV_SCHEMA_VERSION} anchor={anchor}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        let mut header = vec!["node".to_string(), "distance".to_string()];
        header.extend((0..h.cols()).map(|j| format!("h{j}")));
        w.write_record(&header)?;
        for i in 0..h.rows() {
            let mut rec = vec![i.to_string(), distances[i].to_string()];
            rec.extend(h.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| CliError::io(out, e))?;
    }
    write_atomic(out, &bytes)?;
    Ok(anchor)
}

/// Euclidean distance of every row of `h` to row `anchor`.
pub fn distances_to(h: &oad_core::Matrix, anchor: usize) -> Vec<f64> {
    let a = h.row(anchor);
    (0..h.rows())
        .map(|i| h.row(i).iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .collect()
}
