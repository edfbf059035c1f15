//! Directory layout: `manifest.json`, one LGT1 file per image under
//! `images/`, and `edges.csv` (`src,dst,t_birth`) for graphs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{snapshots_from_edges, Dataset, DatasetKind, Edge, GraphInfo, Sample, Sequence, Split};
use crate::error::{Error, IoError, Result};
use crate::ndkernel::io::{load_tensor, save_tensor};

const FORMAT: &str = "latentgeo-dataset/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    kind: DatasetKind,
    master_seed: u64,
    graph: Option<GraphInfo>,
    sequences: Vec<SequenceEntry>,
}

#[derive(Serialize, Deserialize)]
struct SequenceEntry {
    id: usize,
    style_seed: u64,
    samples: Vec<SampleEntry>,
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    t: f64,
    split: Split,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    file: Option<String>,
}

pub fn save_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    data.validate()?;
    fs::create_dir_all(dir)?;
    let mut sequences = Vec::with_capacity(data.sequences.len());
    if data.kind == DatasetKind::Image {
        fs::create_dir_all(dir.join("images"))?;
    }
    for seq in &data.sequences {
        let mut samples = Vec::with_capacity(seq.samples.len());
        for (k, s) in seq.samples.iter().enumerate() {
            let file = match data.kind {
                DatasetKind::Image => {
                    let name = format!("images/{:03}_{:03}.lgt", seq.id, k);
                    save_tensor(&dir.join(&name), &s.x)?;
                    Some(name)
                }
                DatasetKind::Graph => None,
            };
            samples.push(SampleEntry { t: s.t, split: s.split, file });
        }
        sequences.push(SequenceEntry {
            id: seq.id,
            style_seed: seq.style_seed,
            samples,
        });
    }
    if let Some(g) = &data.graph {
        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        for e in &g.edges {
            w.serialize(e)?;
        }
        w.flush()?;
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        kind: data.kind,
        master_seed: data.master_seed,
        graph: data.graph.clone(),
        sequences,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn read_edges(path: &Path) -> Result<Vec<Edge>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut edges = Vec::new();
    for row in r.deserialize::<Edge>() {
        match row {
            Ok(e) => edges.push(e),
            Err(e) => {
                let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
                return Err(IoError::Malformed {
                    offset,
                    reason: format!("edges.csv: {e}"),
                }
                .into());
            }
        }
    }
    Ok(edges)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let bytes = fs::read(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| {
        // Report the byte offset of the failing line rather than line/column.
        let offset = bytes.split(|&b| b == b'\n').take(e.line().saturating_sub(1)).map(|l| l.len() + 1).sum::<usize>()
            + e.column().saturating_sub(1);
        Error::from(IoError::Malformed {
            offset,
            reason: format!("manifest.json: {e}"),
        })
    })?;
    if manifest.format != FORMAT {
        return Err(IoError::Malformed {
            offset: 0,
            reason: format!("unknown dataset format {:?}", manifest.format),
        }
        .into());
    }

    let mut graph = manifest.graph;
    let snapshots = match (&manifest.kind, &mut graph) {
        (DatasetKind::Graph, Some(g)) => {
            g.edges = read_edges(&dir.join("edges.csv"))?;
            Some(snapshots_from_edges(g.nodes, g.stamps, &g.edges)?)
        }
        (DatasetKind::Graph, None) => return Err(Error::Data("graph manifest without graph section".into())),
        (DatasetKind::Image, _) => None,
    };

    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in manifest.sequences {
        let mut samples = Vec::with_capacity(entry.samples.len());
        for (k, s) in entry.samples.into_iter().enumerate() {
            let x = match (&snapshots, &s.file) {
                (Some(snaps), _) => snaps
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("no snapshot for sample {k}")))?,
                (None, Some(file)) => load_tensor(&dir.join(file))?,
                (None, None) => return Err(Error::Data(format!("image sample {k} has no file"))),
            };
            samples.push(Sample { t: s.t, x, split: s.split });
        }
        sequences.push(Sequence {
            id: entry.id,
            style_seed: entry.style_seed,
            samples,
        });
    }
    let data = Dataset {
        kind: manifest.kind,
        master_seed: manifest.master_seed,
        sequences,
        graph,
    };
    data.validate()?;
    Ok(data)
}
