//! Synthetic datasets with a continuous attribute: rotating-shape image
//! sequences and a growing citation graph, their splits, triplet pools and
//! on-disk format.

mod graph;
mod image;
mod io;

pub use graph::{generate_citation_graph, snapshots_from_edges, Edge, GraphInfo};
pub use image::{generate_image_dataset, render_shape};
pub use io::{load_dataset, save_dataset};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndkernel::Tensor;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Image,
    Graph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Sample counts per split for one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSpec {
    /// Half for training, a quarter for validation, the rest for testing
    /// (30/15/15 at 60 samples, 25/12/13 at 50).
    pub fn default_for(n: usize) -> Self {
        let train = n.div_ceil(2);
        let val = n / 4;
        Self {
            train,
            val,
            test: n - train - val,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Seeded random partition of `n` positions into the three splits.
pub fn split(n: usize, spec: SplitSpec, seed: u64) -> Result<Vec<Split>> {
    if spec.total() != n {
        return Err(Error::Config(format!(
            "split sizes {}/{}/{} do not sum to {n}",
            spec.train, spec.val, spec.test
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < spec.train {
            Split::Train
        } else if rank < spec.train + spec.val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Attribute value: rotation in degrees or snapshot time.
    pub t: f64,
    pub x: Tensor,
    pub split: Split,
}

/// One object (images) or the whole growing graph; samples sorted by `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub id: usize,
    pub style_seed: u64,
    pub samples: Vec<Sample>,
}

impl Sequence {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub master_seed: u64,
    pub sequences: Vec<Sequence>,
    pub graph: Option<GraphInfo>,
}

/// Three samples of one sequence with strictly increasing attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub sequence: usize,
    pub idx: [usize; 3],
}

impl Dataset {
    pub fn sample(&self, sequence: usize, i: usize) -> &Sample {
        &self.sequences[sequence].samples[i]
    }

    pub fn triplet_samples(&self, tr: &Triplet) -> [&Sample; 3] {
        tr.idx.map(|i| self.sample(tr.sequence, i))
    }

    pub fn len(&self) -> usize {
        self.sequences.iter().map(|s| s.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every sample of `split`, in sequence order.
    pub fn split_samples(&self, split: Split) -> Vec<&Sample> {
        self.sequences
            .iter()
            .flat_map(|s| s.samples.iter().filter(move |x| x.split == split))
            .collect()
    }

    /// Every valid triplet drawn from `split`, in lexicographic order.
    pub fn all_triplets(&self, split: Split) -> Vec<Triplet> {
        let mut out = Vec::new();
        for (s, seq) in self.sequences.iter().enumerate() {
            let idx = seq.indices(split);
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    for c in b + 1..idx.len() {
                        out.push(Triplet {
                            sequence: s,
                            idx: [idx[a], idx[b], idx[c]],
                        });
                    }
                }
            }
        }
        out
    }

    /// Checks sort order, attribute uniqueness and sample shapes.
    pub fn validate(&self) -> Result<()> {
        let shape = self
            .sequences
            .iter()
            .flat_map(|s| s.samples.first())
            .map(|s| s.x.shape().to_vec())
            .next()
            .ok_or_else(|| Error::Data("dataset has no samples".into()))?;
        for seq in &self.sequences {
            for w in seq.samples.windows(2) {
                if !(w[0].t < w[1].t) {
                    return Err(Error::Data(format!(
                        "sequence {}: attributes not strictly increasing at t={}",
                        seq.id, w[1].t
                    )));
                }
            }
            if let Some(bad) = seq.samples.iter().find(|s| s.x.shape() != shape.as_slice()) {
                return Err(Error::Data(format!("sequence {}: sample shape {:?}", seq.id, bad.x.shape())));
            }
        }
        Ok(())
    }
}
