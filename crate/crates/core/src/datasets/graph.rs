use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{split, Dataset, DatasetKind, Sample, Sequence, SplitSpec};
use crate::error::{Error, Result};
use crate::ndkernel::Tensor;
use crate::rng;

/// Directed citation `src -> dst`, present from time `t_birth` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub t_birth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub nodes: usize,
    pub stamps: usize,
    pub attach_exponent: f64,
    #[serde(skip)]
    pub edges: Vec<Edge>,
}

/// Adjacency snapshot at each integer time `1..=stamps`.
pub fn snapshots_from_edges(nodes: usize, stamps: usize, edges: &[Edge]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(stamps);
    let mut a = Tensor::zeros(&[nodes, nodes]);
    let mut sorted: Vec<&Edge> = edges.iter().collect();
    sorted.sort_by(|x, y| x.t_birth.total_cmp(&y.t_birth));
    let mut next = 0;
    for t in 1..=stamps {
        while next < sorted.len() && sorted[next].t_birth <= t as f64 {
            let e = sorted[next];
            if e.src >= nodes || e.dst >= nodes || e.src == e.dst {
                return Err(Error::Data(format!("invalid edge {} -> {}", e.src, e.dst)));
            }
            a.data_mut()[e.src * nodes + e.dst] = 1.0;
            next += 1;
        }
        out.push(a.clone());
    }
    Ok(out)
}

/// Growing citation graph around a core paper (node 0).
///
/// Papers `1..nodes` appear at times uniform in `[1, stamps]`, numbered in
/// order of appearance. Each cites the core and `1 + Poisson(2)` earlier
/// papers picked without replacement with weight `(in_degree + 1)^attach_exponent`.
/// The sequence holds one adjacency snapshot per integer time stamp.
pub fn generate_citation_graph(nodes: usize, stamps: usize, master_seed: u64, attach_exponent: f64) -> Result<Dataset> {
    if nodes < 10 || stamps < 9 {
        return Err(Error::Config(format!("graph needs nodes >= 10 and stamps >= 9, got {nodes}/{stamps}")));
    }
    let mut r = rng::child(master_seed, "citations", 0);
    let mut births: Vec<f64> = (1..nodes).map(|_| r.random_range(1.0..=stamps as f64)).collect();
    births.sort_by(f64::total_cmp);
    births.insert(0, 1.0);

    let poisson = Poisson::new(2.0).expect("positive rate");
    let mut in_degree = vec![0usize; nodes];
    let mut edges = Vec::new();
    for src in 1..nodes {
        let t_birth = births[src];
        edges.push(Edge { src, dst: 0, t_birth });
        in_degree[0] += 1;
        let earlier = src - 1;
        let k = (1 + poisson.sample(&mut r) as usize).min(earlier);
        if k == 0 {
            continue;
        }
        let weights: Vec<f64> = (1..src).map(|j| ((in_degree[j] + 1) as f64).powf(attach_exponent)).collect();
        let picked = rand::seq::index::sample_weighted(&mut r, earlier, |i| weights[i], k)
            .map_err(|e| Error::Config(format!("attachment weights: {e}")))?;
        let mut cited: Vec<usize> = picked.into_iter().map(|i| i + 1).collect();
        cited.sort_unstable();
        for dst in cited {
            edges.push(Edge { src, dst, t_birth });
            in_degree[dst] += 1;
        }
    }

    let snapshots = snapshots_from_edges(nodes, stamps, &edges)?;
    let splits = split(stamps, SplitSpec::default_for(stamps), rng::derive_seed(master_seed, "split", 0))?;
    let samples = snapshots
        .into_iter()
        .zip(splits)
        .enumerate()
        .map(|(i, (x, split))| Sample {
            t: (i + 1) as f64,
            x,
            split,
        })
        .collect();
    Ok(Dataset {
        kind: DatasetKind::Graph,
        master_seed,
        sequences: vec![Sequence {
            id: 0,
            style_seed: master_seed,
            samples,
        }],
        graph: Some(GraphInfo {
            nodes,
            stamps,
            attach_exponent,
            edges,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_degrees(a: &Tensor) -> Vec<usize> {
        let n = a.shape()[0];
        (0..n).map(|j| (0..n).filter(|&i| a.data()[i * n + j] == 1.0).count()).collect()
    }

    #[test]
    fn snapshots_grow_and_cite_backwards() {
        let d = generate_citation_graph(120, 50, 3, 1.0).unwrap();
        let seq = &d.sequences[0];
        assert_eq!(seq.samples.len(), 50);
        let n = 120;
        for w in seq.samples.windows(2) {
            assert!(w[0].x.data().iter().zip(w[1].x.data()).all(|(a, b)| a <= b));
        }
        let last = &seq.samples[49].x;
        for i in 0..n {
            assert_eq!(last.data()[i * n + i], 0.0);
            for j in 0..n {
                if last.data()[i * n + j] == 1.0 {
                    assert!(i > j, "edge {i} -> {j} points forward in time");
                }
            }
        }
        assert_eq!(in_degrees(last)[0], n - 1);
        d.validate().unwrap();
    }

    #[test]
    fn generator_is_pure() {
        assert_eq!(
            generate_citation_graph(30, 12, 8, 1.0).unwrap(),
            generate_citation_graph(30, 12, 8, 1.0).unwrap()
        );
        assert!(generate_citation_graph(5, 12, 8, 1.0).is_err());
    }

    #[test]
    fn preferential_attachment_has_heavier_tail() {
        let max_in = |alpha: f64, seed: u64| {
            let d = generate_citation_graph(120, 50, seed, alpha).unwrap();
            let deg = in_degrees(&d.sequences[0].samples[49].x);
            *deg[1..].iter().max().unwrap() as f64
        };
        let median = |alpha: f64| {
            let mut v: Vec<f64> = (0..20).map(|s| max_in(alpha, s)).collect();
            v.sort_by(f64::total_cmp);
            (v[9] + v[10]) / 2.0
        };
        assert!(median(1.0) > median(0.0));
    }
}
