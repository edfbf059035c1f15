//! Triplet evaluation: encode the outer samples, interpolate at the
//! attribute-derived weight, decode, and compare with the middle sample in
//! both sample space and latent space.

mod experiments;
mod report;

pub use experiments::{
    label_budget_study, rank_ratio, run_iat_experiment, sweep_rank_dim, train_model, CellStatus, ExperimentOutput, RunSpec,
};
pub use report::{
    export_report, load_report, load_raw_csv, write_raw_csv, ReportFormat, REPORT_KEY_COLUMNS,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, DatasetKind, Split, Triplet};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::iat::InterpMlp;
use crate::interp::{interpolate, lambda_from_times, InterpolationKind};
use crate::metrics::{bce, cosine_distance, e_iou, mse, mse_slices, psnr, ssim, Metric, EIOU_THRESHOLD};
use crate::models::LatentModel;
use crate::ndkernel::{ParamStore, Tensor};
use crate::rng;

/// Pixel values span [-1, 1].
pub const IMAGE_DATA_RANGE: f64 = 2.0;

pub fn metric_set(kind: DatasetKind) -> &'static [Metric] {
    match kind {
        DatasetKind::Image => &Metric::IMAGE,
        DatasetKind::Graph => &Metric::GRAPH,
    }
}

/// An interpolation algorithm, optionally followed by a learned interpolator
/// (parameters named with the IAT prefix).
#[derive(Clone, Copy, Debug)]
pub struct Interpolator<'a> {
    pub kind: InterpolationKind,
    pub mlp: Option<&'a ParamStore>,
}

impl<'a> Interpolator<'a> {
    pub fn plain(kind: InterpolationKind) -> Self {
        Self { kind, mlp: None }
    }

    pub fn interpolate(&self, block: usize, z1: &[f64], z3: &[f64], lambda: crate::interp::InterpolationWeight) -> Result<Vec<f64>> {
        let zi = interpolate(self.kind, z1, z3, lambda)?;
        match self.mlp {
            Some(p) if !p.is_empty() => InterpMlp::apply(p, block, z1, z3, &zi),
            _ => Ok(zi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletResult {
    pub id: usize,
    pub triplet: Triplet,
    pub t: [f64; 3],
    pub algorithm: InterpolationKind,
    /// One value per configured metric, in [`metric_set`] order.
    pub values: Vec<(Metric, f64)>,
}

impl TripletResult {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == m).map(|&(_, v)| v)
    }
}

fn score(
    kind: DatasetKind,
    id: usize,
    triplet: Triplet,
    t: [f64; 3],
    algorithm: InterpolationKind,
    x_inter: &Tensor,
    x2: &Tensor,
    z_inter: &[f64],
    z2: &[f64],
) -> Result<TripletResult> {
    let mut values = Vec::with_capacity(5);
    for &m in metric_set(kind) {
        let v = match m {
            Metric::MseX => mse(x_inter, x2)?,
            Metric::SsimX => ssim(x_inter, x2, IMAGE_DATA_RANGE)?,
            Metric::PsnrX => psnr(x_inter, x2, IMAGE_DATA_RANGE)?,
            Metric::BceX => bce(x_inter, x2)?,
            Metric::EiouX => e_iou(x_inter, x2, EIOU_THRESHOLD)?,
            Metric::MseZ => mse_slices(z_inter, z2),
            Metric::CosdistZ => cosine_distance(z_inter, z2)?,
        };
        values.push((m, v));
    }
    Ok(TripletResult {
        id,
        triplet,
        t,
        algorithm,
        values,
    })
}

fn evaluate_with_codes<M: LatentModel + ?Sized>(
    model: &M,
    data: &Dataset,
    id: usize,
    triplet: Triplet,
    codes: [&[f64]; 3],
    interp: &Interpolator,
) -> Result<TripletResult> {
    let [s1, s2, s3] = data.triplet_samples(&triplet);
    let lambda = lambda_from_times(s1.t, s2.t, s3.t)?;
    let z_inter = interp.interpolate(model.latent_block(), codes[0], codes[2], lambda)?;
    let x_inter = model.decode(&z_inter)?;
    score(data.kind, id, triplet, [s1.t, s2.t, s3.t], interp.kind, &x_inter, &s2.x, &z_inter, codes[1])
}

/// Scores one triplet using posterior means only. Failures carry the triplet id.
pub fn evaluate_triplet<M: LatentModel + ?Sized>(
    model: &M,
    data: &Dataset,
    id: usize,
    triplet: Triplet,
    interp: &Interpolator,
) -> Result<TripletResult> {
    let run = || {
        let codes = data
            .triplet_samples(&triplet)
            .map(|s| model.encode_map(&s.x));
        let [a, b, c] = codes;
        let (a, b, c) = (a?, b?, c?);
        evaluate_with_codes(model, data, id, triplet, [&a, &b, &c], interp)
    };
    run().map_err(|e| Error::Triplet { id, source: Box::new(e) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every triplet distinct.
    WithoutReplacement,
    /// The pool was exhausted; the remainder was drawn with replacement.
    Mixed,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::WithoutReplacement => "without_replacement",
            Self::Mixed => "mixed",
        }
    }
}

/// `n` triplets from `split`: a seeded shuffle of all valid triplets, topped
/// up with uniform draws with replacement if there are fewer than `n`.
pub fn sample_eval_triplets(data: &Dataset, split: Split, n: usize, seed: u64) -> Result<(Vec<Triplet>, SamplingMode)> {
    let mut all = data.all_triplets(split);
    if all.is_empty() {
        return Err(Error::Data(format!("no {split:?} triplets available")));
    }
    let mut r = rng::seeded(seed);
    all.shuffle(&mut r);
    if n <= all.len() {
        all.truncate(n);
        return Ok((all, SamplingMode::WithoutReplacement));
    }
    let extra: Vec<Triplet> = (all.len()..n).map(|_| all[r.random_range(0..all.len())]).collect();
    all.extend(extra);
    Ok((all, SamplingMode::Mixed))
}

/// Grouping keys of one report row.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReportKeys {
    pub algorithm: String,
    /// Model setting such as `base`, `D8` or `R32`.
    pub setting: String,
    /// IAT variant or `none`.
    pub variant: String,
    /// Labeled budget or `all`.
    pub budget: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    pub se: f64,
    /// Values included in the mean.
    pub n: usize,
    /// Non-finite values left out (infinite PSNR of exact reconstructions).
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub keys: ReportKeys,
    pub n_triplets: usize,
    pub sampling: SamplingMode,
    /// Sorted by metric name.
    pub metrics: Vec<MetricSummary>,
}

impl MetricReport {
    pub fn summary(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|s| s.metric == m)
    }

    pub fn mean(&self, m: Metric) -> Option<f64> {
        self.summary(m).map(|s| s.mean)
    }
}

/// Arithmetic mean and standard error `sd / sqrt(n)` (sample sd) of the finite values.
pub fn summarize(metric: Metric, values: impl IntoIterator<Item = f64>) -> MetricSummary {
    let (mut finite, mut excluded) = (Vec::new(), 0);
    for v in values {
        if v.is_finite() {
            finite.push(v);
        } else {
            excluded += 1;
        }
    }
    let n = finite.len();
    let mean = finite.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MetricSummary {
        metric,
        mean,
        se,
        n,
        excluded,
    }
}

/// Aggregates results of one algorithm into a report row.
pub fn aggregate(keys: ReportKeys, sampling: SamplingMode, results: &[&TripletResult]) -> Result<MetricReport> {
    if results.is_empty() {
        return Err(Error::Data("cannot aggregate zero triplets".into()));
    }
    let mut by_metric: BTreeMap<&'static str, (Metric, Vec<f64>)> = BTreeMap::new();
    for r in results {
        for &(m, v) in &r.values {
            by_metric.entry(m.name()).or_insert_with(|| (m, Vec::new())).1.push(v);
        }
    }
    Ok(MetricReport {
        keys,
        n_triplets: results.len(),
        sampling,
        metrics: by_metric.into_values().map(|(m, v)| summarize(m, v)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutput {
    /// One row per algorithm, in the requested order.
    pub reports: Vec<MetricReport>,
    /// Every per-triplet result, grouped by algorithm.
    pub raw: Vec<TripletResult>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n_triplets: usize,
    pub seed: u64,
    pub split: Split,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n_triplets: 2000,
            seed: 0,
            split: Split::Test,
        }
    }
}

/// Scores the same sampled triplets under each algorithm.
///
/// Encodings of the involved samples are computed once; triplets are
/// scored with `exec`, which does not change any number.
pub fn evaluate_suite<M: LatentModel + ?Sized>(
    model: &M,
    data: &Dataset,
    kinds: &[InterpolationKind],
    cfg: &SuiteConfig,
    mlp: Option<&ParamStore>,
    keys: &ReportKeys,
    exec: Exec,
) -> Result<SuiteOutput> {
    if kinds.is_empty() {
        return Err(Error::Config("no interpolation algorithms requested".into()));
    }
    let (triplets, sampling) = sample_eval_triplets(data, cfg.split, cfg.n_triplets, cfg.seed)?;

    let mut needed: Vec<(usize, usize)> =
        triplets.iter().flat_map(|t| t.idx.iter().map(move |&i| (t.sequence, i))).collect();
    needed.sort_unstable();
    needed.dedup();
    let codes = exec.map(&needed, |&(s, i)| model.encode_map(&data.sample(s, i).x));
    let mut cache = BTreeMap::new();
    for (key, code) in needed.into_iter().zip(codes) {
        cache.insert(key, code?);
    }

    let mut reports = Vec::with_capacity(kinds.len());
    let mut raw = Vec::with_capacity(kinds.len() * triplets.len());
    for &kind in kinds {
        let interp = Interpolator { kind, mlp };
        let results = exec.map_range(triplets.len(), |id| {
            let tr = triplets[id];
            let c = tr.idx.map(|i| cache[&(tr.sequence, i)].as_slice());
            evaluate_with_codes(model, data, id, tr, c, &interp).map_err(|e| Error::Triplet { id, source: Box::new(e) })
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let refs: Vec<&TripletResult> = results.iter().collect();
        let row_keys = ReportKeys {
            algorithm: kind.as_str().to_owned(),
            ..keys.clone()
        };
        reports.push(aggregate(row_keys, sampling, &refs)?);
        raw.extend(results);
    }
    Ok(SuiteOutput { reports, raw })
}
