//! Sample-space and latent-space quality measures, and the Gaussian KL term.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::exec::Exec;
use crate::ndkernel::Tensor;
use crate::rng;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const BCE_CLAMP: f64 = 1e-7;
pub const EIOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")]
    TooSmall { h: usize, w: usize },
    #[error("expected a single-channel HxW image, got shape {0:?}")]
    NotAnImage(Vec<usize>),
    #[error("target contains a non-binary value {0}")]
    NonBinaryTarget(f64),
    #[error("adjacency matrix must be square, got {0:?}")]
    NotSquare(Vec<usize>),
    #[error("cosine distance of a zero vector")]
    ZeroVector,
    #[error("monte carlo estimate needs at least 1000 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Metric names as they appear in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MseX,
    SsimX,
    PsnrX,
    BceX,
    EiouX,
    MseZ,
    CosdistZ,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::MseX,
        Metric::SsimX,
        Metric::PsnrX,
        Metric::BceX,
        Metric::EiouX,
        Metric::MseZ,
        Metric::CosdistZ,
    ];
    pub const IMAGE: [Metric; 5] = [Metric::MseX, Metric::SsimX, Metric::PsnrX, Metric::MseZ, Metric::CosdistZ];
    pub const GRAPH: [Metric; 4] = [Metric::BceX, Metric::EiouX, Metric::MseZ, Metric::CosdistZ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MseX => "mse_x",
            Metric::SsimX => "ssim_x",
            Metric::PsnrX => "psnr_x",
            Metric::BceX => "bce_x",
            Metric::EiouX => "eiou_x",
            Metric::MseZ => "mse_z",
            Metric::CosdistZ => "cosdist_z",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Metric::SsimX | Metric::PsnrX | Metric::EiouX => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    Ok(mse_slices(a.data(), b.data()))
}

pub fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    s / a.len() as f64
}

/// PSNR in dB; `+inf` for identical inputs.
pub fn psnr(a: &Tensor, b: &Tensor, data_range: f64) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?, data_range))
}

pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (data_range * data_range / mse).log10()
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h x w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| taps[j] * img[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| taps[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over all valid 11x11 Gaussian windows.
pub fn ssim(a: &Tensor, b: &Tensor, data_range: f64) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let (h, w) = a.dims2().ok_or_else(|| MetricError::NotAnImage(a.shape().to_vec()))?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::TooSmall { h, w });
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let (x, y) = (a.data(), b.data());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mu_x = filter_valid(x, h, w, &taps);
    let mu_y = filter_valid(y, h, w, &taps);
    let e_xx = filter_valid(&xx, h, w, &taps);
    let e_yy = filter_valid(&yy, h, w, &taps);
    let e_xy = filter_valid(&xy, h, w, &taps);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

fn check_binary(target: &[f64]) -> Result<(), MetricError> {
    match target.iter().find(|&&t| t != 0.0 && t != 1.0) {
        Some(&t) => Err(MetricError::NonBinaryTarget(t)),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(pred: &Tensor, target: &Tensor) -> Result<f64, MetricError> {
    same_shape(pred, target)?;
    check_binary(target.data())?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(s / pred.len() as f64)
}

/// Edge IoU of the thresholded prediction against the true adjacency.
///
/// Diagonal entries are ignored. Two empty edge sets score 1.
pub fn e_iou(pred_adj: &Tensor, true_adj: &Tensor, threshold: f64) -> Result<f64, MetricError> {
    same_shape(pred_adj, true_adj)?;
    let n = match pred_adj.dims2() {
        Some((r, c)) if r == c => r,
        _ => return Err(MetricError::NotSquare(pred_adj.shape().to_vec())),
    };
    check_binary(true_adj.data())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = pred_adj.get2(i, j) > threshold;
            let t = true_adj.get2(i, j) == 1.0;
            inter += (p && t) as usize;
            union += (p || t) as usize;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// `1 - cos(angle)`, in [0, 2].
pub fn cosine_distance(z1: &[f64], z2: &[f64]) -> Result<f64, MetricError> {
    if z1.len() != z2.len() {
        return Err(MetricError::ShapeMismatch(vec![z1.len()], vec![z2.len()]));
    }
    let dot: f64 = z1.iter().zip(z2).map(|(a, b)| a * b).sum();
    let aa: f64 = z1.iter().map(|a| a * a).sum();
    let bb: f64 = z2.iter().map(|b| b * b).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((1.0 - dot / (aa * bb).sqrt()).clamp(0.0, 2.0))
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` in closed form.
pub fn kl_gaussian_std(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

const MC_CHUNK: usize = 1 << 14;

/// Monte Carlo estimate of the same KL: average of `log q(z) - log p(z)`
/// over `z ~ q`. Returns the estimate and its standard error.
pub fn kl_monte_carlo(mu: &[f64], logvar: &[f64], n_samples: usize, seed: u64) -> Result<(f64, f64), MetricError> {
    kl_monte_carlo_with(Exec::Sequential, mu, logvar, n_samples, seed)
}

pub fn kl_monte_carlo_with(
    exec: Exec,
    mu: &[f64],
    logvar: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64), MetricError> {
    if n_samples < 1000 {
        return Err(MetricError::TooFewSamples(n_samples));
    }
    if mu.len() != logvar.len() {
        return Err(MetricError::ShapeMismatch(vec![mu.len()], vec![logvar.len()]));
    }
    let chunks = n_samples.div_ceil(MC_CHUNK);
    // Each chunk has its own derived stream, so the result does not depend on `exec`.
    let partial = exec.map_range(chunks, |c| {
        let mut r = rng::child(seed, "kl_mc", c as u64);
        let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            let mut log_ratio = 0.0;
            for (&m, &lv) in mu.iter().zip(logvar) {
                let eps = rng::normal(&mut r);
                let z = m + (0.5 * lv).exp() * eps;
                // log q - log p; the 2π terms cancel.
                log_ratio += -0.5 * lv - 0.5 * eps * eps + 0.5 * z * z;
            }
            s += log_ratio;
            s2 += log_ratio * log_ratio;
        }
        (s, s2)
    });
    let (s, s2) = partial.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = n_samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
