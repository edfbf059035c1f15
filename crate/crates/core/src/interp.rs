//! Latent-space interpolation: linear, spherical, normalised and
//! normalised-spherical, plus the attribute-to-weight mapping used when
//! interpolating between two observed samples.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::ndkernel::{Graph, KernelError, NodeId, Tensor};

/// Below this `sin(angle)` spherical paths fall back to the linear one.
pub const PARALLEL_SIN_EPS: f64 = 1e-7;
/// Cosine below `-1 + ANTIPODAL_EPS` makes the great circle non-unique.
pub const ANTIPODAL_EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("latent dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("spherical interpolation needs a nonzero vector")]
    ZeroVector,
    #[error("spherical interpolation between antipodal points is undefined")]
    Antipodal,
    #[error("spherical interpolation needs at least two dimensions")]
    TooFewDims,
    #[error("interpolation weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("attributes must satisfy t1 < t2 < t3, got ({0}, {1}, {2})")]
    Unordered(f64, f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationKind {
    Linear,
    Slerp,
    Norm,
    SlerpNorm,
}

impl InterpolationKind {
    pub const ALL: [InterpolationKind; 4] = [Self::Linear, Self::Slerp, Self::Norm, Self::SlerpNorm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Slerp => "slerp",
            Self::Norm => "norm",
            Self::SlerpNorm => "slerp_norm",
        }
    }
}

impl fmt::Display for InterpolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterpolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown interpolation kind {s:?} (expected linear, slerp, norm or slerp_norm)"))
    }
}

/// λ in [0, 1]; 0 selects the first endpoint.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct InterpolationWeight(f64);

impl InterpolationWeight {
    pub fn new(lambda: f64) -> Result<Self, InterpError> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Self(lambda))
        } else {
            Err(InterpError::WeightOutOfRange(lambda))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Weight placing `t2` between `t1` and `t3`: `(t2 - t1) / (t3 - t1)`.
pub fn lambda_from_times(t1: f64, t2: f64, t3: f64) -> Result<InterpolationWeight, InterpError> {
    if !(t1 < t2 && t2 < t3) {
        return Err(InterpError::Unordered(t1, t2, t3));
    }
    InterpolationWeight::new((t2 - t1) / (t3 - t1))
}

fn check_dims(z1: &[f64], z2: &[f64]) -> Result<(), InterpError> {
    if z1.len() != z2.len() {
        return Err(InterpError::DimMismatch(z1.len(), z2.len()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(a: f64, z1: &[f64], b: f64, z2: &[f64]) -> Vec<f64> {
    z1.iter().zip(z2).map(|(x, y)| a * x + b * y).collect()
}

/// Angle between two vectors, or `None` when they are (nearly) parallel.
fn spherical_angle(z1: &[f64], z2: &[f64]) -> Result<Option<f64>, InterpError> {
    check_dims(z1, z2)?;
    if z1.len() < 2 {
        return Err(InterpError::TooFewDims);
    }
    let (n1, n2) = (dot(z1, z1).sqrt(), dot(z2, z2).sqrt());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(InterpError::ZeroVector);
    }
    let cos = (dot(z1, z2) / (n1 * n2)).clamp(-1.0, 1.0);
    if cos < -1.0 + ANTIPODAL_EPS {
        return Err(InterpError::Antipodal);
    }
    let omega = cos.acos();
    if omega.sin() < PARALLEL_SIN_EPS {
        return Ok(None);
    }
    Ok(Some(omega))
}

pub fn lerp(z1: &[f64], z2: &[f64], w: InterpolationWeight) -> Result<Vec<f64>, InterpError> {
    check_dims(z1, z2)?;
    let l = w.get();
    Ok(combine(1.0 - l, z1, l, z2))
}

pub fn slerp(z1: &[f64], z2: &[f64], w: InterpolationWeight) -> Result<Vec<f64>, InterpError> {
    let l = w.get();
    match spherical_angle(z1, z2)? {
        None => lerp(z1, z2, w),
        Some(omega) => {
            let s = omega.sin();
            Ok(combine(((1.0 - l) * omega).sin() / s, z1, (l * omega).sin() / s, z2))
        }
    }
}

pub fn norm_interp(z1: &[f64], z2: &[f64], w: InterpolationWeight) -> Result<Vec<f64>, InterpError> {
    check_dims(z1, z2)?;
    let l = w.get();
    let den = ((1.0 - l).powi(2) + l * l).sqrt();
    Ok(combine((1.0 - l) / den, z1, l / den, z2))
}

pub fn slerp_norm(z1: &[f64], z2: &[f64], w: InterpolationWeight) -> Result<Vec<f64>, InterpError> {
    let l = w.get();
    match spherical_angle(z1, z2)? {
        // As the angle vanishes the coefficients tend to those of `norm_interp`.
        None => norm_interp(z1, z2, w),
        Some(omega) => {
            let (a, b) = (((1.0 - l) * omega).sin(), (l * omega).sin());
            let den = (a * a + b * b).sqrt();
            Ok(combine(a / den, z1, b / den, z2))
        }
    }
}

pub fn interpolate(
    kind: InterpolationKind,
    z1: &[f64],
    z2: &[f64],
    w: InterpolationWeight,
) -> Result<Vec<f64>, InterpError> {
    match kind {
        InterpolationKind::Linear => lerp(z1, z2, w),
        InterpolationKind::Slerp => slerp(z1, z2, w),
        InterpolationKind::Norm => norm_interp(z1, z2, w),
        InterpolationKind::SlerpNorm => slerp_norm(z1, z2, w),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InterpGraphError {
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Differentiable row-wise interpolation of two `[rows, dim]` nodes.
///
/// Row `i` uses weight `weights[i]`. The branch taken for the spherical kinds
/// (great circle vs. near-parallel fallback) is decided from the current
/// values, exactly as in the value-level functions.
pub fn interpolate_rows(
    g: &mut Graph,
    kind: InterpolationKind,
    z1: NodeId,
    z2: NodeId,
    weights: &[InterpolationWeight],
) -> Result<NodeId, InterpGraphError> {
    let shape = g.shape(z1).to_vec();
    let (rows, dim) = match shape.as_slice() {
        [r, d] => (*r, *d),
        _ => return Err(KernelError::ShapeMismatch { op: "interpolate_rows", left: shape, right: vec![] }.into()),
    };
    if g.shape(z2) != [rows, dim] {
        return Err(InterpError::DimMismatch(dim, g.shape(z2).last().copied().unwrap_or(0)).into());
    }
    assert_eq!(weights.len(), rows, "one weight per row");

    match kind {
        InterpolationKind::Linear | InterpolationKind::Norm => {
            // Both are fixed linear combinations: build per-row coefficient columns.
            let (mut c1, mut c2) = (Vec::with_capacity(rows), Vec::with_capacity(rows));
            for w in weights {
                let l = w.get();
                let den = if kind == InterpolationKind::Norm {
                    ((1.0 - l).powi(2) + l * l).sqrt()
                } else {
                    1.0
                };
                c1.push((1.0 - l) / den);
                c2.push(l / den);
            }
            let a = g.input(Tensor::matrix(rows, 1, c1).expect("column"));
            let b = g.input(Tensor::matrix(rows, 1, c2).expect("column"));
            let a = g.broadcast(a, &[rows, dim])?;
            let b = g.broadcast(b, &[rows, dim])?;
            let t1 = g.mul(a, z1)?;
            let t2 = g.mul(b, z2)?;
            Ok(g.add(t1, t2)?)
        }
        InterpolationKind::Slerp | InterpolationKind::SlerpNorm => {
            let mut outs = Vec::with_capacity(rows);
            for (r, w) in weights.iter().enumerate() {
                let a = g.slice(z1, 0, r, 1)?;
                let b = g.slice(z2, 0, r, 1)?;
                let angle = spherical_angle(g.value(a).data(), g.value(b).data())?;
                let limit = if kind == InterpolationKind::SlerpNorm {
                    InterpolationKind::Norm
                } else {
                    InterpolationKind::Linear
                };
                let out = match angle {
                    None => interpolate_rows(g, limit, a, b, &[*w])?,
                    Some(_) => spherical_row(g, kind == InterpolationKind::SlerpNorm, a, b, w.get(), dim)?,
                };
                outs.push(out);
            }
            Ok(g.concat(&outs, 0)?)
        }
    }
}

fn spherical_row(
    g: &mut Graph,
    normalised: bool,
    a: NodeId,
    b: NodeId,
    lambda: f64,
    dim: usize,
) -> Result<NodeId, KernelError> {
    let ab = g.mul(a, b)?;
    let ab = g.sum(ab)?;
    let aa = g.square(a)?;
    let aa = g.sum(aa)?;
    let bb = g.square(b)?;
    let bb = g.sum(bb)?;
    let norms = g.mul(aa, bb)?;
    let norms = g.sqrt(norms)?;
    let cos = g.div(ab, norms)?;
    let cos = g.clamp(cos, -1.0, 1.0)?;
    let omega = g.acos(cos)?;
    let w1 = g.scale(omega, 1.0 - lambda)?;
    let w1 = g.sin(w1)?;
    let w2 = g.scale(omega, lambda)?;
    let w2 = g.sin(w2)?;
    let den = if normalised {
        let s1 = g.square(w1)?;
        let s2 = g.square(w2)?;
        let s = g.add(s1, s2)?;
        g.sqrt(s)?
    } else {
        g.sin(omega)?
    };
    let c1 = g.div(w1, den)?;
    let c2 = g.div(w2, den)?;
    let c1 = g.reshape(c1, &[1, 1])?;
    let c2 = g.reshape(c2, &[1, 1])?;
    let c1 = g.broadcast(c1, &[1, dim])?;
    let c2 = g.broadcast(c2, &[1, dim])?;
    let t1 = g.mul(c1, a)?;
    let t2 = g.mul(c2, b)?;
    g.add(t1, t2)
}
