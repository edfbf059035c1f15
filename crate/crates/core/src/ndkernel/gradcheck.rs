//! Central finite differences, used as an independent oracle for `backward`.

use super::{Gradients, ParamStore, Tensor};

pub const DEFAULT_FD_EPS: f64 = 1e-4;

/// Fourth-order central difference
/// `(8 (f(p + h) - f(p - h)) - (f(p + 2h) - f(p - 2h))) / (12 h)`
/// for every scalar of every parameter.
///
/// The higher order allows a step large enough that rounding noise in the
/// loss stays far below the gradients being checked.
pub fn finite_difference_gradient<E>(
    loss_fn: impl FnMut(&ParamStore) -> Result<f64, E>,
    params: &ParamStore,
    eps: f64,
) -> Result<Gradients, E> {
    adaptive_finite_difference_gradient(loss_fn, params, eps, 1)
}

/// Fourth-order differences at steps `eps, 2 eps, ..., 2^(levels-1) eps`,
/// keeping per entry the estimate closest to its neighbour at the next step.
///
/// Small steps survive kinks (ReLU, clamp) nearby; large steps shrink the
/// rounding noise `ulp(loss) / h` where the loss is smooth. Agreement between
/// neighbouring steps picks between the two without looking at `backward`.
pub fn adaptive_finite_difference_gradient<E>(
    mut loss_fn: impl FnMut(&ParamStore) -> Result<f64, E>,
    params: &ParamStore,
    eps: f64,
    levels: usize,
) -> Result<Gradients, E> {
    assert!(eps > 0.0, "finite-difference step must be positive");
    assert!(levels >= 1, "at least one step size");
    let mut work = params.clone();
    let mut out = Gradients::new(params.len());
    let mut estimates = Vec::with_capacity(levels);
    for id in params.ids() {
        let n = params.get(id).len();
        let mut grad = vec![0.0; n];
        for (k, slot) in grad.iter_mut().enumerate() {
            let orig = params.get(id).data()[k];
            let mut at = |delta: f64| {
                work.get_mut(id).data_mut()[k] = orig + delta;
                loss_fn(&work)
            };
            estimates.clear();
            for level in 0..levels {
                let h = eps * (1u64 << level) as f64;
                let (up1, down1) = (at(h)?, at(-h)?);
                let (up2, down2) = (at(2.0 * h)?, at(-2.0 * h)?);
                estimates.push((8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * h));
            }
            work.get_mut(id).data_mut()[k] = orig;
            *slot = estimates[0];
            let mut best = f64::INFINITY;
            for pair in estimates.windows(2) {
                let gap = (pair[1] - pair[0]).abs();
                if gap < best {
                    best = gap;
                    *slot = pair[0];
                }
            }
        }
        out.set(id, Tensor::new(params.get(id).shape().to_vec(), grad).expect("same shape"));
    }
    Ok(out)
}

/// Largest elementwise `|analytic - numeric| / max(|analytic|, floor)` over all parameters.
///
/// Returns the error and the name of the parameter where it occurs.
pub fn max_relative_error(
    params: &ParamStore,
    analytic: &Gradients,
    numeric: &Gradients,
    floor: f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for id in params.ids() {
        let a = analytic.get_or_zeros(id, params.get(id));
        let n = numeric.get_or_zeros(id, params.get(id));
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let err = (x - y).abs() / x.abs().max(floor);
            if err > worst.0 || err.is_nan() {
                worst = (err, params.name(id).to_owned());
            }
        }
    }
    worst
}
