use super::LatentModel;
use crate::error::Result;
use crate::ndkernel::Tensor;

/// Singular values of the matrix whose rows are `rows`, largest first.
pub fn singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
    if r == 0 || c == 0 {
        return Vec::new();
    }
    let m = nalgebra::DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied());
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Singular values of the stacked posterior means of `xs`.
pub fn mean_singular_values<M: LatentModel + ?Sized>(model: &M, xs: &[&Tensor]) -> Result<Vec<f64>> {
    Ok(singular_values(&model.encode_means(xs)?))
}
