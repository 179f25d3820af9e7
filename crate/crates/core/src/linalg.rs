//! Thin helpers over faer's dense routines.

use faer::Mat;

use crate::error::{Error, Result};

/// Singular values in descending order.
pub fn singular_values(mat: &Mat<f64>) -> Result<Vec<f64>> {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut sv = mat
        .singular_values()
        .map_err(|e| Error::LinAlg(format!("SVD did not converge: {e:?}")))?;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn frobenius(mat: &Mat<f64>) -> f64 {
    mat.norm_l2()
}

pub fn is_zero(mat: &Mat<f64>) -> bool {
    (0..mat.ncols()).all(|j| (0..mat.nrows()).all(|i| mat[(i, j)] == 0.0))
}

pub fn all_finite(mat: &Mat<f64>) -> bool {
    (0..mat.ncols()).all(|j| (0..mat.nrows()).all(|i| mat[(i, j)].is_finite()))
}

/// Builds a matrix from row-major data.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    assert_eq!(rows * cols, data.len());
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub fn to_row_major(mat: &Mat<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(mat.nrows() * mat.ncols());
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            out.push(mat[(i, j)]);
        }
    }
    out
}

pub fn diag(values: &[f64]) -> Mat<f64> {
    Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
}

pub fn column(mat: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..mat.nrows()).map(|i| mat[(i, j)]).collect()
}
