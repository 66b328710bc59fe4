//! Scaled dot-product attention: `softmax(Q Kᵀ / √d_k) V`, softmax taken
//! row-wise.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Numerically stable softmax over one row, in place.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn check_shapes(q: &Matrix, k: &Matrix, d_k: usize) -> Result<()> {
    if d_k == 0 {
        return Err(Error::Shape("d_k must be positive".into()));
    }
    if q.cols() != d_k || k.cols() != d_k {
        return Err(Error::Shape(format!(
            "query width {} and key width {} must both equal d_k = {d_k}",
            q.cols(),
            k.cols()
        )));
    }
    if k.rows() == 0 {
        return Err(Error::Shape("attention needs at least one key".into()));
    }
    Ok(())
}

/// Post-softmax attention weights, one row per query.
pub fn attention_weights(q: &Matrix, k: &Matrix, d_k: usize) -> Result<Matrix> {
    check_shapes(q, k, d_k)?;
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut w = Matrix::zeros(q.rows(), k.rows());
    for i in 0..q.rows() {
        let qi = q.row(i);
        let row = w.row_mut(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s = qi.iter().zip(k.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        softmax_in_place(row);
    }
    Ok(w)
}

pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, d_k: usize) -> Result<Matrix> {
    if k.rows() != v.rows() {
        return Err(Error::Shape(format!(
            "{} keys but {} values",
            k.rows(),
            v.rows()
        )));
    }
    attention_weights(q, k, d_k)?.matmul(v)
}
