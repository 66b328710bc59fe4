//! Benchmark fixtures shared by the criterion targets.

use trustdrift::matrix::Matrix;

/// Deterministic pseudo-random matrix in [-1, 1) from a linear congruential
/// sequence, so fixtures cost nothing to build.
pub fn fixture_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data = (0..rows * cols)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("fixture shape")
}

/// Labels cycling through `classes`, with a signal in column 0.
pub fn fixture_labels(x: &Matrix, classes: usize) -> Vec<usize> {
    (0..x.rows())
        .map(|r| {
            let v = x.get(r, 0);
            (((v + 1.0) / 2.0 * classes as f64) as usize).min(classes - 1)
        })
        .collect()
}
