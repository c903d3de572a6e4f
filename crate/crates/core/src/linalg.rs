//! Small dense helpers shared by both fitting stages.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Relative jitter ladder tried after a plain Cholesky attempt fails,
/// as multiples of the mean diagonal.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization with bounded diagonal jitter.
///
/// Returns the factor and the absolute jitter that was added (0 when none was
/// needed), or `None` once the ladder is exhausted.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if !m.is_square() || m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, 0.0));
    }
    let n = m.nrows();
    if n == 0 {
        return None;
    }
    let mean_diag = m.diagonal().mean();
    if mean_diag <= 0.0 {
        return None;
    }
    JITTER_LADDER.iter().find_map(|rel| {
        let jitter = rel * mean_diag;
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        Cholesky::new(shifted).map(|c| (c, jitter))
    })
}

/// Largest absolute difference between `m` and its transpose.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Row-major flattening, the layout used by every serialized matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn from_row_major(n: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_repairs_semidefinite_matrix() {
        // rank one: plain Cholesky fails, a tiny ridge fixes it
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, jitter) = cholesky_with_jitter(&m).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-6);
    }

    #[test]
    fn jitter_gives_up_on_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_with_jitter(&m).is_none());
    }

    #[test]
    fn row_major_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(to_row_major(&m), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(from_row_major(2, &to_row_major(&m)), m);
    }
}
