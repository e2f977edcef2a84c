//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.
//!
//! Inputs are symmetrized as `(S + Sᵀ)/2` before decomposition, which guards
//! against the 1e-12-level asymmetry left behind by projector arithmetic.

use super::matrix::Mat;
use crate::error::Error;

/// Threshold for the "smallest positive eigenvalue" selection rule:
/// an eigenvalue counts as positive when it exceeds `1e-8 · λ_max`.
pub const EIGEN_POSITIVE_REL_TOL: f64 = 1e-8;

/// Full spectrum of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `values`.
    pub vectors: Mat,
}

impl SymEigen {
    /// Indices of eigenvalues flagged positive under the relative threshold.
    pub fn positive_indices(&self) -> Vec<usize> {
        let max = self.values.iter().cloned().fold(0.0_f64, f64::max);
        let cut = EIGEN_POSITIVE_REL_TOL * max.max(1e-300);
        (0..self.values.len()).filter(|&i| self.values[i] > cut).collect()
    }

    /// Sum of the `count` smallest positive eigenvalues (all of them if fewer
    /// are available), together with their indices.
    pub fn smallest_positive(&self, count: usize) -> (f64, Vec<usize>) {
        let pos = self.positive_indices();
        let take: Vec<usize> = pos.into_iter().take(count).collect();
        (take.iter().map(|&i| self.values[i]).sum(), take)
    }
}

/// Jacobi eigendecomposition. Errors on non-square input; symmetrizes first.
pub fn sym_eigen(s: &Mat) -> Result<SymEigen, Error> {
    if s.rows() != s.cols() {
        return Err(Error::DimensionMismatch {
            context: format!("sym_eigen: {}x{} matrix is not square", s.rows(), s.cols()),
        });
    }
    let n = s.rows();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut a = s.symmetrized();
    let mut v = Mat::identity(n);

    let off = |a: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[(i, j)] * a[(i, j)];
            }
        }
        s
    };
    let scale = a.max_abs().max(1e-300);
    let tol = (1e-15 * scale) * (1e-15 * scale) * (n * n) as f64;

    for _sweep in 0..60 {
        if off(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = t * c;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s_ * aiq;
                    a[(i, q)] = s_ * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = c * apj - s_ * aqj;
                    a[(q, j)] = s_ * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s_ * viq;
                    v[(i, q)] = s_ * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_case_sorted() {
        let s = Mat::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let e = sym_eigen(&s).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 2.0).abs() < 1e-12);
        assert!((e.values[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn trace_identity_and_residuals() {
        let s = Mat::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 1.0],
            vec![-2.0, 0.0, 5.0, -1.0],
            vec![0.5, 1.0, -1.0, 2.0],
        ])
        .unwrap();
        let e = sym_eigen(&s).unwrap();
        let sum: f64 = e.values.iter().sum();
        assert!((sum - s.trace()).abs() < 1e-8);
        // S v_i = lambda_i v_i
        for i in 0..4 {
            let vi = e.vectors.col(i);
            let sv = s.mul_vec(&vi);
            for r in 0..4 {
                assert!((sv[r] - e.values[i] * vi[r]).abs() < 1e-8 * s.max_abs());
            }
        }
        // V'V = I
        let vtv = e.vectors.t_mul(&e.vectors);
        assert!(vtv.sub(&Mat::identity(4)).max_abs() < 1e-10);
    }

    #[test]
    fn non_square_rejected() {
        assert!(sym_eigen(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn smallest_positive_skips_null_directions() {
        let s = Mat::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 7.0],
        ])
        .unwrap();
        let e = sym_eigen(&s).unwrap();
        let (sum, idx) = e.smallest_positive(1);
        assert_eq!(idx.len(), 1);
        assert!((sum - 2.0).abs() < 1e-12);
    }
}
