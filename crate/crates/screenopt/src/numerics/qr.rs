//! Householder QR with column pivoting: numerical rank, orthonormal column
//! bases, projection matrices, and residual sums of squares.
//!
//! Rank is defined as the number of pivoted-QR diagonal magnitudes exceeding
//! `rel_tol` times the largest diagonal magnitude. The default `rel_tol` of
//! 1e-8 is far from the integer degree-of-freedom boundaries that matter for
//! +-1/0 design matrices.

#![allow(clippy::needless_range_loop)]

use super::matrix::Mat;
use crate::error::Error;

/// Default relative tolerance for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Column-pivoted Householder QR factorization.
pub struct PivotedQr {
    /// Packed factors: R in the upper triangle, Householder vectors below.
    qr: Mat,
    tau: Vec<f64>,
    /// Column permutation: original column index of factored column `j`.
    pivots: Vec<usize>,
    /// |R[j,j]| in factorization order (non-increasing up to rounding).
    diag_abs: Vec<f64>,
}

impl PivotedQr {
    pub fn new(m: &Mat) -> Self {
        let (n, p) = (m.rows(), m.cols());
        let steps = n.min(p);
        let mut a = m.clone();
        let mut tau = vec![0.0; steps];
        let mut pivots: Vec<usize> = (0..p).collect();
        let mut col_norms: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|i| a[(i, j)] * a[(i, j)]).sum())
            .collect();

        for step in 0..steps {
            // pivot: remaining column with the largest exact norm
            let mut best = step;
            let mut best_norm = -1.0;
            for j in step..p {
                let norm: f64 = (step..n).map(|i| a[(i, j)] * a[(i, j)]).sum();
                col_norms[j] = norm;
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            if best != step {
                for i in 0..n {
                    let t = a[(i, step)];
                    a[(i, step)] = a[(i, best)];
                    a[(i, best)] = t;
                }
                pivots.swap(step, best);
                col_norms.swap(step, best);
            }

            // Householder reflector annihilating below the diagonal
            let alpha: f64 = best_norm.sqrt();
            let x0 = a[(step, step)];
            if alpha == 0.0 {
                tau[step] = 0.0;
                continue;
            }
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            let v0 = x0 - beta;
            let mut vnorm2 = v0 * v0;
            for i in (step + 1)..n {
                vnorm2 += a[(i, step)] * a[(i, step)];
            }
            if vnorm2 == 0.0 {
                tau[step] = 0.0;
                a[(step, step)] = beta;
                continue;
            }
            tau[step] = 2.0 * v0 * v0 / vnorm2;
            // store normalized v (v0 scaled to 1) below the diagonal
            for i in (step + 1)..n {
                a[(i, step)] /= v0;
            }
            a[(step, step)] = beta;
            // apply reflector to trailing columns
            for j in (step + 1)..p {
                let mut s = a[(step, j)];
                for i in (step + 1)..n {
                    s += a[(i, step)] * a[(i, j)];
                }
                s *= tau[step];
                a[(step, j)] -= s;
                for i in (step + 1)..n {
                    let h = a[(i, step)];
                    a[(i, j)] -= s * h;
                }
            }
        }

        let diag_abs = (0..steps).map(|i| a[(i, i)].abs()).collect();
        PivotedQr { qr: a, tau, pivots, diag_abs }
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let max = self.diag_abs.iter().cloned().fold(0.0_f64, f64::max);
        if max == 0.0 {
            return 0;
        }
        self.diag_abs.iter().filter(|&&d| d > rel_tol * max).count()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Apply `Qᵀ` to a vector in place and return it.
    fn apply_qt(&self, y: &[f64]) -> Vec<f64> {
        let n = self.qr.rows();
        let steps = self.tau.len();
        let mut w = y.to_vec();
        for step in 0..steps {
            if self.tau[step] == 0.0 {
                continue;
            }
            let mut s = w[step];
            for i in (step + 1)..n {
                s += self.qr[(i, step)] * w[i];
            }
            s *= self.tau[step];
            w[step] -= s;
            for i in (step + 1)..n {
                w[i] -= s * self.qr[(i, step)];
            }
        }
        w
    }

    /// First `r` orthonormal basis columns of the column space (`Q₁`).
    pub fn q1(&self, r: usize) -> Mat {
        let n = self.qr.rows();
        let steps = self.tau.len();
        let mut q = Mat::zeros(n, r);
        for j in 0..r {
            // column j of Q = H_0 ... H_{steps-1} e_j; apply reflectors in reverse
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for step in (0..steps).rev() {
                if self.tau[step] == 0.0 {
                    continue;
                }
                let mut s = e[step];
                for i in (step + 1)..n {
                    s += self.qr[(i, step)] * e[i];
                }
                s *= self.tau[step];
                e[step] -= s;
                for i in (step + 1)..n {
                    e[i] -= s * self.qr[(i, step)];
                }
            }
            for i in 0..n {
                q[(i, j)] = e[i];
            }
        }
        q
    }
}

/// Numerical rank via pivoted QR.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> Result<usize, Error> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if !m.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(PivotedQr::new(m).rank(rel_tol))
}

/// Projection matrix onto the column space of `m`, `P = Q₁Q₁ᵀ`.
///
/// Well-defined for rank-deficient `m`; symmetric and idempotent to the
/// accuracy of the underlying QR.
pub fn projector(m: &Mat) -> Result<Mat, Error> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if !m.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let qr = PivotedQr::new(m);
    let r = qr.rank(RANK_REL_TOL);
    if r == 0 {
        return Ok(Mat::zeros(m.rows(), m.rows()));
    }
    let q1 = qr.q1(r);
    Ok(q1.mul(&q1.transpose()))
}

/// Residual sum of squares of `y` after projection onto the column space of
/// `m`:  `yᵀ(I − P_M)y`, computed as `yᵀy − ‖Q₁ᵀy‖²`. Rank-aware, so safe for
/// rank-deficient and over-wide matrices.
pub fn residual_ss(y: &[f64], m: &Mat) -> f64 {
    let yy: f64 = y.iter().map(|v| v * v).sum();
    if m.cols() == 0 {
        return yy;
    }
    assert_eq!(y.len(), m.rows(), "residual_ss dimension mismatch");
    let qr = PivotedQr::new(m);
    let r = qr.rank(RANK_REL_TOL);
    let w = qr.apply_qt(y);
    let fitted: f64 = w[..r].iter().map(|v| v * v).sum();
    (yy - fitted).max(0.0)
}

/// `Q₁ᵀy` truncated at the numerical rank; `‖·‖²` is the fitted sum of squares.
pub fn fitted_ss(y: &[f64], m: &Mat) -> f64 {
    let yy: f64 = y.iter().map(|v| v * v).sum();
    yy - residual_ss(y, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_identity_and_duplicates() {
        assert_eq!(numerical_rank(&Mat::identity(7), RANK_REL_TOL).unwrap(), 7);
        let v = [1.0, -2.0, 0.5, 3.0];
        let m = Mat::from_fn(4, 2, |i, _| v[i]);
        assert_eq!(numerical_rank(&m, RANK_REL_TOL).unwrap(), 1);
    }

    #[test]
    fn rank_errors_on_empty() {
        assert!(numerical_rank(&Mat::zeros(0, 3), RANK_REL_TOL).is_err());
    }

    #[test]
    fn projector_of_ones_is_averaging() {
        let m = Mat::from_fn(4, 1, |_, _| 1.0);
        let p = projector(&m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((p[(i, j)] - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projector_of_invertible_is_identity() {
        let m = Mat::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ])
        .unwrap();
        let p = projector(&m).unwrap();
        assert!(p.sub(&Mat::identity(3)).max_abs() < 1e-10);
    }

    #[test]
    fn projector_symmetric_idempotent_rank_deficient() {
        // two identical columns plus one independent one
        let m = Mat::from_rows(&[
            vec![1.0, 1.0, 2.0],
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, -1.0],
        ])
        .unwrap();
        let p = projector(&m).unwrap();
        assert!(p.sub(&p.transpose()).max_abs() < 1e-10);
        assert!(p.mul(&p).sub(&p).max_abs() < 1e-10);
        assert!((p.trace() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn residual_ss_matches_projector() {
        let m = Mat::from_rows(&[
            vec![1.0, 0.5],
            vec![1.0, -0.5],
            vec![1.0, 1.5],
            vec![1.0, 2.5],
        ])
        .unwrap();
        let y = [1.0, 2.0, 0.0, 4.0];
        let p = projector(&m).unwrap();
        let py = p.mul_vec(&y);
        let direct: f64 = y.iter().zip(&py).map(|(a, b)| (a - b) * a).sum();
        assert!((residual_ss(&y, &m) - direct).abs() < 1e-10);
    }
}
