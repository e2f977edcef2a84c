//! Sherman-Morrison-Woodbury updates of `V = (X₁ᵀX₁)⁻¹` for the coordinate
//! exchange search: a rank-2 update covering the simultaneous exchange of a
//! row and its replicate copies, and a rank-1 update for appending a row.

use super::matrix::{dot, Mat};

/// Denominator magnitude below which an exchange is declared singular.
pub const SMW_SINGULAR_TOL: f64 = 1e-10;

/// Result of an exchange update.
pub enum SmwOutcome {
    Updated(Mat),
    /// The candidate exchange makes X₁ rank-deficient and must be rejected.
    Singular,
}

/// Update `V` after replacing `r_i` copies of model row `x_old` with `x_new`.
///
/// Uses `Ṽ = V − V F₁(I + F₂ᵀV F₁)⁻¹ F₂ᵀV` with `F₁ = √r·(x̃, −x)` and
/// `F₂ = √r·(x̃, x)`, reduced to the closed-form 2×2 inverse whose determinant
/// is `[1 + r·v(x̃)][1 − r·v(x)] + r²·v(x, x̃)²`.
pub fn smw_exchange(v: &Mat, x_old: &[f64], x_new: &[f64], r_i: usize) -> SmwOutcome {
    let p = v.rows();
    assert_eq!(v.cols(), p);
    assert_eq!(x_old.len(), p, "x_old length mismatch");
    assert_eq!(x_new.len(), p, "x_new length mismatch");
    assert!(r_i >= 1);
    let r = r_i as f64;

    let v_xn = v.mul_vec(x_new);
    let v_xo = v.mul_vec(x_old);
    let vnn = dot(x_new, &v_xn);
    let voo = dot(x_old, &v_xo);
    let von = dot(x_old, &v_xn);

    let den = (1.0 + r * vnn) * (1.0 - r * voo) + r * r * von * von;
    if den.abs() < SMW_SINGULAR_TOL {
        return SmwOutcome::Singular;
    }

    // (I + F2' V F1)^{-1} = (1/den) [[1 - r voo, r von], [-r von, 1 + r vnn]]
    // Vt = V - r * [v_xn | v_xo] * inv22 * [v_xn | -v_xo]'   (F1/F2 expanded)
    let i00 = (1.0 - r * voo) / den;
    let i01 = (r * von) / den;
    let i10 = (-r * von) / den;
    let i11 = (1.0 + r * vnn) / den;

    let mut out = v.clone();
    for a in 0..p {
        // left = r * [v_xn, -v_xo](row a) . inv22 ; right column b uses [v_xn, v_xo]
        let l0 = r * (v_xn[a] * i00 - v_xo[a] * i10);
        let l1 = r * (v_xn[a] * i01 - v_xo[a] * i11);
        for b in 0..p {
            out[(a, b)] -= l0 * v_xn[b] + l1 * v_xo[b];
        }
    }
    SmwOutcome::Updated(out)
}

/// Update `V` after appending one model row `x` (adds `xxᵀ` to `X₁ᵀX₁`).
/// Always well-posed for positive-definite `V`.
pub fn smw_add_row(v: &Mat, x: &[f64]) -> Mat {
    let p = v.rows();
    let vx = v.mul_vec(x);
    let den = 1.0 + dot(x, &vx);
    let mut out = v.clone();
    for a in 0..p {
        for b in 0..p {
            out[(a, b)] -= vx[a] * vx[b] / den;
        }
    }
    out
}
