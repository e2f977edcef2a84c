//! Linear-algebra and distributional primitives shared by every other module:
//! projectors, numerical rank, symmetric eigendecomposition, SMW updates, and
//! t/F/Γ-based constants. All operations are pure functions of their inputs.

pub mod eigen;
pub mod matrix;
pub mod qr;
pub mod smw;
pub mod special;

pub use eigen::{sym_eigen, SymEigen, EIGEN_POSITIVE_REL_TOL};
pub use matrix::{dot, Chol, Mat};
pub use qr::{fitted_ss, numerical_rank, projector, residual_ss, PivotedQr, RANK_REL_TOL};
pub use smw::{smw_add_row, smw_exchange, SmwOutcome, SMW_SINGULAR_TOL};
pub use special::{
    chi_mean_sqrt, f_cdf, f_quantile, inc_beta, inv_inc_beta, ln_gamma, t_cdf, t_p_value,
    t_quantile,
};
