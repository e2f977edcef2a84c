//! Design-quality functionals: alias matrix, design variances, the expected
//! confidence interval (ECI) criterion with its lack-of-fit penalty, the
//! Gilmour-Trinca modified D/A criteria, a Bayesian-D comparator,
//! D-efficiency, the reduced lack-of-fit (rLOF) criterion, and constrained
//! selection over a design pool.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::design::{dof_account, expand_model, expand_unique, Design, ModelMatrices, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::{
    chi_mean_sqrt, f_quantile, numerical_rank, sym_eigen, t_quantile, Mat, PivotedQr,
    RANK_REL_TOL,
};

/// Parameters of the ECI criterion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EciParams {
    /// Two-sided significance level of the stage-1 tests.
    pub alpha: f64,
    /// Prior variance tau^2 of beta_2 / sigma.
    pub tau2: f64,
    /// Required pure-error degrees of freedom.
    pub r_min: usize,
    /// Required lack-of-fit degrees of freedom.
    pub ell_min: usize,
}

impl EciParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidProbability(self.alpha));
        }
        if self.tau2 < 0.0 {
            return Err(Error::InvalidModelSpec(format!("tau2 = {} < 0", self.tau2)));
        }
        if self.r_min + self.ell_min == 0 {
            return Err(Error::InvalidModelSpec(
                "r_min + ell_min must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-factor pieces of the ECI criterion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EciFactor {
    /// Expected aliasing bias sqrt(2 tau^2 / pi * A_j A_j').
    pub bias: f64,
    /// Design standard error sqrt(v_j).
    pub sqrt_v: f64,
}

/// Full ECI evaluation of a design.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EciEvaluation {
    pub per_factor: Vec<EciFactor>,
    /// Error df backing the constant: r + ell when the LOF requirement is met,
    /// r + ell_min otherwise (the penalized estimator is built from ell_min
    /// lack-of-fit directions).
    pub g: usize,
    /// Actual lack-of-fit df of the design.
    pub ell_tilde: usize,
    /// Shortfall ell_min − ell_tilde covered by eigenvector directions.
    pub ell_star: usize,
    /// Sum of the ell_star smallest positive eigenvalues of C₂|₁ (0 when the
    /// requirement is met).
    pub lambda_sum: f64,
    /// c(alpha, g) or the penalized c(alpha, g, tau).
    pub c: f64,
    /// (1/k) Σ_j [bias_j + c·sqrt(v_j)].
    pub total: f64,
}

/// Alias matrix A = (X₁ᵀX₁)⁻¹X₁ᵀX₂, rows indexed (intercept, factor 1..k).
pub fn alias_matrix(mm: &ModelMatrices) -> Result<Mat> {
    let xtx = mm.x1.t_mul(&mm.x1);
    let chol = xtx.cholesky(1e-12).ok_or(Error::SingularX1)?;
    Ok(chol.solve_mat(&mm.x1.t_mul(&mm.x2)))
}

/// Row norms sqrt(A_j A_jᵀ) of the non-intercept rows of the alias matrix.
pub fn alias_row_norms(alias: &Mat) -> Vec<f64> {
    (1..alias.rows())
        .map(|i| alias.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Mean and max absolute aliasing over the main-effect rows.
pub fn alias_summary(alias: &Mat) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0_f64;
    let mut count = 0usize;
    for i in 1..alias.rows() {
        for &v in alias.row(i) {
            sum += v.abs();
            max = max.max(v.abs());
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0.0)
    } else {
        (sum / count as f64, max)
    }
}

/// Main-effect design variances: diagonal of (X₁ᵀX₁)⁻¹ excluding the intercept.
pub fn design_variances(mm: &ModelMatrices) -> Result<Vec<f64>> {
    let xtx = mm.x1.t_mul(&mm.x1);
    let v = xtx.cholesky(1e-12).ok_or(Error::SingularX1)?.inverse();
    Ok((1..v.rows()).map(|j| v[(j, j)]).collect())
}

/// The expected confidence interval criterion.
///
/// total = (1/k) Σ_j [ sqrt(2 tau²/π · A_jA_jᵀ) + c·sqrt(v_j) ] with
/// c = t_{α/2,g}·E√(χ²_g/g) when the design has at least `ell_min` lack-of-fit
/// df, and the penalized c = t_{α/2,g}·sqrt(1 + tau²/g·Σλ_m) otherwise, where
/// the λ_m are the smallest positive eigenvalues of C₂|₁ computed on the
/// unique rows.
pub fn eci(design: &Design, spec: &ModelSpec, params: &EciParams) -> Result<EciEvaluation> {
    params.validate()?;
    let mm = expand_model(design, spec)?;
    eci_from_parts(design, spec, params, &mm, None)
}

/// ECI evaluation reusing a precomputed V = (X₁ᵀX₁)⁻¹ when available (the
/// search keeps V current via SMW updates).
pub fn eci_from_parts(
    design: &Design,
    spec: &ModelSpec,
    params: &EciParams,
    mm: &ModelMatrices,
    v: Option<&Mat>,
) -> Result<EciEvaluation> {
    let k = design.k();
    let v_owned;
    let v = match v {
        Some(v) => v,
        None => {
            let xtx = mm.x1.t_mul(&mm.x1);
            v_owned = xtx.cholesky(1e-12).ok_or(Error::SingularX1)?.inverse();
            &v_owned
        }
    };
    let alias = v.mul(&mm.x1.t_mul(&mm.x2));
    let dof = dof_account(design, spec)?;
    let ell_tilde = dof.ell;

    let (g, c, ell_star, lambda_sum) = if ell_tilde >= params.ell_min {
        let g = dof.r + ell_tilde;
        if g == 0 {
            return Err(Error::NoErrorDf);
        }
        (g, t_quantile(params.alpha, g)? * chi_mean_sqrt(g)?, 0, 0.0)
    } else {
        let ell_star = params.ell_min - ell_tilde;
        let g = dof.r + params.ell_min;
        let mmu = expand_unique(design, spec)?;
        let c21 = c_2_given_1(&mmu)?;
        let eig = sym_eigen(&c21)?;
        let (lambda_sum, _) = eig.smallest_positive(ell_star);
        let c = t_quantile(params.alpha, g)? * (1.0 + params.tau2 / g as f64 * lambda_sum).sqrt();
        (g, c, ell_star, lambda_sum)
    };

    let mut per_factor = Vec::with_capacity(k);
    let mut total = 0.0;
    for j in 0..k {
        let aj2: f64 = alias.row(j + 1).iter().map(|v| v * v).sum();
        let bias = (2.0 * params.tau2 / std::f64::consts::PI * aj2).sqrt();
        let sqrt_v = v[(j + 1, j + 1)].sqrt();
        total += bias + c * sqrt_v;
        per_factor.push(EciFactor { bias, sqrt_v });
    }
    total /= k as f64;
    Ok(EciEvaluation { per_factor, g, ell_tilde, ell_star, lambda_sum, c, total })
}

/// C₂|₁ = X₂ᵀX₂ − AᵀX₁ᵀX₁A for the given model matrices.
pub fn c_2_given_1(mm: &ModelMatrices) -> Result<Mat> {
    let a = alias_matrix(mm)?;
    let x1tx1 = mm.x1.t_mul(&mm.x1);
    Ok(mm.x2.t_mul(&mm.x2).sub(&a.t_mul(&x1tx1.mul(&a))))
}

/// Gilmour-Trinca modified D-criterion: (F_{k,r,1−α})^k / |Dᵀ(I−P₁)D|.
/// Requires at least one pure-error degree of freedom.
pub fn gt_modified_d(design: &Design, alpha: f64) -> Result<f64> {
    let (m, r) = centered_info(design)?;
    let k = design.k();
    let f = f_quantile(1.0 - alpha, k, r)?;
    let ln_det = m.cholesky(1e-12).ok_or(Error::SingularX1)?.ln_det();
    Ok((f.ln() * k as f64 - ln_det).exp())
}

/// Gilmour-Trinca modified A-criterion: F_{1,r,1−α}·tr[(Dᵀ(I−P₁)D)⁻¹].
pub fn gt_modified_a(design: &Design, alpha: f64) -> Result<f64> {
    let (m, r) = centered_info(design)?;
    let f = f_quantile(1.0 - alpha, 1, r)?;
    let inv = m.cholesky(1e-12).ok_or(Error::SingularX1)?.inverse();
    Ok(f * inv.trace())
}

fn centered_info(design: &Design) -> Result<(Mat, usize)> {
    let dof = dof_account(design, &ModelSpec::main_effects())?;
    if dof.r == 0 {
        return Err(Error::InvalidDegreesOfFreedom(0));
    }
    let d = design.settings();
    let n = design.n() as f64;
    let means: Vec<f64> = (0..design.k()).map(|j| d.col(j).iter().sum::<f64>() / n).collect();
    let dtd = d.t_mul(d);
    let m = Mat::from_fn(design.k(), design.k(), |i, j| dtd[(i, j)] - n * means[i] * means[j]);
    Ok((m, dof.r))
}

/// Bayesian D comparator |XᵀX + τ⁻²K|⁻¹ with K zero on the intercept and main
/// effects and one on the second-order ("potential") terms. Returns +∞ when
/// the regularized information matrix is singular.
pub fn bayes_d(design: &Design, spec: &ModelSpec, tau2: f64) -> Result<f64> {
    if tau2 <= 0.0 {
        return Err(Error::InvalidModelSpec(format!("bayes_d requires tau2 > 0, got {tau2}")));
    }
    let mm = expand_model(design, spec)?;
    let x = mm.x_full();
    let mut info = x.t_mul(&x);
    let p1 = 1 + design.k();
    for j in p1..info.rows() {
        info[(j, j)] += 1.0 / tau2;
    }
    match info.cholesky(1e-14) {
        Some(ch) => Ok((-ch.ln_det()).exp()),
        None => Ok(f64::INFINITY),
    }
}

/// D-efficiency of the intercept-adjusted main-effect information matrix,
/// |Dᵀ(I−P₁)D|^{1/k} / n, equal to 1 for an orthogonal two-level design with
/// zero column sums.
pub fn d_efficiency(design: &Design) -> f64 {
    let d = design.settings();
    let n = design.n() as f64;
    let k = design.k();
    let means: Vec<f64> = (0..k).map(|j| d.col(j).iter().sum::<f64>() / n).collect();
    let dtd = d.t_mul(d);
    let m = Mat::from_fn(k, k, |i, j| dtd[(i, j)] - n * means[i] * means[j]);
    match m.cholesky(1e-14) {
        Some(ch) => (ch.ln_det() / k as f64).exp() / n,
        None => 0.0,
    }
}

/// Parameters of the rLOF criterion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RlofParams {
    /// Fitted second-order model size.
    pub p2: usize,
    /// Evaluate all term sets when their count is at most this; otherwise a
    /// seeded uniform sample of this many sets.
    pub max_models: usize,
    pub rng_seed: u64,
}

impl RlofParams {
    pub fn new(p2: usize) -> Self {
        RlofParams { p2, max_models: 5000, rng_seed: 0 }
    }
}

/// Outcome of an rLOF evaluation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RlofValue {
    pub value: f64,
    pub p2: usize,
    pub rank_x2_adj: usize,
    pub models_evaluated: usize,
    pub exhaustive: bool,
}

/// The reduced lack-of-fit criterion.
///
/// For each full-column-rank set Z of `p2` second-order terms, sum the
/// `rank(X₂|₁) − p2` smallest diagonal entries of X₂ᵀ(P_{X₂|₁} − P_{Z₂|₁})X₂
/// over the terms not in Z; the criterion is the minimum over the evaluated
/// sets. Rank-deficient sets are skipped and do not count toward the sample
/// budget. Larger is better.
pub fn rlof(design: &Design, spec: &ModelSpec, params: &RlofParams) -> Result<RlofValue> {
    let mm = expand_model(design, spec)?;
    let m = mm.x2.cols();
    let b = &mm.x2_adj;
    let qr = PivotedQr::new(b);
    let rank = qr.rank(RANK_REL_TOL);
    if params.p2 > rank {
        return Err(Error::InvalidModelSpec(format!(
            "rlof: p2 = {} exceeds rank(X2|1) = {rank}",
            params.p2
        )));
    }
    let keep = rank - params.p2;
    if keep == 0 || m == 0 {
        return Ok(RlofValue {
            value: 0.0,
            p2: params.p2,
            rank_x2_adj: rank,
            models_evaluated: 0,
            exhaustive: true,
        });
    }

    // Precompute: diag of X₂ᵀ P_{X₂|₁} X₂, the Gram of B, and BᵀX₂.
    let q1 = qr.q1(rank);
    let qtx2 = q1.t_mul(&mm.x2);
    let full_diag: Vec<f64> =
        (0..m).map(|j| (0..rank).map(|r| qtx2[(r, j)] * qtx2[(r, j)]).sum()).collect();
    let gram = b.t_mul(b);
    let cross = b.t_mul(&mm.x2);
    let gram_scale = (0..m).fold(0.0_f64, |acc, j| acc.max(gram[(j, j)])).max(1e-300);

    let total = binomial(m, params.p2);
    let exhaustive = total.is_some_and(|t| t <= params.max_models as u128);

    let mut best = f64::INFINITY;
    let mut evaluated = 0usize;
    let eval_set = |set: &[usize], best: &mut f64, evaluated: &mut usize| {
        // rank check for Z₂|₁: degenerate columns or a failed Cholesky pivot
        if set.iter().any(|&s| gram[(s, s)] <= 1e-10 * gram_scale) {
            return;
        }
        let sub = Mat::from_fn(set.len(), set.len(), |a, c| gram[(set[a], set[c])]);
        let Some(ch) = sub.cholesky(1e-10) else {
            return;
        };
        let mut diffs: Vec<f64> = Vec::with_capacity(m - set.len());
        for j in 0..m {
            if set.contains(&j) {
                continue;
            }
            let col: Vec<f64> = set.iter().map(|&s| cross[(s, j)]).collect();
            let z = ch.forward(&col);
            let fitted: f64 = z.iter().map(|v| v * v).sum();
            diffs.push((full_diag[j] - fitted).max(0.0));
        }
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let val: f64 = diffs[..keep].iter().sum();
        if val < *best {
            *best = val;
        }
        *evaluated += 1;
    };

    if exhaustive {
        let mut set: Vec<usize> = (0..params.p2).collect();
        loop {
            eval_set(&set, &mut best, &mut evaluated);
            if !next_combination(&mut set, m) {
                break;
            }
        }
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(params.rng_seed);
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut attempts = 0usize;
        let max_attempts = params.max_models.saturating_mul(20);
        while evaluated < params.max_models && attempts < max_attempts {
            attempts += 1;
            let mut set = sample_combination(&mut rng, m, params.p2);
            set.sort_unstable();
            if !seen.insert(set.clone()) {
                continue;
            }
            eval_set(&set, &mut best, &mut evaluated);
        }
    }

    if evaluated == 0 {
        return Err(Error::InvalidModelSpec(
            "rlof: every candidate term set was rank-deficient".into(),
        ));
    }
    Ok(RlofValue { value: best, p2: params.p2, rank_x2_adj: rank, models_evaluated: evaluated, exhaustive })
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Advance `set` to the next k-combination of {0..n} in lexicographic order.
pub(crate) fn next_combination(set: &mut [usize], n: usize) -> bool {
    let k = set.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if set[i] < n - (k - i) {
            set[i] += 1;
            for j in (i + 1)..k {
                set[j] = set[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn sample_combination(rng: &mut ChaCha12Rng, n: usize, k: usize) -> Vec<usize> {
    // partial Fisher-Yates over indices
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Constrained rLOF selection: filter the pool to designs whose ECI total at
/// tau² = 20 is below `s`, then return the index of the rLOF maximizer. Ties
/// break toward the smaller ECI total, then input order.
pub fn constrained_select(
    pool: &[Design],
    s: f64,
    spec: &ModelSpec,
    eci_params: &EciParams,
    rlof_params: Option<&RlofParams>,
) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::NoDesignMeetsThreshold { threshold: s });
    }
    let screening = EciParams { tau2: 20.0, ..*eci_params };
    let mut best: Option<(usize, f64, f64)> = None; // (index, rlof, eci_total)
    for (i, design) in pool.iter().enumerate() {
        let eval = eci(design, spec, &screening)?;
        if eval.total >= s {
            continue;
        }
        let params = match rlof_params {
            Some(p) => *p,
            None => {
                let mm = expand_model(design, spec)?;
                let rank = numerical_rank(&mm.x2_adj, RANK_REL_TOL)?;
                RlofParams::new(rank / 2)
            }
        };
        let value = rlof(design, spec, &params)?.value;
        let better = match best {
            None => true,
            Some((_, bv, bt)) => {
                value > bv + 1e-12
                    || ((value - bv).abs() <= 1e-12 && eval.total < bt - 1e-12)
            }
        };
        if better {
            best = Some((i, value, eval.total));
        }
    }
    best.map(|(i, _, _)| i).ok_or(Error::NoDesignMeetsThreshold { threshold: s })
}
