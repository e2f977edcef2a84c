//! Designs, factor level sets, replicate pairing, model expansion, degree-of-
//! freedom accounting, and the DSD/ADSD/foldover constructors.

pub mod conference;
pub mod csv;

pub use conference::{conference_matrix, CATALOG_ORDERS};
pub use csv::{load_csv, load_response_sets, save_csv, write_csv_string};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{numerical_rank, projector, Mat, RANK_REL_TOL};

/// A screening design: an n×k settings matrix with per-factor level sets and
/// an explicit replicate-pairing structure. Rows flagged with a parent index
/// form the replicate block D_r; the remaining rows form D_u.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    factor_names: Vec<String>,
    settings: Mat,
    /// For each row, the index of the D_u row it replicates (None for D_u rows).
    replicate_of: Vec<Option<usize>>,
    /// Allowed levels per factor, ascending.
    levels: Vec<Vec<f64>>,
}

impl Design {
    /// Validates that replicate rows equal their parents entry-wise and that
    /// every entry belongs to its factor's level set.
    pub fn new(
        settings: Mat,
        factor_names: Vec<String>,
        replicate_of: Vec<Option<usize>>,
        levels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (n, k) = (settings.rows(), settings.cols());
        if factor_names.len() != k {
            return Err(Error::InvalidDesign(format!(
                "{} factor names for {k} columns",
                factor_names.len()
            )));
        }
        if replicate_of.len() != n {
            return Err(Error::InvalidDesign("replicate map length != n".into()));
        }
        if levels.len() != k {
            return Err(Error::InvalidDesign("level sets length != k".into()));
        }
        if !settings.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        for i in 0..n {
            for j in 0..k {
                let v = settings[(i, j)];
                if !levels[j].contains(&v) {
                    return Err(Error::InvalidDesign(format!(
                        "entry {v} at run {} is not a level of factor {}",
                        i + 1,
                        factor_names[j]
                    )));
                }
            }
        }
        for (i, parent) in replicate_of.iter().enumerate() {
            if let Some(p) = *parent {
                if p >= n || replicate_of[p].is_some() {
                    return Err(Error::InvalidDesign(format!(
                        "run {} replicates run {}, which is not a D_u row",
                        i + 1,
                        p + 1
                    )));
                }
                if settings.row(i) != settings.row(p) {
                    return Err(Error::InvalidDesign(format!(
                        "run {} is declared a replicate of run {} but differs",
                        i + 1,
                        p + 1
                    )));
                }
            }
        }
        Ok(Design { factor_names, settings, replicate_of, levels })
    }

    /// Design with levels inferred per column: {-1,1}, {-1,0,1}, or the sorted
    /// distinct values observed.
    pub fn with_inferred_levels(
        settings: Mat,
        factor_names: Vec<String>,
        replicate_of: Vec<Option<usize>>,
    ) -> Result<Self> {
        let levels = (0..settings.cols()).map(|j| infer_levels(&settings.col(j))).collect();
        Design::new(settings, factor_names, replicate_of, levels)
    }

    pub fn n(&self) -> usize {
        self.settings.rows()
    }

    pub fn k(&self) -> usize {
        self.settings.cols()
    }

    pub fn settings(&self) -> &Mat {
        &self.settings
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn replicate_of(&self) -> &[Option<usize>] {
        &self.replicate_of
    }

    pub fn d_u_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.replicate_of[i].is_none()).collect()
    }

    pub fn d_r_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.replicate_of[i].is_some()).collect()
    }

    /// Distinct settings rows in first-occurrence order.
    pub fn unique_rows(&self) -> Mat {
        let mut seen: HashMap<Vec<u64>, ()> = HashMap::new();
        let mut keep = Vec::new();
        for i in 0..self.n() {
            let key: Vec<u64> = self.settings.row(i).iter().map(|v| v.to_bits()).collect();
            if seen.insert(key, ()).is_none() {
                keep.push(i);
            }
        }
        self.settings.select_rows(&keep)
    }

    /// SHA-256 over rows sorted lexicographically; replicate structure is
    /// normalized away so row-order variants of one design collide.
    pub fn canonical_hash(&self) -> String {
        let n = self.n();
        let mut rows: Vec<Vec<u64>> = (0..n)
            .map(|i| self.settings.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        let mut hasher = Sha256::new();
        for row in rows {
            for bits in row {
                hasher.update(bits.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn infer_levels(col: &[f64]) -> Vec<f64> {
    let mut vals: Vec<f64> = Vec::new();
    for &v in col {
        if !vals.contains(&v) {
            vals.push(v);
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if vals.iter().all(|&v| v == -1.0 || v == 1.0) {
        vec![-1.0, 1.0]
    } else if vals.iter().all(|&v| v == -1.0 || v == 0.0 || v == 1.0) {
        vec![-1.0, 0.0, 1.0]
    } else {
        vals
    }
}

/// Model order for the second-order expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelOrder {
    MainEffects,
    TwoFactorInteraction,
    FullQuadratic,
}

/// A second-order model term; interactions are stored with i < j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    /// Bilinear interaction d_i * d_j.
    Interaction(usize, usize),
    /// Quadratic effect d_j^2.
    Quadratic(usize),
}

impl Term {
    pub fn involves(&self, factor: usize) -> bool {
        match *self {
            Term::Interaction(i, j) => i == factor || j == factor,
            Term::Quadratic(j) => j == factor,
        }
    }

    pub fn factors(&self) -> Vec<usize> {
        match *self {
            Term::Interaction(i, j) => vec![i, j],
            Term::Quadratic(j) => vec![j],
        }
    }

    pub fn label(&self, names: &[String]) -> String {
        match *self {
            Term::Interaction(i, j) => format!("{}*{}", names[i], names[j]),
            Term::Quadratic(j) => format!("{}^2", names[j]),
        }
    }
}

/// Which second-order columns X2 carries. Column order is deterministic:
/// interactions in lexicographic (i, j) order, then quadratics in factor order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub order: ModelOrder,
    terms: Vec<Term>,
}

impl ModelSpec {
    pub fn main_effects() -> Self {
        ModelSpec { order: ModelOrder::MainEffects, terms: Vec::new() }
    }

    pub fn two_fi(k: usize) -> Self {
        ModelSpec { order: ModelOrder::TwoFactorInteraction, terms: interaction_terms(k) }
    }

    pub fn full_quadratic(k: usize) -> Self {
        let mut terms = interaction_terms(k);
        terms.extend((0..k).map(Term::Quadratic));
        ModelSpec { order: ModelOrder::FullQuadratic, terms }
    }

    pub fn for_order(order: ModelOrder, k: usize) -> Self {
        match order {
            ModelOrder::MainEffects => Self::main_effects(),
            ModelOrder::TwoFactorInteraction => Self::two_fi(k),
            ModelOrder::FullQuadratic => Self::full_quadratic(k),
        }
    }

    /// A custom second-order term list; rejects duplicates and keeps the
    /// canonical column order.
    pub fn custom(order: ModelOrder, mut terms: Vec<Term>) -> Result<Self> {
        for t in terms.iter_mut() {
            if let Term::Interaction(i, j) = *t {
                if i == j {
                    return Err(Error::InvalidModelSpec(format!(
                        "interaction of factor {i} with itself"
                    )));
                }
                if i > j {
                    *t = Term::Interaction(j, i);
                }
            }
        }
        let mut sorted = terms.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != terms.len() {
            return Err(Error::InvalidModelSpec("duplicate second-order terms".into()));
        }
        Ok(ModelSpec { order, terms: sorted })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
}

fn interaction_terms(k: usize) -> Vec<Term> {
    let mut terms = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            terms.push(Term::Interaction(i, j));
        }
    }
    terms
}

/// Main-effect and second-order model matrices for a design.
#[derive(Clone, Debug)]
pub struct ModelMatrices {
    /// Intercept column of ones, then the k main-effect columns.
    pub x1: Mat,
    /// Second-order columns, one per term in the model spec.
    pub x2: Mat,
    /// X₂|₁ = (I − P_{X₁}) X₂.
    pub x2_adj: Mat,
    pub terms: Vec<Term>,
}

impl ModelMatrices {
    pub fn x_full(&self) -> Mat {
        self.x1.hstack(&self.x2)
    }
}

/// Expand a design to model matrices under a spec.
///
/// Errors when a quadratic term is requested for a factor whose level set does
/// not contain 0 (a two-level factor's square is confounded with the
/// intercept).
pub fn expand_model(design: &Design, spec: &ModelSpec) -> Result<ModelMatrices> {
    let (n, k) = (design.n(), design.k());
    for t in spec.terms() {
        match *t {
            Term::Interaction(i, j) => {
                if i >= k || j >= k {
                    return Err(Error::InvalidModelSpec(format!(
                        "interaction ({i},{j}) references a factor beyond k={k}"
                    )));
                }
            }
            Term::Quadratic(j) => {
                if j >= k {
                    return Err(Error::InvalidModelSpec(format!(
                        "quadratic of factor {j} beyond k={k}"
                    )));
                }
                if !design.levels()[j].contains(&0.0) {
                    return Err(Error::InvalidModelSpec(format!(
                        "quadratic term requested for two-level factor {}",
                        design.factor_names()[j]
                    )));
                }
            }
        }
    }
    let d = design.settings();
    let x1 = Mat::from_fn(n, 1 + k, |i, j| if j == 0 { 1.0 } else { d[(i, j - 1)] });
    let x2 = Mat::from_fn(n, spec.terms().len(), |i, c| match spec.terms()[c] {
        Term::Interaction(a, b) => d[(i, a)] * d[(i, b)],
        Term::Quadratic(a) => d[(i, a)] * d[(i, a)],
    });
    let x2_adj = if x2.cols() == 0 {
        x2.clone()
    } else {
        let p1 = projector(&x1)?;
        x2.sub(&p1.mul(&x2))
    };
    Ok(ModelMatrices { x1, x2, x2_adj, terms: spec.terms().to_vec() })
}

/// Model matrices over the distinct rows of a design.
pub fn expand_unique(design: &Design, spec: &ModelSpec) -> Result<ModelMatrices> {
    let uniq = design.unique_rows();
    let sub = Design::new(
        uniq,
        design.factor_names().to_vec(),
        vec![None; design.unique_rows().rows()],
        design.levels().to_vec(),
    )?;
    expand_model(&sub, spec)
}

/// Error degree-of-freedom bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofAccount {
    /// Number of distinct runs.
    pub n_u: usize,
    /// Pure-error df, n − n_u.
    pub r: usize,
    /// Lack-of-fit df, n_u − rank(X_u).
    pub ell: usize,
    /// Total error df, r + ell = n − rank(X).
    pub g: usize,
}

/// Count unique runs, pure-error df, lack-of-fit df, and total error df.
///
/// `g` is computed both as `r + ell` and as `n − rank(X)`; the two always
/// agree because replicate rows add nothing to the row space.
pub fn dof_account(design: &Design, spec: &ModelSpec) -> Result<DofAccount> {
    let n = design.n();
    let uniq = design.unique_rows();
    let n_u = uniq.rows();
    let r = n - n_u;
    let mmu = expand_unique(design, spec)?;
    let xu = mmu.x_full();
    let rank_xu = numerical_rank(&xu, RANK_REL_TOL)?;
    let ell = n_u - rank_xu;
    let mm = expand_model(design, spec)?;
    let rank_x = numerical_rank(&mm.x_full(), RANK_REL_TOL)?;
    debug_assert_eq!(r + ell, n - rank_x, "df decomposition must agree with n - rank(X)");
    Ok(DofAccount { n_u, r, ell, g: n - rank_x })
}

/// Stack `(D̃ᵀ | −D̃ᵀ)ᵀ`, optionally appending an all-zero center run.
/// Entries must lie in {−1, 0, 1}.
pub fn foldover(half: &Mat, append_center: bool) -> Result<Design> {
    for i in 0..half.rows() {
        for &v in half.row(i) {
            if v != -1.0 && v != 0.0 && v != 1.0 {
                return Err(Error::InvalidDesign(format!(
                    "foldover requires entries in {{-1,0,1}}, found {v}"
                )));
            }
        }
    }
    let k = half.cols();
    let mut stacked = half.vstack(&half.scale(-1.0));
    if append_center {
        stacked = stacked.vstack(&Mat::zeros(1, k));
    }
    let names = (0..k).map(|j| format!("d{}", j + 1)).collect();
    let n = stacked.rows();
    Design::new(stacked, names, vec![None; n], vec![vec![-1.0, 0.0, 1.0]; k])
}

/// Definitive screening design: foldover of a k×k conference matrix plus a
/// center run, 2k+1 runs.
pub fn dsd(k: usize) -> Result<Design> {
    let c = conference_matrix(k)?;
    foldover(&c, true)
}

/// Augmented DSD: build the (k+f)-factor DSD and keep the first k factor
/// columns, giving 2(k+f)+1 runs (2(k+f) when the center run is dropped).
pub fn adsd(k: usize, f: usize, drop_center: bool) -> Result<Design> {
    let c = conference_matrix(k + f)?;
    let full = foldover(&c, !drop_center)?;
    let cols: Vec<usize> = (0..k).collect();
    let settings = full.settings().select_cols(&cols);
    let names = (0..k).map(|j| format!("d{}", j + 1)).collect();
    let n = settings.rows();
    Design::new(settings, names, vec![None; n], vec![vec![-1.0, 0.0, 1.0]; k])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(rows: &[&[i8]]) -> Mat {
        let v: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        Mat::from_rows(&v).unwrap()
    }

    fn full_factorial(k: usize) -> Design {
        let n = 1 << k;
        let settings = Mat::from_fn(n, k, |i, j| if (i >> j) & 1 == 1 { 1.0 } else { -1.0 });
        Design::with_inferred_levels(
            settings,
            (0..k).map(|j| format!("d{}", j + 1)).collect(),
            vec![None; n],
        )
        .unwrap()
    }

    #[test]
    fn two_fi_expansion_of_full_factorial_is_orthogonal() {
        let d = full_factorial(5);
        let mm = expand_model(&d, &ModelSpec::two_fi(5)).unwrap();
        assert_eq!(mm.x2.cols(), 10);
        let cross = mm.x1.t_mul(&mm.x2);
        assert!(cross.max_abs() < 1e-10);
    }

    #[test]
    fn dsd6_has_13_runs_zero_cross_products() {
        let d = dsd(6).unwrap();
        assert_eq!(d.n(), 13);
        let mm = expand_model(&d, &ModelSpec::full_quadratic(6)).unwrap();
        // main-effect block of X1'X1 is diagonal
        let xtx = mm.x1.t_mul(&mm.x1);
        for i in 1..7 {
            for j in 1..7 {
                if i != j {
                    assert!(xtx[(i, j)].abs() < 1e-12);
                }
            }
        }
        // main-effect columns orthogonal to every second-order column
        let cross = mm.x1.t_mul(&mm.x2);
        for i in 1..7 {
            for j in 0..mm.x2.cols() {
                assert!(cross[(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adsd_shapes_and_dof() {
        let a = adsd(6, 2, false).unwrap();
        assert_eq!(a.n(), 17);
        let dof = dof_account(&a, &ModelSpec::full_quadratic(6)).unwrap();
        assert_eq!((dof.r, dof.ell, dof.g), (0, 2, 2));

        let a = adsd(7, 5, true).unwrap();
        assert_eq!(a.n(), 24);
        let dof = dof_account(&a, &ModelSpec::full_quadratic(7)).unwrap();
        assert_eq!((dof.r, dof.ell, dof.g), (0, 5, 5));
    }

    #[test]
    fn adsd_retained_columns_orthogonal_to_second_order() {
        let a = adsd(6, 2, false).unwrap();
        let mm = expand_model(&a, &ModelSpec::full_quadratic(6)).unwrap();
        let me = mm.x1.select_cols(&[1, 2, 3, 4, 5, 6]);
        let mtm = me.t_mul(&me);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(mtm[(i, j)].abs() < 1e-12);
                }
            }
        }
        assert!(me.t_mul(&mm.x2).max_abs() < 1e-12);
    }

    #[test]
    fn foldover_cancels_main_effects() {
        let half = pm(&[&[1, -1, 0], &[0, 1, 1], &[-1, -1, 1]]);
        let d = foldover(&half, false).unwrap();
        let sums: Vec<f64> = (0..3).map(|j| d.settings().col(j).iter().sum()).collect();
        assert!(sums.iter().all(|s| s.abs() < 1e-12));
        // odd-function cancellation: main-effect rows of X1'X2 vanish for any
        // half matrix (the intercept row does not, in general)
        let mm = expand_model(&d, &ModelSpec::two_fi(3)).unwrap();
        let cross = mm.x1.t_mul(&mm.x2);
        for i in 1..4 {
            for j in 0..mm.x2.cols() {
                assert!(cross[(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_on_two_level_factor_rejected() {
        let d = full_factorial(3);
        let err = expand_model(&d, &ModelSpec::full_quadratic(3));
        assert!(matches!(err, Err(Error::InvalidModelSpec(_))));
    }

    #[test]
    fn replicate_pairing_validated() {
        let settings = pm(&[&[1, 1], &[1, 1], &[1, -1]]);
        // row 1 replicates row 0: fine
        assert!(Design::with_inferred_levels(
            settings.clone(),
            vec!["a".into(), "b".into()],
            vec![None, Some(0), None],
        )
        .is_ok());
        // row 2 claims to replicate row 0 but differs
        assert!(Design::with_inferred_levels(
            settings,
            vec!["a".into(), "b".into()],
            vec![None, None, Some(0)],
        )
        .is_err());
    }

    #[test]
    fn dof_counts_hidden_replicates() {
        // rows 0 and 1 equal but not declared paired: still one unique run
        let settings = pm(&[&[1, 1], &[1, 1], &[1, -1], &[-1, 1]]);
        let d = Design::with_inferred_levels(
            settings,
            vec!["a".into(), "b".into()],
            vec![None; 4],
        )
        .unwrap();
        let dof = dof_account(&d, &ModelSpec::main_effects()).unwrap();
        assert_eq!(dof.n_u, 3);
        assert_eq!(dof.r, 1);
    }

    #[test]
    fn expansion_is_deterministic() {
        let d = full_factorial(4);
        let spec = ModelSpec::two_fi(4);
        let a = expand_model(&d, &spec).unwrap();
        let b = expand_model(&d, &spec).unwrap();
        assert_eq!(a.x2, b.x2);
        assert_eq!(a.terms, b.terms);
    }

    #[test]
    fn canonical_hash_ignores_row_order() {
        let d1 = Design::with_inferred_levels(
            pm(&[&[1, -1], &[-1, 1], &[1, 1]]),
            vec!["a".into(), "b".into()],
            vec![None; 3],
        )
        .unwrap();
        let d2 = Design::with_inferred_levels(
            pm(&[&[1, 1], &[1, -1], &[-1, 1]]),
            vec!["a".into(), "b".into()],
            vec![None; 3],
        )
        .unwrap();
        assert_eq!(d1.canonical_hash(), d2.canonical_hash());
    }
}
