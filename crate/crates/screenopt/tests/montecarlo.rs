//! Distributional checks that need simulation: the null distribution of the
//! overall F statistic and the size of the stage-1 tests.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use screenopt::analysis::{overall_f_test, pooled_sigma2, stage1};
use screenopt::design::{adsd, expand_model, ModelSpec};
use screenopt::numerics::f_cdf;

/// Under beta2 = 0 with strongly active main effects (so pooling never
/// triggers), the overall F statistic follows F(rank(X2|1), g*); checked with
/// a one-sample Kolmogorov-Smirnov test at the 1% level over 1e4 simulations.
#[test]
fn overall_f_null_distribution_ks() {
    let d = adsd(6, 2, false).unwrap();
    let spec = ModelSpec::full_quadratic(6);
    let mm = expand_model(&d, &spec).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(314159);
    let n_sim = 10_000;
    let d1 =
        screenopt::numerics::numerical_rank(&mm.x2_adj, screenopt::numerics::RANK_REL_TOL)
            .unwrap();
    let mut d2 = 0usize;
    let mut stats = Vec::with_capacity(n_sim);
    for _ in 0..n_sim {
        let y: Vec<f64> = (0..d.n())
            .map(|i| {
                let signal: f64 = (1..=6).map(|j| 10.0 * mm.x1[(i, j)]).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                signal + e
            })
            .collect();
        let s1 = stage1(&y, &d, &spec, 0.10).unwrap();
        assert_eq!(s1.active.len(), 6, "all main effects must be detected");
        let pooled = pooled_sigma2(&y, &d, &spec, &s1).unwrap();
        let (f, _) = overall_f_test(&y, &d, &spec, &pooled).unwrap();
        stats.push(f);
        d2 = pooled.g_star;
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ks = 0.0f64;
    for (i, f) in stats.iter().enumerate() {
        let cdf = f_cdf(*f, d1, d2);
        let hi = (i + 1) as f64 / n_sim as f64 - cdf;
        let lo = cdf - i as f64 / n_sim as f64;
        ks = ks.max(hi).max(lo);
    }
    // asymptotic 1% critical value of the one-sample KS statistic
    let crit = 1.628 / (n_sim as f64).sqrt();
    assert!(ks < crit, "KS statistic {ks:.5} exceeds the 1% critical value {crit:.5}");
}

/// With all effects zero, the stage-1 declaration rate matches the nominal
/// alpha = 0.10 within 3 binomial standard errors over 1000 repetitions.
#[test]
fn stage1_size_under_null() {
    let d = adsd(6, 2, false).unwrap();
    let spec = ModelSpec::full_quadratic(6);
    let mut rng = ChaCha12Rng::seed_from_u64(271828);
    let reps = 1000;
    let mut declared = 0usize;
    let mut total = 0usize;
    for _ in 0..reps {
        let y: Vec<f64> = (0..d.n()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s1 = stage1(&y, &d, &spec, 0.10).unwrap();
        declared += s1.active.len();
        total += d.k();
    }
    let rate = declared as f64 / total as f64;
    let se = (0.10 * 0.90 / total as f64).sqrt();
    assert!(
        (rate - 0.10).abs() < 3.0 * se,
        "stage-1 size {rate:.4} deviates from 0.10 by more than 3 SE ({:.4})",
        3.0 * se
    );
}
