//! Screening simulation protocols: truth generation with heredity-respecting
//! active sets, response simulation, TPR/FPR metric aggregation, and the
//! reactor-experiment replay.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::analysis::{
    all_subsets_mbic, guided_subsets, stage1, AnalysisMethod, GuidedOptions, GuidedOutcome,
    Heredity, MbicOptions,
};
use crate::design::{expand_model, Design, ModelSpec, Term};
use crate::error::{Error, Result};
use crate::numerics::{numerical_rank, RANK_REL_TOL};

/// How many active effects of each kind a scenario draws.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ActiveCounts {
    pub main: usize,
    #[serde(default)]
    pub two_fi: usize,
    #[serde(default)]
    pub quad: usize,
}

/// A simulation scenario over a fixed design and model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub counts: ActiveCounts,
    /// Lower bound of active main-effect magnitudes (|β| = offset + Exp(1)).
    #[serde(default = "default_offset")]
    pub main_offset: f64,
    /// Lower bound of active second-order magnitudes.
    #[serde(default = "default_offset")]
    pub second_order_offset: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub alpha: f64,
    pub method: AnalysisMethod,
    #[serde(default = "default_heredity")]
    pub heredity: Heredity,
    pub seed: u64,
}

fn default_offset() -> f64 {
    2.5
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_reps() -> usize {
    100
}
fn default_heredity() -> Heredity {
    Heredity::Strong
}

/// Simulated ground truth: main-effect coefficients and active second-order
/// terms with their coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Truth {
    pub beta1: Vec<f64>,
    pub beta2: Vec<(Term, f64)>,
    pub active_factors: BTreeSet<usize>,
}

/// Draw a truth: active main effects uniform without replacement, active
/// second-order terms uniform among those satisfying strong heredity within
/// the active factor set, magnitudes offset + Exp(1) with random signs.
pub fn gen_truth(
    k: usize,
    spec: &ModelSpec,
    scenario: &Scenario,
    rng: &mut ChaCha12Rng,
) -> Result<Truth> {
    let c = scenario.counts;
    if c.main > k {
        return Err(Error::InvalidScenario(format!("{} active mains of {k} factors", c.main)));
    }
    let mut factors: Vec<usize> = (0..k).collect();
    for i in 0..c.main {
        let j = rng.gen_range(i..k);
        factors.swap(i, j);
    }
    let active: BTreeSet<usize> = factors[..c.main].iter().copied().collect();

    let pairs: Vec<Term> = spec
        .terms()
        .iter()
        .copied()
        .filter(|t| matches!(t, Term::Interaction(a, b) if active.contains(a) && active.contains(b)))
        .collect();
    let quads: Vec<Term> = spec
        .terms()
        .iter()
        .copied()
        .filter(|t| matches!(t, Term::Quadratic(a) if active.contains(a)))
        .collect();
    if c.two_fi > pairs.len() {
        return Err(Error::InvalidScenario(format!(
            "{} active interactions but only {} satisfy strong heredity",
            c.two_fi,
            pairs.len()
        )));
    }
    if c.quad > quads.len() {
        return Err(Error::InvalidScenario(format!(
            "{} active quadratics but only {} satisfy strong heredity",
            c.quad,
            quads.len()
        )));
    }

    let magnitude = |offset: f64, rng: &mut ChaCha12Rng| -> f64 {
        let e: f64 = Exp1.sample(rng);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        sign * (offset + e)
    };
    let mut beta1 = vec![0.0; k];
    for &j in &active {
        beta1[j] = magnitude(scenario.main_offset, rng);
    }
    let mut beta2 = Vec::new();
    for t in sample_without_replacement(&pairs, c.two_fi, rng) {
        beta2.push((t, magnitude(scenario.second_order_offset, rng)));
    }
    for t in sample_without_replacement(&quads, c.quad, rng) {
        beta2.push((t, magnitude(scenario.second_order_offset, rng)));
    }
    Ok(Truth { beta1, beta2, active_factors: active })
}

fn sample_without_replacement(pool: &[Term], count: usize, rng: &mut ChaCha12Rng) -> Vec<Term> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..count {
        let j = rng.gen_range(i..pool.len());
        idx.swap(i, j);
    }
    idx[..count].iter().map(|&i| pool[i]).collect()
}

/// One repetition's raw record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub truth_factors: Vec<usize>,
    pub truth_terms: Vec<String>,
    pub declared_factors: Vec<usize>,
    pub selected_terms: Vec<String>,
    pub tp_f: usize,
    pub fp_f: usize,
    pub tp_2fi: usize,
    pub fp_2fi: usize,
    pub tp_q: usize,
    pub fp_q: usize,
    pub exact_f: bool,
    pub exact_a: bool,
    pub model_size: usize,
    pub error: Option<String>,
}

/// Aggregated metrics. Rates pool counts over successful repetitions; a rate
/// with an empty denominator reports 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr_f: f64,
    pub fpr_f: f64,
    pub exact_f_pct: f64,
    pub tpr_2fi: f64,
    pub fpr_2fi: f64,
    pub tpr_q: f64,
    pub fpr_q: f64,
    pub exact_a_pct: f64,
    pub mean_model_size: f64,
    pub reps_run: usize,
    pub reps_failed: usize,
    pub per_rep: Vec<RepRecord>,
}

impl MetricsReport {
    /// Aggregate raw records into pooled rates. Also used in tests to check
    /// that the summary and the records never drift apart.
    pub fn aggregate(records: Vec<RepRecord>, spec: &ModelSpec, k: usize) -> Self {
        let n_2fi_all =
            spec.terms().iter().filter(|t| matches!(t, Term::Interaction(..))).count();
        let n_q_all = spec.terms().iter().filter(|t| matches!(t, Term::Quadratic(_))).count();
        let mut tp_f = 0usize;
        let mut fp_f = 0usize;
        let mut act_f = 0usize;
        let mut inact_f = 0usize;
        let mut tp_i = 0usize;
        let mut fp_i = 0usize;
        let mut act_i = 0usize;
        let mut inact_i = 0usize;
        let mut tp_q = 0usize;
        let mut fp_q = 0usize;
        let mut act_q = 0usize;
        let mut inact_q = 0usize;
        let mut exact_f = 0usize;
        let mut exact_a = 0usize;
        let mut size_sum = 0usize;
        let mut ok = 0usize;
        let mut failed = 0usize;
        for r in &records {
            if r.error.is_some() {
                failed += 1;
                continue;
            }
            ok += 1;
            tp_f += r.tp_f;
            fp_f += r.fp_f;
            act_f += r.truth_factors.len();
            inact_f += k - r.truth_factors.len();
            size_sum += r.model_size;
            exact_f += usize::from(r.exact_f);
            exact_a += usize::from(r.exact_a);
            let truth_2fi = r.truth_terms.iter().filter(|t| t.contains('*')).count();
            let truth_q = r.truth_terms.iter().filter(|t| t.contains('^')).count();
            tp_i += r.tp_2fi;
            fp_i += r.fp_2fi;
            act_i += truth_2fi;
            inact_i += n_2fi_all - truth_2fi;
            tp_q += r.tp_q;
            fp_q += r.fp_q;
            act_q += truth_q;
            inact_q += n_q_all - truth_q;
        }
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        MetricsReport {
            tpr_f: rate(tp_f, act_f),
            fpr_f: rate(fp_f, inact_f),
            exact_f_pct: rate(exact_f, ok),
            tpr_2fi: rate(tp_i, act_i),
            fpr_2fi: rate(fp_i, inact_i),
            tpr_q: rate(tp_q, act_q),
            fpr_q: rate(fp_q, inact_q),
            exact_a_pct: rate(exact_a, ok),
            mean_model_size: if ok == 0 { 0.0 } else { size_sum as f64 / ok as f64 },
            reps_run: ok,
            reps_failed: failed,
            per_rep: records,
        }
    }
}

/// Run a scenario: per rep, draw a truth, simulate y = Xβ + N(0, σ²I), run
/// stage 1 plus the configured stage-2 method, and score against the truth.
/// Reps run in parallel on per-rep RNG streams; failures are recorded, not
/// fatal.
pub fn run_scenario(design: &Design, spec: &ModelSpec, scenario: &Scenario) -> Result<MetricsReport> {
    let mm = expand_model(design, spec)?;
    let k = design.k();
    let records: Vec<RepRecord> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed);
            rng.set_stream(rep as u64 + 1);
            match run_rep(design, spec, scenario, &mm.x1, &mm.x2, rep, &mut rng) {
                Ok(record) => record,
                Err(e) => RepRecord {
                    rep,
                    truth_factors: Vec::new(),
                    truth_terms: Vec::new(),
                    declared_factors: Vec::new(),
                    selected_terms: Vec::new(),
                    tp_f: 0,
                    fp_f: 0,
                    tp_2fi: 0,
                    fp_2fi: 0,
                    tp_q: 0,
                    fp_q: 0,
                    exact_f: false,
                    exact_a: false,
                    model_size: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(MetricsReport::aggregate(records, spec, k))
}

#[allow(clippy::too_many_arguments)]
fn run_rep(
    design: &Design,
    spec: &ModelSpec,
    scenario: &Scenario,
    x1: &crate::numerics::Mat,
    x2: &crate::numerics::Mat,
    rep: usize,
    rng: &mut ChaCha12Rng,
) -> Result<RepRecord> {
    let truth = gen_truth(design.k(), spec, scenario, rng)?;
    let n = design.n();
    let sigma = scenario.sigma2.sqrt();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = 0.0;
        for j in 0..design.k() {
            v += x1[(i, j + 1)] * truth.beta1[j];
        }
        for (t, b) in &truth.beta2 {
            let c = spec.terms().iter().position(|s| s == t).expect("truth term in spec");
            v += x2[(i, c)] * b;
        }
        let e: f64 = StandardNormal.sample(rng);
        y[i] = v + sigma * e;
    }
    score_rep(&y, design, spec, scenario, &truth, rep)
}

/// Analyze one response vector and score it against the truth.
pub fn score_rep(
    y: &[f64],
    design: &Design,
    spec: &ModelSpec,
    scenario: &Scenario,
    truth: &Truth,
    rep: usize,
) -> Result<RepRecord> {
    let s1 = stage1(y, design, spec, scenario.alpha)?;
    let selected: Vec<Term> = match scenario.method {
        AnalysisMethod::AllSubsets => {
            let sel = all_subsets_mbic(y, design, spec, &s1, scenario.heredity, &MbicOptions::default())?;
            sel.terms.iter().map(|&i| spec.terms()[i]).collect()
        }
        AnalysisMethod::Guided | AnalysisMethod::GuidedExtended => {
            let opts = if scenario.method == AnalysisMethod::GuidedExtended {
                let mm = expand_model(design, spec)?;
                let rank = numerical_rank(&mm.x2_adj, RANK_REL_TOL)?;
                GuidedOptions { max_size: Some(rank.saturating_sub(1)), ..Default::default() }
            } else {
                GuidedOptions::default()
            };
            match guided_subsets(y, design, spec, &s1, scenario.heredity, &opts)? {
                GuidedOutcome::Selected(sel) => {
                    sel.terms.iter().map(|&i| spec.terms()[i]).collect()
                }
                GuidedOutcome::NoSecondOrder | GuidedOutcome::AllExhibitLof { .. } => Vec::new(),
            }
        }
    };

    let names = design.factor_names();
    let truth_terms: BTreeSet<Term> = truth.beta2.iter().map(|(t, _)| *t).collect();
    let sel_set: BTreeSet<Term> = selected.iter().copied().collect();
    let is_2fi = |t: &Term| matches!(t, Term::Interaction(..));
    let count =
        |set: &BTreeSet<Term>, f: &dyn Fn(&Term) -> bool| set.iter().filter(|t| f(t)).count();

    let tp_2fi = count(&(&sel_set & &truth_terms), &is_2fi);
    let fp_2fi = count(&(&sel_set - &truth_terms), &is_2fi);
    let is_q = |t: &Term| matches!(t, Term::Quadratic(_));
    let tp_q = count(&(&sel_set & &truth_terms), &is_q);
    let fp_q = count(&(&sel_set - &truth_terms), &is_q);

    let tp_f = s1.active.intersection(&truth.active_factors).count();
    let fp_f = s1.active.difference(&truth.active_factors).count();
    let exact_f = s1.active == truth.active_factors;
    let exact_a = exact_f && sel_set == truth_terms;

    Ok(RepRecord {
        rep,
        truth_factors: truth.active_factors.iter().copied().collect(),
        truth_terms: truth.beta2.iter().map(|(t, _)| t.label(names)).collect(),
        declared_factors: s1.active.iter().copied().collect(),
        selected_terms: selected.iter().map(|t| t.label(names)).collect(),
        tp_f,
        fp_f,
        tp_2fi,
        fp_2fi,
        tp_q,
        fp_q,
        exact_f,
        exact_a,
        model_size: s1.active.len() + sel_set.len(),
        error: None,
    })
}

/// Replay the nine response completions of the reactor example's 12-run
/// design under stage 1 plus all-subsets selection. Ground truth: factors
/// {2, 4, 5} and the interactions (2,4) and (4,5) of the fitted full-factorial
/// model. Deterministic.
pub fn reactor_replay(design: &Design, response_sets: &[Vec<f64>]) -> Result<MetricsReport> {
    let k = design.k();
    if k != 5 {
        return Err(Error::InvalidScenario("reactor replay expects 5 factors".into()));
    }
    let spec = ModelSpec::two_fi(k);
    let truth = Truth {
        beta1: vec![0.0, 9.75, 0.0, 5.375, -3.125],
        beta2: vec![(Term::Interaction(1, 3), 6.625), (Term::Interaction(3, 4), -5.5)],
        active_factors: [1usize, 3, 4].into_iter().collect(),
    };
    let scenario = Scenario {
        counts: ActiveCounts { main: 3, two_fi: 2, quad: 0 },
        main_offset: 0.0,
        second_order_offset: 0.0,
        sigma2: 0.0,
        reps: response_sets.len(),
        alpha: 0.10,
        method: AnalysisMethod::AllSubsets,
        heredity: Heredity::Strong,
        seed: 0,
    };
    let records: Vec<RepRecord> = response_sets
        .iter()
        .enumerate()
        .map(|(rep, y)| score_rep(y, design, &spec, &scenario, &truth, rep))
        .collect::<Result<_>>()?;
    Ok(MetricsReport::aggregate(records, &spec, k))
}

/// Which interactions the simulated reactor truth carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactorVariant {
    /// The fitted model's two interactions.
    Base,
    /// Adds the (2,5)-role interaction with effect size 10.
    Plus2fi,
}

/// Simulate the reactor experiment from its fitted model (σ = 3.331),
/// randomly assigning which 3 of the 5 factors play the roles of factors
/// 2, 4, and 5 while keeping the fitted coefficient magnitudes.
pub fn sim_reactor(
    design: &Design,
    variant: ReactorVariant,
    reps: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let k = design.k();
    if k != 5 {
        return Err(Error::InvalidScenario("sim reactor expects 5 factors".into()));
    }
    let spec = ModelSpec::two_fi(k);
    let mm = expand_model(design, &spec)?;
    let sigma = 3.331;
    let scenario = Scenario {
        counts: ActiveCounts { main: 3, two_fi: 2, quad: 0 },
        main_offset: 0.0,
        second_order_offset: 0.0,
        sigma2: sigma * sigma,
        reps,
        alpha: 0.10,
        method: AnalysisMethod::AllSubsets,
        heredity: Heredity::Strong,
        seed,
    };
    let records: Vec<RepRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let mut run = || -> Result<RepRecord> {
                // roles (2, 4, 5) mapped onto three distinct random factors
                let mut factors: Vec<usize> = (0..k).collect();
                for i in 0..3 {
                    let j = rng.gen_range(i..k);
                    factors.swap(i, j);
                }
                let (f2, f4, f5) = (factors[0], factors[1], factors[2]);
                let mut beta1 = vec![0.0; k];
                beta1[f2] = 9.75;
                beta1[f4] = 5.375;
                beta1[f5] = -3.125;
                let pair = |a: usize, b: usize| Term::Interaction(a.min(b), a.max(b));
                let mut beta2 = vec![(pair(f2, f4), 6.625), (pair(f4, f5), -5.5)];
                if variant == ReactorVariant::Plus2fi {
                    beta2.push((pair(f2, f5), 10.0));
                }
                let truth = Truth {
                    beta1,
                    beta2,
                    active_factors: [f2, f4, f5].into_iter().collect(),
                };
                let mut y = vec![0.0; design.n()];
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut v = 65.5;
                    for j in 0..k {
                        v += mm.x1[(i, j + 1)] * truth.beta1[j];
                    }
                    for (t, b) in &truth.beta2 {
                        let c = spec.terms().iter().position(|s| s == t).unwrap();
                        v += mm.x2[(i, c)] * b;
                    }
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *yi = v + sigma * e;
                }
                score_rep(&y, design, &spec, &scenario, &truth, rep)
            };
            run().unwrap_or_else(|e| RepRecord {
                rep,
                truth_factors: Vec::new(),
                truth_terms: Vec::new(),
                declared_factors: Vec::new(),
                selected_terms: Vec::new(),
                tp_f: 0,
                fp_f: 0,
                tp_2fi: 0,
                fp_2fi: 0,
                tp_q: 0,
                fp_q: 0,
                exact_f: false,
                exact_a: false,
                model_size: 0,
                error: Some(e.to_string()),
            })
        })
        .collect();
    Ok(MetricsReport::aggregate(records, &spec, k))
}
