//! Command-line front end: evaluate designs, construct and select them, run
//! the two-stage analysis, and drive simulation scenarios.
//!
//! Exit codes: 0 success, 2 invalid input, 3 no design meets the ECI
//! threshold, 4 analysis infeasible (no error degrees of freedom).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use screenopt::analysis::{
    all_subsets_mbic, guided_subsets, overall_f_test, pooled_sigma2, stage1, AnalysisMethod,
    GuidedOptions, GuidedOutcome, Heredity, MbicOptions,
};
use screenopt::constructor::{search, SearchConfig};
use screenopt::criteria::{
    alias_matrix, alias_row_norms, alias_summary, constrained_select, d_efficiency,
    design_variances, eci, gt_modified_a, gt_modified_d, rlof, EciParams, RlofParams,
};
use screenopt::design::{
    adsd, dof_account, dsd, expand_model, load_csv, load_response_sets, write_csv_string, Design,
    ModelOrder, ModelSpec,
};
use screenopt::error::Error;
use screenopt::numerics::{numerical_rank, RANK_REL_TOL};
use screenopt::report::{
    AliasReport, CriterionReport, DesignJson, GtReport, Provenance,
};
use screenopt::simulation::{
    reactor_replay, run_scenario, sim_reactor, MetricsReport, ReactorVariant, Scenario,
};

#[derive(Parser)]
#[command(name = "screenopt", version, about = "Screening-design construction, evaluation, and two-stage analysis")]
struct Cli {
    /// Worker threads (default: available cores). The SCREENOPT_THREADS
    /// environment variable overrides this flag.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a design CSV: ECI breakdown, aliasing, variances, dof,
    /// D-efficiency, Gilmour-Trinca criteria, and rLOF.
    Evaluate(EvaluateArgs),
    /// Run the coordinate-exchange search from a JSON config.
    Construct(ConstructArgs),
    /// Constrained rLOF selection over a construct-produced pool.
    Select(SelectArgs),
    /// Two-stage analysis of a design and a response column.
    Analyze(AnalyzeArgs),
    /// Run a simulation scenario from a JSON file.
    Simulate(SimulateArgs),
    /// Emit a catalog design (DSD or ADSD) as CSV.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    design: PathBuf,
    /// Model order: me, 2fi, or quad.
    #[arg(long, default_value = "2fi")]
    model: ModelArg,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    #[arg(long, default_value_t = 20.0)]
    tau2: f64,
    /// Fitted model size for rLOF; "auto" uses floor(rank(X2|1)/2).
    #[arg(long, default_value = "auto")]
    p2: String,
    #[arg(long, default_value_t = 5000)]
    rlof_max_models: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConstructArgs {
    config: PathBuf,
    /// Output directory for best.csv, pool.json, and trace.json.
    #[arg(short, long, default_value = ".")]
    output: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    pool: PathBuf,
    /// ECI threshold S.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Fitted model size for rLOF; "auto" uses floor(rank(X2|1)/2).
    #[arg(long, default_value = "auto")]
    p2: String,
    /// Output CSV for the winning design (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    design: PathBuf,
    responses: PathBuf,
    /// Response column name (default: the first column).
    #[arg(long)]
    y_col: Option<String>,
    #[arg(long, default_value = "2fi")]
    model: ModelArg,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    #[arg(long, default_value = "allsubsets")]
    method: MethodArg,
    #[arg(long, default_value = "strong")]
    heredity: HeredityArg,
    /// Keep all k main effects in the selection stage instead of reducing to
    /// the stage-1 active set.
    #[arg(long)]
    full_x1: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also print an aligned plain-text metrics table.
    #[arg(long)]
    table: bool,
    /// Write per-repetition records as CSV.
    #[arg(long)]
    per_rep: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    /// Emit the k-factor DSD (2k+1 runs).
    #[arg(long)]
    dsd: Option<usize>,
    /// Emit the ADSD for k factors with f fake factors: "--adsd k f".
    #[arg(long, num_args = 2, value_names = ["K", "F"])]
    adsd: Option<Vec<usize>>,
    /// Drop the center run of the ADSD.
    #[arg(long)]
    drop_center: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Me,
    #[value(name = "2fi")]
    TwoFi,
    Quad,
}

impl ModelArg {
    fn order(self) -> ModelOrder {
        match self {
            ModelArg::Me => ModelOrder::MainEffects,
            ModelArg::TwoFi => ModelOrder::TwoFactorInteraction,
            ModelArg::Quad => ModelOrder::FullQuadratic,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Allsubsets,
    Guided,
    GuidedExtended,
}

impl MethodArg {
    fn method(self) -> AnalysisMethod {
        match self {
            MethodArg::Allsubsets => AnalysisMethod::AllSubsets,
            MethodArg::Guided => AnalysisMethod::Guided,
            MethodArg::GuidedExtended => AnalysisMethod::GuidedExtended,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum HeredityArg {
    Strong,
    Weak,
    Full,
}

impl HeredityArg {
    fn heredity(self) -> Heredity {
        match self {
            HeredityArg::Strong => Heredity::Strong,
            HeredityArg::Weak => Heredity::Weak,
            HeredityArg::Full => Heredity::Full,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("SCREENOPT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cli.threads);
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoDesignMeetsThreshold { .. } => 3,
        Error::NoErrorDf | Error::InvalidDegreesOfFreedom(_) => 4,
        _ => 2,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Construct(args) => cmd_construct(args),
        Command::Select(args) => cmd_select(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Catalog(args) => cmd_catalog(args),
    }
}

fn design_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "design".into())
}

fn resolve_p2(p2: &str, design: &Design, spec: &ModelSpec) -> Result<usize, Error> {
    if p2 == "auto" {
        let mm = expand_model(design, spec)?;
        Ok(numerical_rank(&mm.x2_adj, RANK_REL_TOL)? / 2)
    } else {
        p2.parse::<usize>().map_err(|_| Error::InvalidModelSpec(format!("bad --p2 value '{p2}'")))
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|source| Error::Io { path: p.display().to_string(), source }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let design = load_csv(&args.design)?;
    let spec = ModelSpec::for_order(args.model.order(), design.k());
    let mm = expand_model(&design, &spec)?;
    let dof = dof_account(&design, &spec)?;
    let params = EciParams { alpha: args.alpha, tau2: args.tau2, r_min: 1, ell_min: 0 };
    let eci_eval = eci(&design, &spec, &params)?;
    let alias = alias_matrix(&mm)?;
    let (mean_abs, max_abs) = alias_summary(&alias);
    let sqrt_v: Vec<f64> = design_variances(&mm)?.into_iter().map(f64::sqrt).collect();
    let p2 = resolve_p2(&args.p2, &design, &spec)?;
    let rlof_val = rlof(
        &design,
        &spec,
        &RlofParams { p2, max_models: args.rlof_max_models, rng_seed: args.seed },
    )?;
    let gt = if dof.r >= 1 {
        Some(GtReport {
            modified_d: gt_modified_d(&design, args.alpha)?,
            modified_a: gt_modified_a(&design, args.alpha)?,
            alpha: args.alpha,
        })
    } else {
        None
    };
    let config_desc = format!(
        "evaluate {} model={:?} alpha={} tau2={} p2={p2}",
        args.design.display(),
        args.model.order(),
        args.alpha,
        args.tau2
    );
    let report = CriterionReport {
        provenance: Provenance::new(Some(args.seed), config_desc.as_bytes()),
        design_id: design_id(&args.design),
        n: design.n(),
        k: design.k(),
        dof,
        eci: eci_eval,
        alias: AliasReport { row_norms: alias_row_norms(&alias), mean_abs, max_abs },
        sqrt_v,
        d_efficiency: d_efficiency(&design),
        gt,
        rlof: rlof_val.value,
        rlof_detail: rlof_val,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_output(args.output.as_deref(), &text)
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    provenance: Provenance,
    config: SearchConfig,
    entries: Vec<PoolFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct PoolFileEntry {
    eci_total: f64,
    design: DesignJson,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    provenance: &'a Provenance,
    best_total: f64,
    restarts: &'a [screenopt::constructor::RestartTrace],
}

fn cmd_construct(args: ConstructArgs) -> Result<(), Error> {
    let bytes = fs::read(&args.config)
        .map_err(|source| Error::Io { path: args.config.display().to_string(), source })?;
    let config: SearchConfig = serde_json::from_slice(&bytes)
        .map_err(|e| Error::InfeasibleConfig(format!("cannot parse config: {e}")))?;
    config.validate()?;
    let provenance = Provenance::new(Some(config.seed), &bytes);
    let result = search(&config)?;

    fs::create_dir_all(&args.output)
        .map_err(|source| Error::Io { path: args.output.display().to_string(), source })?;
    let best_path = args.output.join("best.csv");
    let mut csv = provenance.csv_comment();
    csv.push_str(&write_csv_string(&result.best.0));
    fs::write(&best_path, csv)
        .map_err(|source| Error::Io { path: best_path.display().to_string(), source })?;

    let pool = PoolFile {
        provenance: provenance.clone(),
        config: config.clone(),
        entries: result
            .pool
            .iter()
            .map(|e| PoolFileEntry {
                eci_total: e.eci_total,
                design: DesignJson::from_design(&e.design),
            })
            .collect(),
    };
    let pool_path = args.output.join("pool.json");
    fs::write(&pool_path, serde_json::to_string_pretty(&pool).expect("pool serializes"))
        .map_err(|source| Error::Io { path: pool_path.display().to_string(), source })?;

    let trace = TraceFile {
        provenance: &provenance,
        best_total: result.best.1.total,
        restarts: &result.trace,
    };
    let trace_path = args.output.join("trace.json");
    fs::write(&trace_path, serde_json::to_string_pretty(&trace).expect("trace serializes"))
        .map_err(|source| Error::Io { path: trace_path.display().to_string(), source })?;

    eprintln!(
        "best eci_total = {:.6} (g = {}), pool size = {}",
        result.best.1.total,
        result.best.1.g,
        result.pool.len()
    );
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), Error> {
    let bytes = fs::read(&args.pool)
        .map_err(|source| Error::Io { path: args.pool.display().to_string(), source })?;
    let pool: PoolFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::InvalidDesign(format!("cannot parse pool: {e}")))?;
    if pool.entries.is_empty() {
        return Err(Error::NoDesignMeetsThreshold { threshold: args.s });
    }
    let designs: Vec<Design> =
        pool.entries.iter().map(|e| e.design.to_design()).collect::<Result<_, _>>()?;
    let spec = ModelSpec::for_order(pool.config.model, pool.config.k);
    let rlof_params = if args.p2 == "auto" {
        None
    } else {
        let p2 = args
            .p2
            .parse::<usize>()
            .map_err(|_| Error::InvalidModelSpec(format!("bad --p2 value '{}'", args.p2)))?;
        Some(RlofParams::new(p2))
    };
    let winner = constrained_select(
        &designs,
        args.s,
        &spec,
        &pool.config.eci_params(),
        rlof_params.as_ref(),
    )?;
    let provenance = Provenance::new(Some(pool.config.seed), &bytes);
    let mut csv = provenance.csv_comment();
    csv.push_str(&write_csv_string(&designs[winner]));
    write_output(args.output.as_deref(), &csv)
}

#[derive(Serialize)]
struct AnalysisReportJson {
    provenance: Provenance,
    design_id: String,
    model: ModelOrder,
    alpha: f64,
    method: AnalysisMethod,
    heredity: Heredity,
    stage1: Stage1Json,
    pooled: PooledJson,
    overall_f: Option<OverallFJson>,
    selection: SelectionJson,
}

#[derive(Serialize)]
struct Stage1Json {
    table: Vec<Stage1Row>,
    sigma_hat: f64,
    sigma2_hat: f64,
    g: usize,
    ss_pe: f64,
    r: usize,
    ss_lof: f64,
    ell: usize,
    active_factors: Vec<String>,
}

#[derive(Serialize)]
struct Stage1Row {
    factor: String,
    estimate: f64,
    se: f64,
    t: f64,
    p: f64,
    ci_lower: f64,
    ci_upper: f64,
    active: bool,
}

#[derive(Serialize)]
struct PooledJson {
    sigma2: f64,
    g_star: usize,
    ss_inactive: f64,
}

#[derive(Serialize)]
struct OverallFJson {
    f: f64,
    p: f64,
}

#[derive(Serialize)]
struct SelectionJson {
    state: String,
    terms: Vec<String>,
    mbic: Option<f64>,
    top_models: Vec<TopModelJson>,
    final_model: Vec<CoefJson>,
}

#[derive(Serialize)]
struct TopModelJson {
    mbic: f64,
    terms: Vec<String>,
}

#[derive(Serialize)]
struct CoefJson {
    term: String,
    estimate: f64,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let design = load_csv(&args.design)?;
    let (names, cols) = load_response_sets(&args.responses)?;
    let col = match &args.y_col {
        Some(name) => {
            let idx = names.iter().position(|n| n == name).ok_or_else(|| Error::Csv {
                path: args.responses.display().to_string(),
                message: format!("no response column named '{name}'"),
            })?;
            cols[idx].clone()
        }
        None => cols[0].clone(),
    };
    if col.len() != design.n() {
        return Err(Error::DimensionMismatch {
            context: format!("response length {} != n = {}", col.len(), design.n()),
        });
    }
    let spec = ModelSpec::for_order(args.model.order(), design.k());
    let s1 = stage1(&col, &design, &spec, args.alpha)?;
    let pooled = pooled_sigma2(&col, &design, &spec, &s1)?;
    let overall = overall_f_test(&col, &design, &spec, &pooled).ok();
    let heredity = args.heredity.heredity();
    let method = args.method.method();
    let fnames = design.factor_names();

    let (state, terms, mbic, top, coefs) = match method {
        AnalysisMethod::AllSubsets => {
            let opts = MbicOptions { reduce_x1: !args.full_x1, max_terms: None };
            let sel = all_subsets_mbic(&col, &design, &spec, &s1, heredity, &opts)?;
            (
                "selected".to_string(),
                sel.terms.iter().map(|&t| spec.terms()[t].label(fnames)).collect::<Vec<_>>(),
                Some(sel.mbic),
                sel.top_models
                    .iter()
                    .map(|(m, ts)| TopModelJson {
                        mbic: *m,
                        terms: ts.iter().map(|&t| spec.terms()[t].label(fnames)).collect(),
                    })
                    .collect::<Vec<_>>(),
                sel.coefficients,
            )
        }
        AnalysisMethod::Guided | AnalysisMethod::GuidedExtended => {
            let opts = if method == AnalysisMethod::GuidedExtended {
                let mm = expand_model(&design, &spec)?;
                let rank = numerical_rank(&mm.x2_adj, RANK_REL_TOL)?;
                GuidedOptions { max_size: Some(rank.saturating_sub(1)), ..Default::default() }
            } else {
                GuidedOptions::default()
            };
            match guided_subsets(&col, &design, &spec, &s1, heredity, &opts)? {
                GuidedOutcome::Selected(sel) => (
                    "selected".to_string(),
                    sel.terms.iter().map(|&t| spec.terms()[t].label(fnames)).collect(),
                    None,
                    Vec::new(),
                    sel.coefficients,
                ),
                GuidedOutcome::NoSecondOrder => {
                    ("no_second_order".to_string(), Vec::new(), None, Vec::new(), Vec::new())
                }
                GuidedOutcome::AllExhibitLof { .. } => {
                    ("all_exhibit_lof".to_string(), Vec::new(), None, Vec::new(), Vec::new())
                }
            }
        }
    };

    let config_desc = format!(
        "analyze {} {} alpha={} method={:?} heredity={:?}",
        args.design.display(),
        args.responses.display(),
        args.alpha,
        method,
        heredity
    );
    let report = AnalysisReportJson {
        provenance: Provenance::new(None, config_desc.as_bytes()),
        design_id: design_id(&args.design),
        model: args.model.order(),
        alpha: args.alpha,
        method,
        heredity,
        stage1: Stage1Json {
            table: (0..design.k())
                .map(|j| Stage1Row {
                    factor: fnames[j].clone(),
                    estimate: s1.beta_hat[j + 1],
                    se: s1.se[j],
                    t: s1.t[j],
                    p: s1.p[j],
                    ci_lower: s1.ci[j].0,
                    ci_upper: s1.ci[j].1,
                    active: s1.active.contains(&j),
                })
                .collect(),
            sigma_hat: s1.sigma2.sigma2.sqrt(),
            sigma2_hat: s1.sigma2.sigma2,
            g: s1.sigma2.g,
            ss_pe: s1.sigma2.ss_pe,
            r: s1.sigma2.r,
            ss_lof: s1.sigma2.ss_lof,
            ell: s1.sigma2.ell,
            active_factors: s1.active.iter().map(|&j| fnames[j].clone()).collect(),
        },
        pooled: PooledJson {
            sigma2: pooled.sigma2,
            g_star: pooled.g_star,
            ss_inactive: pooled.ss_inactive,
        },
        overall_f: overall.map(|(f, p)| OverallFJson { f, p }),
        selection: SelectionJson {
            state,
            terms,
            mbic,
            top_models: top,
            final_model: coefs
                .into_iter()
                .map(|(term, estimate)| CoefJson { term, estimate })
                .collect(),
        },
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_output(args.output.as_deref(), &text)
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ScenarioFile {
    Generic {
        design: DesignSource,
        model: ModelOrder,
        #[serde(flatten)]
        scenario: Scenario,
    },
    ReactorReplay {
        design_path: PathBuf,
        responses_path: PathBuf,
    },
    SimReactor {
        design_path: PathBuf,
        variant: ReactorVariant,
        #[serde(default = "default_reps")]
        reps: usize,
        seed: u64,
    },
}

fn default_reps() -> usize {
    100
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum DesignSource {
    Path(PathBuf),
    Dsd(usize),
    Adsd([usize; 2]),
    AdsdNoCenter([usize; 2]),
}

impl DesignSource {
    fn load(&self) -> Result<Design, Error> {
        match self {
            DesignSource::Path(p) => load_csv(p),
            DesignSource::Dsd(k) => dsd(*k),
            DesignSource::Adsd([k, f]) => adsd(*k, *f, false),
            DesignSource::AdsdNoCenter([k, f]) => adsd(*k, *f, true),
        }
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    provenance: Provenance,
    metrics: MetricsSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_rep: Option<&'a [screenopt::simulation::RepRecord]>,
}

#[derive(Serialize)]
struct MetricsSummary {
    tpr_f: f64,
    fpr_f: f64,
    exact_f_pct: f64,
    tpr_2fi: f64,
    fpr_2fi: f64,
    tpr_q: f64,
    fpr_q: f64,
    exact_a_pct: f64,
    mean_model_size: f64,
    reps_run: usize,
    reps_failed: usize,
}

impl MetricsSummary {
    fn from(m: &MetricsReport) -> Self {
        MetricsSummary {
            tpr_f: m.tpr_f,
            fpr_f: m.fpr_f,
            exact_f_pct: m.exact_f_pct,
            tpr_2fi: m.tpr_2fi,
            fpr_2fi: m.fpr_2fi,
            tpr_q: m.tpr_q,
            fpr_q: m.fpr_q,
            exact_a_pct: m.exact_a_pct,
            mean_model_size: m.mean_model_size,
            reps_run: m.reps_run,
            reps_failed: m.reps_failed,
        }
    }
}

fn metrics_table(m: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(
        "TPR_F   FPR_F   F=F%    TPR_2FI FPR_2FI TPR_Q   FPR_Q   A=A%    |A|\n",
    );
    s.push_str(&format!(
        "{:<7.3} {:<7.3} {:<7.3} {:<7.3} {:<7.3} {:<7.3} {:<7.3} {:<7.3} {:<7.3}\n",
        m.tpr_f,
        m.fpr_f,
        m.exact_f_pct,
        m.tpr_2fi,
        m.fpr_2fi,
        m.tpr_q,
        m.fpr_q,
        m.exact_a_pct,
        m.mean_model_size
    ));
    s
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let bytes = fs::read(&args.scenario)
        .map_err(|source| Error::Io { path: args.scenario.display().to_string(), source })?;
    let file: ScenarioFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::InvalidScenario(format!("cannot parse scenario: {e}")))?;
    let (report, seed) = match &file {
        ScenarioFile::Generic { design, model, scenario } => {
            let d = design.load()?;
            let spec = ModelSpec::for_order(*model, d.k());
            (run_scenario(&d, &spec, scenario)?, Some(scenario.seed))
        }
        ScenarioFile::ReactorReplay { design_path, responses_path } => {
            let d = load_csv(design_path)?;
            let (_, cols) = load_response_sets(responses_path)?;
            (reactor_replay(&d, &cols)?, None)
        }
        ScenarioFile::SimReactor { design_path, variant, reps, seed } => {
            let d = load_csv(design_path)?;
            (sim_reactor(&d, *variant, *reps, *seed)?, Some(*seed))
        }
    };
    if let Some(path) = &args.per_rep {
        let mut csv = String::from(
            "rep,truth_factors,truth_terms,declared_factors,selected_terms,tp_f,fp_f,tp_2fi,fp_2fi,tp_q,fp_q,exact_f,exact_a,model_size,error\n",
        );
        for r in &report.per_rep {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.rep,
                join_ids(&r.truth_factors),
                r.truth_terms.join(";"),
                join_ids(&r.declared_factors),
                r.selected_terms.join(";"),
                r.tp_f,
                r.fp_f,
                r.tp_2fi,
                r.fp_2fi,
                r.tp_q,
                r.fp_q,
                r.exact_f,
                r.exact_a,
                r.model_size,
                r.error.clone().unwrap_or_default()
            ));
        }
        fs::write(path, csv)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    }
    let out = MetricsFile {
        provenance: Provenance::new(seed, &bytes),
        metrics: MetricsSummary::from(&report),
        per_rep: None,
    };
    let mut text = serde_json::to_string_pretty(&out).expect("metrics serialize");
    text.push('\n');
    if args.table {
        text.push_str(&metrics_table(&report));
    }
    write_output(args.output.as_deref(), &text)
}

fn join_ids(v: &[usize]) -> String {
    v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(";")
}

fn cmd_catalog(args: CatalogArgs) -> Result<(), Error> {
    let (design, desc) = match (args.dsd, &args.adsd) {
        (Some(k), None) => (dsd(k)?, format!("catalog dsd {k}")),
        (None, Some(kf)) => (
            adsd(kf[0], kf[1], args.drop_center)?,
            format!("catalog adsd {} {} drop_center={}", kf[0], kf[1], args.drop_center),
        ),
        _ => {
            return Err(Error::InvalidDesign(
                "catalog needs exactly one of --dsd K or --adsd K F".into(),
            ))
        }
    };
    let provenance = Provenance::new(None, desc.as_bytes());
    let mut csv = provenance.csv_comment();
    csv.push_str(&write_csv_string(&design));
    write_output(args.output.as_deref(), &csv)
}
