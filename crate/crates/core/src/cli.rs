//! Command-line interface: `simulate`, `estimate`, `evaluate`, `replicate`.
//!
//! Exit codes: 0 success, 2 usage, 3 data or validation, 4 numerical failure.
//! A `--config FILE` JSON object supplies defaults for any long flag; flags on
//! the command line override it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dag::{graph_from_coefs, is_dag};
use crate::error::{CsbnError, Result};
use crate::estimators::{fit, EstimatorConfig, FitResult, Method};
use crate::io::{self, FitReport};
use crate::metrics::{evaluate_coefs, CorrectnessRule, GraphEval};
use crate::model::{CoefMatrix, DataSet, ErrorSpec, PenaltyParams, SCAD_A, ZERO_THRESHOLD};
use crate::simgen::{self, derive_seed, stream, Calibration, ContaminationSpec, Structure};
use crate::tuning::{select_lambda_rcp, select_lambda_sic, write_sweep_csv, LambdaGrid, RcpParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "CSBN_JOBS";

#[derive(Debug, Parser)]
#[command(name = "csbn", version, about = "Structure learning for Gaussian Bayesian networks with error-prone nodes")]
#[command(args_override_self = true)]
pub struct Cli {
    /// JSON file with default flag values (flags on the command line win).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random network, interventional data and contaminated surrogates.
    Simulate(SimulateArgs),
    /// Fit a network to data.
    Estimate(EstimateArgs),
    /// Compare an estimated coefficient matrix with the truth.
    Evaluate(EvaluateArgs),
    /// Run the factorial simulation study and write metric tables.
    Replicate(ReplicateArgs),
}

/// λ given on the command line: a number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Auto,
    Value(f64),
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaArg::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("'{s}' is neither a number nor 'auto'"))?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(format!("lambda must be >= 0, got {v}"));
        }
        Ok(LambdaArg::Value(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Selector {
    Sic,
    Rcp,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// SCAD shape parameter.
    #[arg(long, default_value_t = SCAD_A)]
    pub a: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub outer_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub nr_tol: f64,
    #[arg(long, default_value_t = 50)]
    pub nr_max_iters: usize,
    #[arg(long, default_value_t = ZERO_THRESHOLD)]
    pub zero_threshold: f64,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> Result<EstimatorConfig> {
        let cfg = EstimatorConfig {
            penalty: PenaltyParams::new(lambda, self.a)?,
            outer_tol: self.outer_tol,
            max_outer_iters: self.max_outer_iters,
            nr_tol: self.nr_tol,
            nr_max_iters: self.nr_max_iters,
            zero_threshold: self.zero_threshold,
        };
        cfg.check()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// Override the default selector (SIC for corrected methods, RCP for naive).
    #[arg(long, value_enum)]
    pub selector: Option<Selector>,
    /// Explicit comma-separated λ grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    pub grid_size: usize,
    /// Smallest grid value as a fraction of the largest.
    #[arg(long, default_value_t = 0.01)]
    pub grid_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rcp_alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p: usize,
    /// Number of edges; defaults to 3p.
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub max_parents: usize,
    #[arg(long, default_value_t = 50)]
    pub n_per_node: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value = "diagonal")]
    pub structure: Structure,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// `per-node` gives every node reliability tau; `mean` uses one variance from the mean column variance.
    #[arg(long, default_value = "per-node")]
    pub calibration: Calibration,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One line per data row: a node label or `obs`. Without it all rows are observational.
    #[arg(long)]
    pub interventions: Option<PathBuf>,
    /// Measurement-error covariance CSV; required by the corrected methods.
    #[arg(long)]
    pub sigma_u: Option<PathBuf>,
    #[arg(long, default_value = "pcd-corrected")]
    pub method: Method,
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaArg,
    /// Output directory for fit.json, edges.txt and (with lambda=auto) sweep.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// True coefficient matrix CSV.
    #[arg(long = "truth")]
    pub truth: PathBuf,
    /// Estimated coefficients: a p×p CSV or a fit JSON.
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long, default_value_t = ZERO_THRESHOLD)]
    pub threshold: f64,
    /// Count ordered absent pairs in the correctness rate (can exceed 1).
    #[arg(long)]
    pub literal_correctness: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplicateArgs {
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub graphs: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.85,0.9,0.95,1.0")]
    pub tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "diagonal,ar")]
    pub structures: Vec<Structure>,
    /// Comma-separated methods or `all`.
    #[arg(long, default_value = "all")]
    pub methods: String,
    /// Edges per node in the random graphs.
    #[arg(long, default_value_t = 3)]
    pub edges_per_node: usize,
    #[arg(long, default_value_t = 4)]
    pub max_parents: usize,
    #[arg(long, default_value_t = 50)]
    pub n_per_node: usize,
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub literal_correctness: bool,
    #[arg(long, default_value = "per-node")]
    pub calibration: Calibration,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

fn exit_code(e: &CsbnError) -> i32 {
    match e {
        CsbnError::InvalidArgument(_) => EXIT_USAGE,
        CsbnError::Validation(_) | CsbnError::Parse(_) | CsbnError::Io(_) => EXIT_DATA,
        CsbnError::Numerical { .. } => EXIT_NUMERICAL,
    }
}

fn config_value_to_arg(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(a) => Some(a.iter().filter_map(config_value_to_arg).collect::<Vec<_>>().join(",")),
        _ => None,
    }
}

/// Turns a JSON object into `--key value` pairs for `sub`. Keys may be given
/// at the top level or under an object named after the subcommand.
fn config_args(cfg: &Value, sub: &str) -> std::result::Result<Vec<String>, String> {
    let obj = cfg.as_object().ok_or("config file must hold a JSON object")?;
    let scoped = obj.get(sub).and_then(Value::as_object);
    let subcommands = ["simulate", "estimate", "evaluate", "replicate"];
    let mut out = Vec::new();
    let mut emit = |k: &str, v: &Value| -> std::result::Result<(), String> {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            other => {
                let s = config_value_to_arg(other).ok_or(format!("config key '{k}' has an unsupported value"))?;
                out.push(format!("{flag}={s}"));
            }
        }
        Ok(())
    };
    for (k, v) in obj {
        if subcommands.contains(&k.as_str()) || k == "config" {
            continue;
        }
        emit(k, v)?;
    }
    if let Some(s) = scoped {
        for (k, v) in s {
            emit(k, v)?;
        }
    }
    Ok(out)
}

/// Expands `--config` into flags placed before the user's own flags.
fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (k, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(k + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub_pos) = strs.iter().position(|a| ["simulate", "estimate", "evaluate", "replicate"].contains(&a.as_str())) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let cfg: Value = serde_json::from_str(&text).map_err(|e| format!("config {path} is not valid JSON: {e}"))?;
    let extra = config_args(&cfg, &strs[sub_pos])?;
    let mut out: Vec<OsString> = args[..=sub_pos].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend_from_slice(&args[sub_pos + 1..]);
    Ok(out)
}

/// Parses and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => with_jobs(a.jobs, || cmd_estimate(&a)),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Replicate(a) => with_jobs(a.jobs, || cmd_replicate(&a)),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(0) => Err(CsbnError::invalid("--jobs must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CsbnError::invalid(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CsbnError::Io(format!("{}: {e}", dir.display())))
}

/// Simulated bundle, before being written to disk.
pub struct Simulation {
    pub net: simgen::TrueNetwork,
    pub x: nalgebra::DMatrix<f64>,
    pub contaminated: simgen::Contaminated,
    pub intervened: Vec<Option<usize>>,
}

impl SimulateArgs {
    /// Explicit `--edges`, else 3p capped at what the parent limit allows.
    pub fn n_edges(&self) -> usize {
        self.edges.unwrap_or_else(|| (3 * self.p).min(simgen::max_edges(self.p, self.max_parents)))
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<Simulation> {
    let edges = a.n_edges();
    let net = simgen::random_dag(a.p, edges, a.max_parents, derive_seed(a.seed, stream::GRAPH))?;
    let (x, intervened) = simgen::gen_data(&net, a.n_per_node, derive_seed(a.seed, stream::DATA))?;
    let mut spec = ContaminationSpec::new(a.structure, a.tau)?.with_calibration(a.calibration);
    spec.rho = a.rho;
    let contaminated = simgen::contaminate(&x, &spec, derive_seed(a.seed, stream::NOISE))?;
    Ok(Simulation {
        net,
        x,
        contaminated,
        intervened,
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let sim = simulate(a)?;
    ensure_dir(&a.out)?;
    let p = a.p;
    let header: Vec<String> = (1..=p).map(|k| format!("X{k}")).collect();
    io::write(&a.out.join("data.csv"), &io::format_matrix_csv(&sim.contaminated.w, Some(&header)))?;
    io::write(&a.out.join("interventions.txt"), &io::format_interventions(&sim.intervened))?;
    io::write(&a.out.join("b_true.csv"), &io::format_matrix_csv(sim.net.b_star.as_matrix(), None))?;
    io::write(&a.out.join("sigma_u.csv"), &io::format_matrix_csv(sim.contaminated.es.as_matrix(), None))?;
    let manifest = json!({
        "seed": a.seed,
        "p": p,
        "edges": a.n_edges(),
        "max_parents": a.max_parents,
        "n_per_node": a.n_per_node,
        "n_rows": sim.x.nrows(),
        "tau": a.tau,
        "structure": a.structure.as_str(),
        "rho": a.rho,
        "calibration": a.calibration.as_str(),
        "error_variances": sim.contaminated.error_variances,
        "realized_tau": sim.contaminated.realized_tau,
        "order": sim.net.order.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "files": ["data.csv", "interventions.txt", "b_true.csv", "sigma_u.csv", "manifest.json"],
    });
    io::write(
        &a.out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest).map_err(|e| CsbnError::Io(e.to_string()))? + "\n"),
    )
}

/// Fit with a fixed or automatically selected λ. Returns the fit and, when
/// λ was selected, the sweep CSV text.
pub fn fit_with_lambda(
    ds: &DataSet,
    es: Option<&ErrorSpec>,
    method: Method,
    lambda: LambdaArg,
    solver: &SolverArgs,
    tuning: &TuningArgs,
) -> Result<(FitResult, Option<String>)> {
    match lambda {
        LambdaArg::Value(l) => Ok((fit(method, ds, es, &solver.config(l)?)?, None)),
        LambdaArg::Auto => {
            let grid = match &tuning.grid {
                Some(g) => LambdaGrid::from_unsorted(g.clone())?,
                None => LambdaGrid::log_spaced(
                    crate::tuning::lambda_max(ds, es, method)?,
                    tuning.grid_ratio,
                    tuning.grid_size,
                )?,
            };
            let base = solver.config(grid.values()[0])?;
            let selector = tuning.selector.unwrap_or(if method.is_corrected() { Selector::Sic } else { Selector::Rcp });
            let (sel, name) = match selector {
                Selector::Sic => {
                    let es = es.ok_or_else(|| CsbnError::invalid("SIC selection needs --sigma-u"))?;
                    let m = if method.is_corrected() { method } else {
                        return Err(CsbnError::invalid("SIC selection applies to corrected methods only"));
                    };
                    (select_lambda_sic(ds, es, &grid, m, &base)?, "sic")
                }
                Selector::Rcp => {
                    if method != Method::PcdNaive {
                        return Err(CsbnError::invalid("RCP selection applies to the naive method only"));
                    }
                    (select_lambda_rcp(ds, &grid, RcpParams::new(tuning.rcp_alpha)?, &base)?, "pe")
                }
            };
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, name, &sel.points)?;
            if sel.uninformative {
                eprintln!("warning: RCP found no informative change; using the smallest lambda");
            }
            Ok((sel.fit, Some(String::from_utf8(buf).expect("csv is utf-8"))))
        }
    }
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let ds = io::read_dataset(&a.data, a.interventions.as_deref())?;
    let es = match (&a.sigma_u, a.method.is_corrected()) {
        (Some(path), true) => Some(io::read_error_spec(path)?),
        (None, true) => {
            return Err(CsbnError::invalid(format!("--sigma-u is required for method {}", a.method)));
        }
        (Some(_), false) => {
            eprintln!("warning: --sigma-u is ignored by the naive method");
            None
        }
        (None, false) => None,
    };
    if let Some(es) = &es {
        if es.p() != ds.n_nodes() {
            return Err(CsbnError::Validation(format!(
                "sigma_u is {}x{} but data has {} columns",
                es.p(),
                es.p(),
                ds.n_nodes()
            )));
        }
    }
    let (fit, sweep) = fit_with_lambda(&ds, es.as_ref(), a.method, a.lambda, &a.solver, &a.tuning)?;
    let g = graph_from_coefs(&fit.b_hat, a.solver.zero_threshold);
    if !is_dag(&g) {
        return Err(CsbnError::numerical(0, "internal error: estimated graph is cyclic"));
    }
    ensure_dir(&a.out)?;
    io::write(&a.out.join("fit.json"), &(FitReport::from(&fit).to_json()? + "\n"))?;
    io::write(&a.out.join("edges.txt"), &g.to_edge_list())?;
    if let Some(s) = sweep {
        io::write(&a.out.join("sweep.csv"), &s)?;
    }
    Ok(())
}

fn read_estimate(path: &Path) -> Result<CoefMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| CsbnError::Io(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let rep: FitReport = serde_json::from_str(&text).map_err(|e| CsbnError::Parse(e.to_string()))?;
        rep.coefs()
    } else {
        CoefMatrix::new(io::parse_matrix_csv(&text, false)?)
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let truth = io::read_coefs(&a.truth)?;
    let est = read_estimate(&a.estimate)?;
    let rule = if a.literal_correctness { CorrectnessRule::Literal } else { CorrectnessRule::Bounded };
    let e = evaluate_coefs(&est, &truth, a.threshold, rule)?;
    println!("{}", serde_json::to_string(&e).map_err(|e| CsbnError::Io(e.to_string()))?);
    Ok(())
}

/// One result row of the replication study.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub p: usize,
    pub graph: usize,
    pub tau: f64,
    pub structure: Structure,
    pub method: Method,
    pub lambda: Option<f64>,
    pub status: String,
    pub eval: Option<GraphEval>,
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = s.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Runs the factorial study and returns rows sorted by (p, graph, τ, structure, method).
pub fn replicate(a: &ReplicateArgs) -> Result<Vec<ReplicateRow>> {
    let methods = parse_methods(&a.methods)?;
    for &t in &a.tau {
        ContaminationSpec::new(Structure::Diagonal, t)?;
    }
    if a.graphs == 0 {
        return Err(CsbnError::invalid("--graphs must be >= 1"));
    }
    let rule = if a.literal_correctness { CorrectnessRule::Literal } else { CorrectnessRule::Bounded };
    let mut graphs = Vec::new();
    for &p in &a.p {
        for g in 0..a.graphs {
            graphs.push((p, g));
        }
    }
    let per_graph: Vec<Vec<ReplicateRow>> = graphs
        .par_iter()
        .map(|&(p, g)| {
            let gseed = derive_seed(derive_seed(a.seed, p as u64), g as u64);
            let setup = simgen::random_dag(p, a.edges_per_node * p, a.max_parents, derive_seed(gseed, stream::GRAPH))
                .and_then(|net| {
                    let (x, iv) = simgen::gen_data(&net, a.n_per_node, derive_seed(gseed, stream::DATA))?;
                    Ok((net, x, iv))
                });
            let mut cells = Vec::new();
            for (ti, &tau) in a.tau.iter().enumerate() {
                for &structure in &a.structures {
                    for &method in &methods {
                        cells.push((ti, tau, structure, method));
                    }
                }
            }
            cells
                .par_iter()
                .map(|&(ti, tau, structure, method)| {
                    let row = |lambda, status: String, eval| ReplicateRow {
                        p,
                        graph: g,
                        tau,
                        structure,
                        method,
                        lambda,
                        status,
                        eval,
                    };
                    let (net, x, iv) = match &setup {
                        Ok(s) => s,
                        Err(e) => return row(None, format!("error: {e}"), None),
                    };
                    let nseed = derive_seed(derive_seed(gseed, stream::NOISE), (ti as u64) << 8 | structure as u64);
                    let out = (|| {
                        let spec = ContaminationSpec::new(structure, tau)?.with_calibration(a.calibration);
                        let c = simgen::contaminate(x, &spec, nseed)?;
                        let ds = DataSet::new(c.w, iv.clone())?;
                        let (f, _) = fit_with_lambda(&ds, Some(&c.es), method, a.lambda, &a.solver, &a.tuning)?;
                        let e = evaluate_coefs(&f.b_hat, &net.b_star, a.solver.zero_threshold, rule)?;
                        Ok::<_, CsbnError>((f.lambda, e))
                    })();
                    match out {
                        Ok((l, e)) => row(Some(l), "ok".into(), Some(e)),
                        Err(e) => row(None, format!("error: {e}"), None),
                    }
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<ReplicateRow> = per_graph.into_iter().flatten().collect();
    rows.sort_by(|x, y| {
        (x.p, x.graph)
            .cmp(&(y.p, y.graph))
            .then(x.tau.total_cmp(&y.tau))
            .then(x.structure.cmp(&y.structure))
            .then(x.method.cmp(&y.method))
    });
    Ok(rows)
}

/// Per-cell aggregate over graphs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub p: usize,
    pub tau: f64,
    pub structure: Structure,
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub tpr_mean: f64,
    pub fdr_mean: f64,
    pub specificity_mean: f64,
    pub correctness_mean: f64,
    pub frob_mean: f64,
    pub frob_median: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn summarize(rows: &[ReplicateRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, f64, Structure, Method)> = Vec::new();
    for r in rows {
        let k = (r.p, r.tau, r.structure, r.method);
        if !keys.iter().any(|q| q.0 == k.0 && q.1 == k.1 && q.2 == k.2 && q.3 == k.3) {
            keys.push(k);
        }
    }
    keys.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)).then(x.3.cmp(&y.3)));
    keys.into_iter()
        .map(|(p, tau, structure, method)| {
            let cell: Vec<&ReplicateRow> = rows
                .iter()
                .filter(|r| r.p == p && r.tau == tau && r.structure == structure && r.method == method)
                .collect();
            let evals: Vec<&GraphEval> = cell.iter().filter_map(|r| r.eval.as_ref()).collect();
            let mean = |f: &dyn Fn(&GraphEval) -> f64| {
                if evals.is_empty() {
                    f64::NAN
                } else {
                    evals.iter().map(|e| f(e)).sum::<f64>() / evals.len() as f64
                }
            };
            SummaryRow {
                p,
                tau,
                structure,
                method,
                n_ok: evals.len(),
                n_failed: cell.len() - evals.len(),
                tpr_mean: mean(&|e| e.tpr),
                fdr_mean: mean(&|e| e.fdr),
                specificity_mean: mean(&|e| e.specificity),
                correctness_mean: mean(&|e| e.correctness),
                frob_mean: mean(&|e| e.frob_scaled.unwrap_or(f64::NAN)),
                frob_median: median(evals.iter().filter_map(|e| e.frob_scaled).collect()),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.10}")).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[ReplicateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CsbnError::Io(e.to_string());
    w.write_record([
        "p", "graph", "tau", "structure", "method", "lambda", "status", "tpr", "fdr", "specificity", "correctness",
        "frob_scaled", "estimated_edges",
    ])
    .map_err(err)?;
    for r in rows {
        let e = r.eval.as_ref();
        w.write_record([
            r.p.to_string(),
            (r.graph + 1).to_string(),
            r.tau.to_string(),
            r.structure.to_string(),
            r.method.to_string(),
            fmt_opt(r.lambda),
            r.status.clone(),
            fmt_opt(e.map(|e| e.tpr)),
            fmt_opt(e.map(|e| e.fdr)),
            fmt_opt(e.map(|e| e.specificity)),
            fmt_opt(e.map(|e| e.correctness)),
            fmt_opt(e.and_then(|e| e.frob_scaled)),
            e.map(|e| e.estimated_edges.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| CsbnError::Io(e.to_string()))?).map_err(|e| CsbnError::Io(e.to_string()))
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CsbnError::Io(e.to_string());
    w.write_record([
        "p", "tau", "structure", "method", "n_ok", "n_failed", "tpr_mean", "fdr_mean", "specificity_mean",
        "correctness_mean", "frob_mean", "frob_median",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.p.to_string(),
            r.tau.to_string(),
            r.structure.to_string(),
            r.method.to_string(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            format!("{:.10}", r.tpr_mean),
            format!("{:.10}", r.fdr_mean),
            format!("{:.10}", r.specificity_mean),
            format!("{:.10}", r.correctness_mean),
            format!("{:.10}", r.frob_mean),
            format!("{:.10}", r.frob_median),
        ])
        .map_err(err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| CsbnError::Io(e.to_string()))?).map_err(|e| CsbnError::Io(e.to_string()))
}

pub fn cmd_replicate(a: &ReplicateArgs) -> Result<()> {
    let rows = replicate(a)?;
    ensure_dir(&a.out)?;
    io::write(&a.out.join("metrics.csv"), &rows_to_csv(&rows)?)?;
    io::write(&a.out.join("summary.csv"), &summary_to_csv(&summarize(&rows))?)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    eprintln!("{} rows written ({} failed)", rows.len(), failed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_arg_parsing() {
        assert_eq!("auto".parse::<LambdaArg>().unwrap(), LambdaArg::Auto);
        assert_eq!("0.25".parse::<LambdaArg>().unwrap(), LambdaArg::Value(0.25));
        assert!("-1".parse::<LambdaArg>().is_err());
        assert!("x".parse::<LambdaArg>().is_err());
    }

    #[test]
    fn config_scoping() {
        let cfg: Value = serde_json::from_str(
            r#"{"seed": 3, "estimate": {"method": "nps"}, "replicate": {"tau": [0.8, 1.0], "literal_correctness": true}}"#,
        )
        .unwrap();
        assert_eq!(config_args(&cfg, "estimate").unwrap(), vec!["--seed=3", "--method=nps"]);
        assert_eq!(
            config_args(&cfg, "replicate").unwrap(),
            vec!["--seed=3", "--literal-correctness", "--tau=0.8,1.0"]
        );
    }

    #[test]
    fn methods_list() {
        assert_eq!(parse_methods("all").unwrap().len(), 3);
        assert_eq!(parse_methods("nps,nps").unwrap(), vec![Method::Nps]);
        assert!(parse_methods("lasso").is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
