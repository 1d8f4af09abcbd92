//! Penalized DAG estimators sharing one outer loop:
//!
//! 1. unpenalized initial estimate per node;
//! 2. a penalized sweep (pairwise coordinate descent or node-wise score
//!    equations) giving a possibly cyclic coefficient matrix;
//! 3. sandwich p-values for the parents implied by that matrix;
//! 4. Kahn elimination of cycles, zeroing the removed coefficients;
//! 5. repeat until the sup-norm change drops below the outer tolerance.

pub mod nps;
pub mod pcd_corrected;
pub mod pcd_naive;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dag::{graph_from_coefs, kahn_eliminate, EdgeWeakness, WeaknessMap};
use crate::error::{CsbnError, Result};
use crate::model::{CoefMatrix, DataSet, ErrorSpec, PenaltyParams, ZERO_THRESHOLD};
use crate::score::ScoreContext;

pub use nps::{solve_node as nps_solve_node, NodeSolve};
pub use pcd_corrected::{CorrectedPairSide, NrTerms};
pub use pcd_naive::{naive_coordinate_min, real_cubic_roots, NaiveCandidate, NaiveCoordinate, NaiveSolution, Regime};

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "pcd-corrected")]
    PcdCorrected,
    #[serde(rename = "pcd-naive")]
    PcdNaive,
    #[serde(rename = "nps")]
    Nps,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PcdNaive, Method::PcdCorrected, Method::Nps];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::PcdCorrected => "pcd-corrected",
            Method::PcdNaive => "pcd-naive",
            Method::Nps => "nps",
        }
    }

    /// Whether the method uses the measurement-error covariance.
    pub fn is_corrected(self) -> bool {
        !matches!(self, Method::PcdNaive)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CsbnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcd-corrected" => Ok(Method::PcdCorrected),
            "pcd-naive" => Ok(Method::PcdNaive),
            "nps" => Ok(Method::Nps),
            other => Err(CsbnError::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Tolerances and caps for the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub penalty: PenaltyParams,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub nr_tol: f64,
    pub nr_max_iters: usize,
    pub zero_threshold: f64,
}

impl EstimatorConfig {
    pub fn new(penalty: PenaltyParams) -> Self {
        EstimatorConfig {
            penalty,
            outer_tol: 1e-4,
            max_outer_iters: 100,
            nr_tol: 1e-8,
            nr_max_iters: 50,
            zero_threshold: ZERO_THRESHOLD,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut c = *self;
        c.penalty = PenaltyParams::new(lambda, self.penalty.a)?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        PenaltyParams::new(self.penalty.lambda, self.penalty.a)?;
        for (name, v) in [
            ("outer_tol", self.outer_tol),
            ("nr_tol", self.nr_tol),
            ("zero_threshold", self.zero_threshold),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CsbnError::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_outer_iters < 1 || self.nr_max_iters < 1 {
            return Err(CsbnError::invalid("iteration caps must be >= 1"));
        }
        Ok(())
    }
}

/// Counters and traces collected during a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change at the last outer iteration.
    pub final_change: f64,
    /// Edges removed by cycle elimination, one list per outer iteration.
    pub removed_per_iteration: Vec<Vec<(usize, usize)>>,
    /// Corrected Gram matrices that needed an eigenvalue floor.
    pub ridge_rescues: usize,
    /// Newton–Raphson solves that diverged and kept their previous value.
    pub nr_fallbacks: usize,
    /// Naive coordinate updates where no nonzero regime had a feasible root.
    pub infeasible_updates: usize,
    /// Sandwich variances that were not positive (p-value forced to 1).
    pub degenerate_pvalues: usize,
}

/// p-value attached to an edge of the swept graph in the last iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePValue {
    pub from: usize,
    pub to: usize,
    pub p_value: f64,
}

/// Estimated DAG-inducing coefficient matrix and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub lambda: f64,
    pub b_hat: CoefMatrix,
    /// Topological order from the final cycle elimination.
    pub order: Vec<usize>,
    /// Edges removed by the final cycle elimination.
    pub removed_edges: Vec<(usize, usize)>,
    pub edge_pvalues: Vec<EdgePValue>,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn graph(&self, threshold: f64) -> crate::dag::DirectedGraph {
        graph_from_coefs(&self.b_hat, threshold)
    }
}

/// Per-method hooks driven by [`run_outer`].
trait Sweeper {
    fn initial(&mut self, diag: &mut Diagnostics) -> Result<CoefMatrix>;
    fn sweep(&mut self, b: &CoefMatrix, diag: &mut Diagnostics) -> Result<CoefMatrix>;
    /// Contexts used for the sandwich p-values.
    fn pvalue_contexts(&self) -> &[ScoreContext];
}

fn edge_weakness(
    ctxs: &[ScoreContext],
    b: &CoefMatrix,
    threshold: f64,
    diag: &mut Diagnostics,
) -> Result<WeaknessMap> {
    let g = graph_from_coefs(b, threshold);
    let mut map = WeaknessMap::new();
    for (j, ctx) in ctxs.iter().enumerate() {
        let parents = g.parents(j);
        if parents.is_empty() {
            continue;
        }
        let tests = ctx.sandwich_pvalues(&parents)?;
        for t in tests {
            if t.degenerate {
                diag.degenerate_pvalues += 1;
            }
            map.insert((t.node, j), EdgeWeakness::new(t.p_value, b.get(t.node, j).abs()));
        }
    }
    Ok(map)
}

fn zero_small(b: &mut CoefMatrix, threshold: f64) {
    let p = b.p();
    for i in 0..p {
        for j in 0..p {
            if i != j && b.get(i, j).abs() <= threshold {
                b.set(i, j, 0.0);
            }
        }
    }
}

fn with_iteration(e: CsbnError, it: usize) -> CsbnError {
    match e {
        CsbnError::Numerical { node, detail } => CsbnError::Numerical {
            node,
            detail: format!("{detail} (outer iteration {it})"),
        },
        other => other,
    }
}

fn run_outer<S: Sweeper>(method: Method, cfg: &EstimatorConfig, sweeper: &mut S) -> Result<FitResult> {
    cfg.check()?;
    let mut diag = Diagnostics::default();
    let mut b = sweeper.initial(&mut diag).map_err(|e| with_iteration(e, 0))?;
    let mut order = Vec::new();
    let mut removed = Vec::new();
    let mut pvals = Vec::new();

    for it in 1..=cfg.max_outer_iters {
        let mut next = sweeper.sweep(&b, &mut diag).map_err(|e| with_iteration(e, it))?;
        zero_small(&mut next, cfg.zero_threshold);

        let weak = edge_weakness(sweeper.pvalue_contexts(), &next, cfg.zero_threshold, &mut diag)
            .map_err(|e| with_iteration(e, it))?;
        let g = graph_from_coefs(&next, cfg.zero_threshold);
        let topo = kahn_eliminate(&g, &weak);
        for &(i, j) in &topo.removed_edges {
            next.set(i, j, 0.0);
        }

        let change = next.max_abs_diff(&b);
        diag.iterations = it;
        diag.final_change = change;
        diag.removed_per_iteration.push(topo.removed_edges.clone());
        order = topo.order;
        removed = topo.removed_edges;
        pvals = weak
            .iter()
            .map(|(&(from, to), w)| EdgePValue {
                from,
                to,
                p_value: w.p_value,
            })
            .collect();
        b = next;
        if change <= cfg.outer_tol {
            diag.converged = true;
            break;
        }
    }

    Ok(FitResult {
        method,
        lambda: cfg.penalty.lambda,
        b_hat: b,
        order,
        removed_edges: removed,
        edge_pvalues: pvals,
        diagnostics: diag,
    })
}

fn contexts(ds: &DataSet, es: &ErrorSpec) -> Result<Vec<ScoreContext>> {
    (0..ds.n_nodes()).map(|j| ScoreContext::new(ds, es, j)).collect()
}

/// Full-support corrected least squares for every node.
fn initial_corrected(ctxs: &[ScoreContext], diag: &mut Diagnostics) -> Result<CoefMatrix> {
    let p = ctxs.len();
    let mut b = CoefMatrix::zeros(p);
    for (j, ctx) in ctxs.iter().enumerate() {
        let support: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let sol = ctx.corrected_ls(&support)?;
        if sol.rescued {
            diag.ridge_rescues += 1;
        }
        for (&i, &c) in sol.support.iter().zip(&sol.coef) {
            b.set(i, j, c);
        }
    }
    Ok(b)
}

fn check_inputs(ds: &DataSet, es: Option<&ErrorSpec>) -> Result<()> {
    ds.validate().map_err(|v| CsbnError::Validation(v.to_string()))?;
    if let Some(es) = es {
        if es.p() != ds.n_nodes() {
            return Err(CsbnError::invalid(format!(
                "measurement-error covariance is {}x{} but data has {} nodes",
                es.p(),
                es.p(),
                ds.n_nodes()
            )));
        }
    }
    Ok(())
}

/// Corrected-score objective minimised by pairwise coordinate descent.
pub fn fit_pcd_corrected(ds: &DataSet, es: &ErrorSpec, cfg: &EstimatorConfig) -> Result<FitResult> {
    check_inputs(ds, Some(es))?;
    let mut s = pcd_corrected::Sweep::new(contexts(ds, es)?, *cfg);
    run_outer(Method::PcdCorrected, cfg, &mut s)
}

/// Naive penalized log-likelihood minimised by pairwise coordinate descent.
pub fn fit_pcd_naive(ds: &DataSet, cfg: &EstimatorConfig) -> Result<FitResult> {
    check_inputs(ds, None)?;
    let zero = ErrorSpec::zeros(ds.n_nodes());
    let mut s = pcd_naive::Sweep::new(contexts(ds, &zero)?, *cfg);
    run_outer(Method::PcdNaive, cfg, &mut s)
}

/// Node-wise penalized corrected score equations.
pub fn fit_nps(ds: &DataSet, es: &ErrorSpec, cfg: &EstimatorConfig) -> Result<FitResult> {
    check_inputs(ds, Some(es))?;
    let mut s = nps::Sweep::new(contexts(ds, es)?, *cfg);
    run_outer(Method::Nps, cfg, &mut s)
}

/// Dispatches on `method`. The naive method ignores `es`; the corrected
/// methods require it.
pub fn fit(method: Method, ds: &DataSet, es: Option<&ErrorSpec>, cfg: &EstimatorConfig) -> Result<FitResult> {
    match method {
        Method::PcdNaive => fit_pcd_naive(ds, cfg),
        Method::PcdCorrected | Method::Nps => {
            let es = es.ok_or_else(|| {
                CsbnError::invalid(format!("method {method} needs a measurement-error covariance"))
            })?;
            if method == Method::Nps {
                fit_nps(ds, es, cfg)
            } else {
                fit_pcd_corrected(ds, es, cfg)
            }
        }
    }
}
