//! λ selection: the score-based information criterion (SIC) for the corrected
//! methods and the relative change in prediction error (RCP) for the naive one.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::{graph_from_coefs, DirectedGraph};
use crate::error::{CsbnError, Result};
use crate::estimators::{fit, EstimatorConfig, FitResult, Method};
use crate::model::{CoefMatrix, DataSet, ErrorSpec};
use crate::score::ScoreContext;

/// Strictly decreasing positive λ values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(CsbnError::invalid("a lambda grid needs at least two values"));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(CsbnError::invalid("lambda grid values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CsbnError::invalid("lambda grid must be strictly decreasing"));
        }
        Ok(LambdaGrid(values))
    }

    /// Sorts descending and removes duplicates before validating.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        values.dedup();
        Self::new(values)
    }

    /// `len` log-spaced values from `max` down to `ratio·max`.
    pub fn log_spaced(max: f64, ratio: f64, len: usize) -> Result<Self> {
        if !(max > 0.0) || !(ratio > 0.0 && ratio < 1.0) || len < 2 {
            return Err(CsbnError::invalid(format!(
                "cannot build a log grid from max={max}, ratio={ratio}, len={len}"
            )));
        }
        let (hi, lo) = (max.ln(), (max * ratio).ln());
        let step = (hi - lo) / (len - 1) as f64;
        Self::new((0..len).map(|k| (hi - step * k as f64).exp()).collect())
    }

    /// Default 20-point grid down to 1% of [`lambda_max`].
    pub fn default_for(ds: &DataSet, es: Option<&ErrorSpec>, method: Method) -> Result<Self> {
        Self::log_spaced(lambda_max(ds, es, method)?, 0.01, 20)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Smallest λ at which every single-coordinate problem is solved by zero,
/// i.e. the largest slope of the unpenalized objective at β = 0 over all pairs.
///
/// - nps: the score n⁻¹ Σ W_i W_j
/// - pcd-naive: d/dβ (n/2)·log RSS = −n Σ W_i W_j / Σ W_j²
/// - pcd-corrected: d/dβ of the scalar V(β) = ψ̄(β)² / H(β), which needs Σ_u
pub fn lambda_max(ds: &DataSet, es: Option<&ErrorSpec>, method: Method) -> Result<f64> {
    let p = ds.n_nodes();
    let w = ds.w();
    let sigma = match (method, es) {
        (Method::PcdCorrected, Some(es)) => Some(es.as_matrix()),
        (Method::PcdCorrected, None) => {
            return Err(CsbnError::invalid("pcd-corrected needs an error covariance for its lambda scale"))
        }
        _ => None,
    };
    let mut best = 0.0f64;
    for j in 0..p {
        let rows = ds.observational_rows(j)?;
        let n = rows.len() as f64;
        let y: Vec<f64> = rows.iter().map(|&r| w[(r, j)]).collect();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        for i in (0..p).filter(|&i| i != j) {
            let x: Vec<f64> = rows.iter().map(|&r| w[(r, i)]).collect();
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let v = match method {
                Method::Nps => (sxy / n).abs(),
                Method::PcdNaive if syy > 0.0 => n * sxy.abs() / syy,
                Method::PcdNaive => 0.0,
                Method::PcdCorrected => {
                    let s = sigma.expect("checked above")[(i, i)];
                    scalar_v_slope(&x, &y, s).abs()
                }
            };
            if v.is_finite() {
                best = best.max(v);
            }
        }
    }
    if !(best > 0.0) {
        return Err(CsbnError::Validation(
            "all cross-products are zero; no lambda grid can be formed".into(),
        ));
    }
    Ok(best)
}

/// V′(0) for one covariate, with ψ_ℓ(β) = (y_ℓ − x_ℓβ)x_ℓ + σβ.
fn scalar_v_slope(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let n = x.len() as f64;
    let (mut m, mut dm, mut h, mut dh) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let psi = b * a;
        let dpsi = sigma - a * a;
        m += psi;
        dm += dpsi;
        h += psi * psi;
        dh += 2.0 * psi * dpsi;
    }
    let (m, dm, h, dh) = (m / n, dm / n, h / n, dh / n);
    if !(h > 0.0) {
        return 0.0;
    }
    2.0 * m * dm / h - m * m * dh / (h * h)
}

/// SIC per node and in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicValue {
    pub total: f64,
    pub per_node: Vec<f64>,
}

/// SIC(g) = Σ_j V̂_j + e_j·log(n_{−j})/n_{−j}, V̂_j at the corrected least
/// squares on j's parents in `g`.
pub fn sic(ds: &DataSet, es: &ErrorSpec, g: &DirectedGraph) -> Result<SicValue> {
    let p = ds.n_nodes();
    if g.p() != p {
        return Err(CsbnError::invalid(format!("graph has {} nodes, data has {p}", g.p())));
    }
    let mut per_node = Vec::with_capacity(p);
    for j in 0..p {
        let ctx = ScoreContext::new(ds, es, j)?;
        let parents = g.parents(j);
        let sol = ctx.corrected_ls(&parents)?;
        let v = ctx.v_quadratic(&ctx.expand(&sol))?;
        let n = ctx.n() as f64;
        per_node.push(v + parents.len() as f64 * n.ln() / n);
    }
    Ok(SicValue {
        total: per_node.iter().sum(),
        per_node,
    })
}

/// One grid point of a tuning sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    /// `None` when the fit at this λ failed.
    pub n_edges: Option<usize>,
    /// SIC, or prediction error for RCP sweeps.
    pub criterion: Option<f64>,
    /// RCP_{k−1,k}; absent for SIC sweeps and for the first point.
    pub rcp: Option<f64>,
    pub selected: bool,
    pub error: Option<String>,
}

/// Result of a tuning sweep.
#[derive(Debug, Clone)]
pub struct Selection {
    pub lambda: f64,
    pub index: usize,
    pub fit: FitResult,
    pub points: Vec<SweepPoint>,
    /// Set by RCP when no grid step added edges with a drop in PE.
    pub uninformative: bool,
}

fn fit_grid(
    ds: &DataSet,
    es: Option<&ErrorSpec>,
    grid: &LambdaGrid,
    method: Method,
    base: &EstimatorConfig,
) -> Vec<Result<FitResult>> {
    grid.values()
        .par_iter()
        .map(|&lam| fit(method, ds, es, &base.with_lambda(lam)?))
        .collect()
}

/// Fits every grid point and keeps the λ with the smallest SIC; ties go to
/// the larger λ. Failed grid points are skipped.
pub fn select_lambda_sic(
    ds: &DataSet,
    es: &ErrorSpec,
    grid: &LambdaGrid,
    method: Method,
    base: &EstimatorConfig,
) -> Result<Selection> {
    if !method.is_corrected() {
        return Err(CsbnError::invalid("SIC selection applies to the corrected methods"));
    }
    let fits = fit_grid(ds, Some(es), grid, method, base);
    let scored: Vec<(Option<FitResult>, std::result::Result<f64, String>)> = fits
        .into_par_iter()
        .map(|f| match f {
            Ok(f) => {
                let g = graph_from_coefs(&f.b_hat, base.zero_threshold);
                match sic(ds, es, &g) {
                    Ok(s) => (Some(f), Ok(s.total)),
                    Err(e) => (Some(f), Err(e.to_string())),
                }
            }
            Err(e) => (None, Err(e.to_string())),
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (k, (_, s)) in scored.iter().enumerate() {
        if let Ok(s) = s {
            if best.map_or(true, |(_, b)| *s < b) {
                best = Some((k, *s));
            }
        }
    }
    let (index, _) = best.ok_or_else(|| CsbnError::Numerical {
        node: 0,
        detail: "every grid point failed to fit or score".into(),
    })?;

    let mut points = Vec::with_capacity(grid.len());
    let mut chosen = None;
    for (k, ((f, s), &lam)) in scored.into_iter().zip(grid.values()).enumerate() {
        points.push(SweepPoint {
            lambda: lam,
            n_edges: f.as_ref().map(|f| f.b_hat.edges(base.zero_threshold).len()),
            criterion: s.as_ref().ok().copied(),
            rcp: None,
            selected: k == index,
            error: s.err(),
        });
        if k == index {
            chosen = f;
        }
    }
    Ok(Selection {
        lambda: grid.values()[index],
        index,
        fit: chosen.expect("selected point has a fit"),
        points,
        uninformative: false,
    })
}

/// PE = Σ_j Σ_{ℓ∈O_j} (W[ℓ,j] − W[ℓ,−j]·B̂_j)².
pub fn prediction_error(ds: &DataSet, b: &CoefMatrix) -> Result<f64> {
    let w = ds.w();
    let p = ds.n_nodes();
    let mut pe = 0.0;
    for j in 0..p {
        for r in ds.observational_rows(j)? {
            let pred: f64 = (0..p).filter(|&i| i != j).map(|i| w[(r, i)] * b.get(i, j)).sum();
            pe += (w[(r, j)] - pred).powi(2);
        }
    }
    Ok(pe)
}

/// RCP between consecutive grid points, zero when edges did not increase.
pub fn rcp_values(pe: &[f64], edges: &[usize]) -> Vec<f64> {
    pe.windows(2)
        .zip(edges.windows(2))
        .map(|(pe, e)| {
            let gain = e[1] as f64 - e[0] as f64;
            if gain > 0.0 {
                (pe[0] - pe[1]) / gain
            } else {
                0.0
            }
        })
        .collect()
}

/// Index K (into the grid) chosen by the RCP rule, and whether the rule was
/// uninformative (every RCP ≤ 0, in which case K is the last index).
pub fn rcp_choice(rcp: &[f64], alpha: f64) -> (usize, bool) {
    let max = rcp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = rcp.len() + 1;
    if !(max > 0.0) {
        return (m - 1, true);
    }
    // rcp[k-1] is RCP_{k-1,k} in grid positions
    let k = (0..rcp.len()).rev().find(|&k| rcp[k] >= alpha * max).expect("max attains threshold");
    (k + 1, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcpParams {
    pub alpha: f64,
}

impl Default for RcpParams {
    fn default() -> Self {
        RcpParams { alpha: 0.1 }
    }
}

impl RcpParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CsbnError::invalid(format!("RCP alpha must be in (0,1], got {alpha}")));
        }
        Ok(RcpParams { alpha })
    }
}

/// Naive fits along the grid, λ chosen by the RCP rule.
pub fn select_lambda_rcp(
    ds: &DataSet,
    grid: &LambdaGrid,
    params: RcpParams,
    base: &EstimatorConfig,
) -> Result<Selection> {
    RcpParams::new(params.alpha)?;
    let fits = fit_grid(ds, None, grid, Method::PcdNaive, base);
    let mut ok: Vec<(usize, FitResult, f64)> = Vec::new();
    let mut errors = vec![None; grid.len()];
    for (k, f) in fits.into_iter().enumerate() {
        match f.and_then(|f| prediction_error(ds, &f.b_hat).map(|pe| (f, pe))) {
            Ok((f, pe)) => ok.push((k, f, pe)),
            Err(e) => errors[k] = Some(e.to_string()),
        }
    }
    if ok.is_empty() {
        return Err(CsbnError::Numerical {
            node: 0,
            detail: "every grid point failed to fit".into(),
        });
    }
    let pe: Vec<f64> = ok.iter().map(|t| t.2).collect();
    let edges: Vec<usize> = ok.iter().map(|t| t.1.b_hat.edges(base.zero_threshold).len()).collect();
    let rcp = rcp_values(&pe, &edges);
    let (pos, uninformative) = rcp_choice(&rcp, params.alpha);
    let index = ok[pos].0;

    let mut points: Vec<SweepPoint> = grid
        .values()
        .iter()
        .enumerate()
        .map(|(k, &lam)| SweepPoint {
            lambda: lam,
            n_edges: None,
            criterion: None,
            rcp: None,
            selected: k == index,
            error: errors[k].clone(),
        })
        .collect();
    for (q, (k, f, pe)) in ok.iter().enumerate() {
        points[*k].n_edges = Some(f.b_hat.edges(base.zero_threshold).len());
        points[*k].criterion = Some(*pe);
        points[*k].rcp = if q > 0 { Some(rcp[q - 1]) } else { None };
    }
    let fit = ok.swap_remove(pos).1;
    Ok(Selection {
        lambda: grid.values()[index],
        index,
        fit,
        points,
        uninformative,
    })
}

/// Writes a sweep report with columns lambda, edges, criterion, rcp, selected.
pub fn write_sweep_csv<W: Write>(out: W, criterion_name: &str, points: &[SweepPoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CsbnError::Io(e.to_string());
    wtr.write_record(["lambda", "edges", criterion_name, "rcp", "selected", "error"]).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for pt in points {
        wtr.write_record([
            format!("{:.12e}", pt.lambda),
            pt.n_edges.map(|e| e.to_string()).unwrap_or_default(),
            opt(pt.criterion),
            opt(pt.rcp),
            (pt.selected as u8).to_string(),
            pt.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| CsbnError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_v_slope_matches_finite_difference() {
        let x: Vec<f64> = (0..50).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(k, a)| 0.7 * a + ((k * 13 % 7) as f64 - 3.0) * 0.2).collect();
        let sigma = 0.4;
        let v = |beta: f64| {
            let n = x.len() as f64;
            let (mut m, mut h) = (0.0, 0.0);
            for (&a, &b) in x.iter().zip(&y) {
                let psi = (b - a * beta) * a + sigma * beta;
                m += psi;
                h += psi * psi;
            }
            (m / n).powi(2) / (h / n)
        };
        let eps = 1e-6;
        let fd = (v(eps) - v(-eps)) / (2.0 * eps);
        let an = scalar_v_slope(&x, &y, sigma);
        assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
    }
    use crate::model::PenaltyParams;
    use nalgebra::DMatrix;

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::new(vec![1.0]).is_err());
        assert!(LambdaGrid::new(vec![1.0, 1.0]).is_err());
        assert!(LambdaGrid::new(vec![1.0, -0.5]).is_err());
        let g = LambdaGrid::log_spaced(2.0, 0.01, 20).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g.values()[0] - 2.0).abs() < 1e-12);
        assert!((g.values()[19] - 0.02).abs() < 1e-12);
        let g2 = LambdaGrid::from_unsorted(vec![0.1, 0.5, 0.3, 0.5]).unwrap();
        assert_eq!(g2.values(), &[0.5, 0.3, 0.1]);
    }

    #[test]
    fn rcp_two_point_example() {
        let rcp = rcp_values(&[30.0, 20.0], &[1, 3]);
        assert_eq!(rcp, vec![5.0]);
        assert_eq!(rcp_choice(&rcp, 0.1), (1, false));
    }

    #[test]
    fn rcp_constant_edges_is_uninformative() {
        let rcp = rcp_values(&[3.0, 2.0, 1.0], &[2, 2, 2]);
        assert_eq!(rcp, vec![0.0, 0.0]);
        assert_eq!(rcp_choice(&rcp, 0.1), (2, true));
    }

    #[test]
    fn rcp_picks_largest_qualifying_index() {
        // RCP = 10, 0.5, 2 → threshold 1 → positions 0 and 2 qualify, pick 2
        assert_eq!(rcp_choice(&[10.0, 0.5, 2.0], 0.1), (3, false));
    }

    fn small_data() -> DataSet {
        let w = DMatrix::from_fn(30, 3, |r, c| {
            let t = (r as f64 * 0.37 + c as f64 * 1.3).sin();
            t + if c == 1 { 0.8 * (r as f64 * 0.37).sin() } else { 0.0 }
        });
        DataSet::observational(w).unwrap()
    }

    #[test]
    fn sic_is_additive_over_nodes() {
        let ds = small_data();
        let es = ErrorSpec::diagonal(3, 0.01).unwrap();
        let g0 = DirectedGraph::new(3);
        let g1 = DirectedGraph::from_edges(3, [(0, 1)]);
        let s0 = sic(&ds, &es, &g0).unwrap();
        let s1 = sic(&ds, &es, &g1).unwrap();
        assert_eq!(s0.per_node[0], s1.per_node[0]);
        assert_eq!(s0.per_node[2], s1.per_node[2]);
        assert_ne!(s0.per_node[1], s1.per_node[1]);
        assert!((s0.total - s0.per_node.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn sic_ties_prefer_larger_lambda() {
        let ds = small_data();
        let es = ErrorSpec::zeros(3);
        let base = EstimatorConfig::new(PenaltyParams::new(1.0, 3.7).unwrap());
        // both λ far above every cross-moment: both fits are empty graphs
        let grid = LambdaGrid::new(vec![200.0, 100.0]).unwrap();
        let sel = select_lambda_sic(&ds, &es, &grid, Method::PcdCorrected, &base).unwrap();
        assert_eq!(sel.index, 0);
        assert_eq!(sel.lambda, 200.0);
    }
}
