//! Node-wise penalized corrected score equations
//!
//! ```text
//! ψ̄_j(b) − P̃(b) = 0,   P̃_k(b) = P′_λ(|b_k|)·sign(b_k)
//! ```
//!
//! solved per node by Newton–Raphson with a local quadratic approximation of
//! the penalty: b ← b + (A + D)⁻¹(ψ̄ − P̃), A = n⁻¹XᵀX − Σ_u, D_kk = P′(|b_k|)/|b_k|.
//! Coordinates that fall below the zero threshold are frozen at zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Diagnostics, EstimatorConfig, Sweeper};
use crate::error::Result;
use crate::linalg::{eigen_floor, solve_spd, submatrix};
use crate::model::CoefMatrix;
use crate::penalty::{scad_d1, scad_d1_abs};
use crate::score::ScoreContext;

const MAX_STEP: f64 = 1e6;
const MAX_HALVINGS: usize = 20;

/// Outcome of one node's penalized score solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolve {
    /// Full (p−1) coefficient vector.
    pub coef: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The iteration diverged and `coef` is the starting column.
    pub diverged: bool,
    pub rescued: bool,
}

fn residual(ctx: &ScoreContext, b: &DVector<f64>, active: &[usize], cfg: &EstimatorConfig) -> DVector<f64> {
    let psi = ctx.score_mean(b);
    DVector::from_iterator(
        active.len(),
        active.iter().map(|&k| psi[k] - scad_d1(b[k], cfg.penalty)),
    )
}

/// Solves the penalized score equations of one node from `start`.
pub fn solve_node(ctx: &ScoreContext, start: &DVector<f64>, cfg: &EstimatorConfig) -> NodeSolve {
    let n = ctx.n() as f64;
    let thr = cfg.zero_threshold;
    let mut b = start.map(|v| if v.abs() < thr { 0.0 } else { v });
    let mut active: Vec<usize> = (0..b.len()).filter(|&k| b[k] != 0.0).collect();
    let mut rescued = false;
    let mut converged = active.is_empty();
    let mut iterations = 0;

    let a_full: DMatrix<f64> = ctx.xtx() / n - ctx.sigma();
    while !converged && iterations < cfg.nr_max_iters {
        iterations += 1;
        let (a, resc) = eigen_floor(&submatrix(&a_full, &active, &active));
        rescued |= resc;
        let mut lhs = a;
        for (r, &k) in active.iter().enumerate() {
            lhs[(r, r)] += scad_d1_abs(b[k], cfg.penalty) / b[k].abs();
        }
        let f = residual(ctx, &b, &active, cfg);
        let Some(step) = solve_spd(&lhs, &f) else {
            return diverged(start, iterations, rescued);
        };
        if !step.iter().all(|v| v.is_finite()) || step.amax() > MAX_STEP {
            return diverged(start, iterations, rescued);
        }

        let f_norm = f.norm();
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = b.clone();
            for (r, &k) in active.iter().enumerate() {
                cand[k] += scale * step[r];
            }
            if residual(ctx, &cand, &active, cfg).norm() < f_norm {
                next = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        // no halving reduced the residual: take the full quadratic-approximation step
        let next = next.unwrap_or_else(|| {
            let mut cand = b.clone();
            for (r, &k) in active.iter().enumerate() {
                cand[k] += step[r];
            }
            cand
        });

        let moved = (&next - &b).amax();
        b = next;
        let before = active.len();
        active.retain(|&k| {
            if b[k].abs() < thr {
                b[k] = 0.0;
                false
            } else {
                true
            }
        });
        if active.is_empty() || (active.len() == before && moved < cfg.nr_tol * (1.0 + b.amax())) {
            converged = true;
        }
    }

    NodeSolve {
        coef: b,
        iterations,
        converged,
        diverged: false,
        rescued,
    }
}

fn diverged(start: &DVector<f64>, iterations: usize, rescued: bool) -> NodeSolve {
    NodeSolve {
        coef: start.clone(),
        iterations,
        converged: false,
        diverged: true,
        rescued,
    }
}

pub(super) struct Sweep {
    ctxs: Vec<ScoreContext>,
    cfg: EstimatorConfig,
}

impl Sweep {
    pub(super) fn new(ctxs: Vec<ScoreContext>, cfg: EstimatorConfig) -> Self {
        Sweep { ctxs, cfg }
    }
}

impl Sweeper for Sweep {
    fn initial(&mut self, diag: &mut Diagnostics) -> Result<CoefMatrix> {
        super::initial_corrected(&self.ctxs, diag)
    }

    fn sweep(&mut self, b: &CoefMatrix, diag: &mut Diagnostics) -> Result<CoefMatrix> {
        let cfg = self.cfg;
        let solves: Vec<NodeSolve> = self
            .ctxs
            .par_iter()
            .enumerate()
            .map(|(j, ctx)| solve_node(ctx, &DVector::from_vec(b.column_without_diag(j)), &cfg))
            .collect();
        let mut out = CoefMatrix::zeros(b.p());
        for (j, s) in solves.iter().enumerate() {
            diag.nr_fallbacks += s.diverged as usize;
            diag.ridge_rescues += s.rescued as usize;
            let ctx = &self.ctxs[j];
            for (k, &v) in s.coef.iter().enumerate() {
                out.set(ctx.node_at(k), j, v);
            }
        }
        Ok(out)
    }

    fn pvalue_contexts(&self) -> &[ScoreContext] {
        &self.ctxs
    }
}
