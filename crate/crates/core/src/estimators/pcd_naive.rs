//! Pairwise coordinate descent on the naive objective
//! (n_{-j}/2)·log RSS_j(b) + Σ P_λ(|b_ij|), which ignores measurement error.
//!
//! One coordinate update minimises
//!
//! ```text
//! f(β) = (n/2)·log(Sxx β² − 2 Sxr β + Srr) + P_λ(|β|)
//! ```
//!
//! where r is the partial residual without the moving term. Setting f′ = 0 on
//! each SCAD branch gives a linear, quadratic or cubic equation in β; the
//! minimiser is the best feasible root or zero.

use nalgebra::DVector;

use super::{Diagnostics, EstimatorConfig, Sweeper};
use crate::error::{CsbnError, Result};
use crate::model::{CoefMatrix, PenaltyParams};
use crate::penalty::scad_abs;
use crate::score::ScoreContext;

/// SCAD branch a stationary point was found on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Zero,
    /// |β| ≤ λ.
    Quadratic,
    /// λ < |β| ≤ aλ.
    Cubic,
    /// |β| ≥ aλ.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveCandidate {
    pub beta: f64,
    pub regime: Regime,
    pub objective: f64,
}

/// Sufficient statistics of one coordinate problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveCoordinate {
    pub n: f64,
    pub sxx: f64,
    pub sxr: f64,
    pub srr: f64,
}

impl NaiveCoordinate {
    pub fn from_vectors(x: &[f64], r: &[f64]) -> Self {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        NaiveCoordinate {
            n: x.len() as f64,
            sxx: dot(x, x),
            sxr: dot(x, r),
            srr: dot(r, r),
        }
    }

    pub fn rss(&self, beta: f64) -> f64 {
        self.sxx * beta * beta - 2.0 * self.sxr * beta + self.srr
    }

    pub fn objective(&self, beta: f64, pp: PenaltyParams) -> f64 {
        let rss = self.rss(beta);
        if rss > 0.0 {
            0.5 * self.n * rss.ln() + scad_abs(beta, pp)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Quadratic-branch coefficients (c2, c1, c0) for assumed sign `s`.
    pub fn quadratic_coefs(&self, s: f64, lambda: f64) -> [f64; 3] {
        let Self { n, sxx, sxr, srr } = *self;
        [s * lambda * sxx, n * sxx - 2.0 * s * lambda * sxr, s * lambda * srr - n * sxr]
    }

    /// Cubic-branch coefficients (c3, c2, c1, c0) for assumed sign `s`.
    pub fn cubic_coefs(&self, s: f64, pp: PenaltyParams) -> [f64; 4] {
        let Self { n, sxx, sxr, srr } = *self;
        let (l, a) = (pp.lambda, pp.a);
        let am1 = a - 1.0;
        [
            -sxx / am1,
            (2.0 * sxr + s * a * l * sxx) / am1,
            n * sxx - (srr + 2.0 * s * a * l * sxr) / am1,
            s * a * l * srr / am1 - n * sxr,
        ]
    }

    /// Left side of n·Σ(r − xβ)x − sign(β)·P′_λ(|β|)·RSS(β) = 0.
    pub fn stationarity_residual(&self, beta: f64, pp: PenaltyParams) -> f64 {
        let grad_ll = self.n * (self.sxr - self.sxx * beta);
        grad_ll - crate::penalty::scad_d1(beta, pp) * self.rss(beta)
    }
}

/// All feasible stationary points plus zero, and the minimiser among them.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveSolution {
    pub best: NaiveCandidate,
    pub candidates: Vec<NaiveCandidate>,
}

impl NaiveSolution {
    /// True when only β = 0 was available.
    pub fn infeasible(&self) -> bool {
        self.candidates.len() == 1
    }
}

fn polish(coefs: &[f64], mut x: f64) -> f64 {
    // two Newton steps on the polynomial, highest degree first
    for _ in 0..2 {
        let (mut f, mut df) = (0.0, 0.0);
        for &c in coefs {
            df = df * x + f;
            f = f * x + c;
        }
        if df != 0.0 && df.is_finite() {
            let nx = x - f / df;
            if nx.is_finite() {
                x = nx;
            }
        }
    }
    x
}

/// Real roots of c3·t³ + c2·t² + c1·t + c0, by the trigonometric or Cardano
/// formula. Degenerates to lower degree when leading coefficients vanish.
pub fn real_cubic_roots(c: [f64; 4]) -> Vec<f64> {
    let [c3, c2, c1, c0] = c;
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    if c3.abs() <= 1e-14 * scale {
        return real_quadratic_roots([c2, c1, c0]);
    }
    let (a, b, cc) = (c2 / c3, c1 / c3, c0 / c3);
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + cc;
    let shift = -a / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let roots: Vec<f64> = if p == 0.0 {
        vec![(-q).cbrt() + shift]
    } else if disc > 0.0 {
        let sd = disc.sqrt();
        vec![(-q / 2.0 + sd).cbrt() + (-q / 2.0 - sd).cbrt() + shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect()
    };
    roots.into_iter().map(|r| polish(&c, r)).collect()
}

fn real_quadratic_roots(c: [f64; 3]) -> Vec<f64> {
    let [c2, c1, c0] = c;
    if c2 == 0.0 {
        return if c1 != 0.0 { vec![-c0 / c1] } else { Vec::new() };
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    let sd = disc.sqrt();
    // numerically stable pair
    let qv = -0.5 * (c1 + c1.signum() * sd);
    let mut out = Vec::new();
    if qv != 0.0 {
        out.push(qv / c2);
        out.push(c0 / qv);
    } else {
        out.push(-c1 / (2.0 * c2));
    }
    out.into_iter().map(|r| polish(&c, r)).collect()
}

/// Exact minimiser of the one-coordinate naive objective.
pub fn naive_coordinate_min(co: &NaiveCoordinate, pp: PenaltyParams) -> NaiveSolution {
    let lam = pp.lambda;
    let mut cands = vec![NaiveCandidate {
        beta: 0.0,
        regime: Regime::Zero,
        objective: co.objective(0.0, pp),
    }];
    let push = |beta: f64, regime: Regime, cands: &mut Vec<NaiveCandidate>| {
        if beta.is_finite() && beta != 0.0 {
            cands.push(NaiveCandidate {
                beta,
                regime,
                objective: co.objective(beta, pp),
            });
        }
    };

    if co.sxx > 0.0 {
        let ls = co.sxr / co.sxx;
        if ls.abs() >= pp.a * lam {
            push(ls, Regime::Linear, &mut cands);
        }
        if lam > 0.0 {
            for s in [1.0, -1.0] {
                // the quadratic branch's local minimum is its larger-in-direction root
                let [c2, c1, c0] = co.quadratic_coefs(s, lam);
                let disc = c1 * c1 - 4.0 * c2 * c0;
                if disc >= 0.0 {
                    let root = polish(&[c2, c1, c0], (-c1 + disc.sqrt()) / (2.0 * c2));
                    if root * s > 0.0 && root.abs() <= lam {
                        push(root, Regime::Quadratic, &mut cands);
                    }
                }
                for root in real_cubic_roots(co.cubic_coefs(s, pp)) {
                    if root * s > 0.0 && root.abs() > lam && root.abs() <= pp.a * lam {
                        push(root, Regime::Cubic, &mut cands);
                    }
                }
            }
        }
    }

    let best = *cands
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("zero candidate present");
    NaiveSolution { best, candidates: cands }
}

pub(super) struct Sweep {
    ctxs: Vec<ScoreContext>,
    cfg: EstimatorConfig,
}

impl Sweep {
    pub(super) fn new(ctxs: Vec<ScoreContext>, cfg: EstimatorConfig) -> Self {
        Sweep { ctxs, cfg }
    }

    /// Coordinate problem for β_{from,to} given the current column of `to`.
    fn coordinate(&self, b: &CoefMatrix, from: usize, to: usize) -> Result<NaiveCoordinate> {
        let ctx = &self.ctxs[to];
        let pos = ctx
            .position_of(from)
            .ok_or_else(|| CsbnError::invalid(format!("{from} is not a parent slot of {to}")))?;
        let mut bj = DVector::from_vec(b.column_without_diag(to));
        bj[pos] = 0.0;
        let r = ctx.response() - ctx.covariates() * &bj;
        let x = ctx.covariates().column(pos);
        Ok(NaiveCoordinate::from_vectors(x.as_slice(), r.as_slice()))
    }
}

impl Sweeper for Sweep {
    fn initial(&mut self, diag: &mut Diagnostics) -> Result<CoefMatrix> {
        super::initial_corrected(&self.ctxs, diag)
    }

    fn sweep(&mut self, b: &CoefMatrix, diag: &mut Diagnostics) -> Result<CoefMatrix> {
        let p = b.p();
        let pp = self.cfg.penalty;
        let thr = self.cfg.zero_threshold;
        let mut cur = b.clone();
        for i in 0..p {
            for j in (i + 1)..p {
                let co_ij = self.coordinate(&cur, i, j)?;
                let co_ji = self.coordinate(&cur, j, i)?;
                let sol_ij = naive_coordinate_min(&co_ij, pp);
                let sol_ji = naive_coordinate_min(&co_ji, pp);
                diag.infeasible_updates += sol_ij.infeasible() as usize + sol_ji.infeasible() as usize;
                for (co, node) in [(&co_ij, j), (&co_ji, i)] {
                    if !(co.rss(0.0) > 0.0) {
                        return Err(CsbnError::numerical(node, "residual sum of squares is zero"));
                    }
                }
                let s1 = co_ji.objective(0.0, pp) + sol_ij.best.objective;
                let s2 = sol_ji.best.objective + co_ij.objective(0.0, pp);
                let (mut new_ij, mut new_ji) = if s1 <= s2 {
                    (sol_ij.best.beta, 0.0)
                } else {
                    (0.0, sol_ji.best.beta)
                };
                if new_ij.abs() < thr {
                    new_ij = 0.0;
                }
                if new_ji.abs() < thr {
                    new_ji = 0.0;
                }
                cur.set(i, j, new_ij);
                cur.set(j, i, new_ji);
            }
        }
        Ok(cur)
    }

    fn pvalue_contexts(&self) -> &[ScoreContext] {
        &self.ctxs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pp(l: f64) -> PenaltyParams {
        PenaltyParams::new(l, 3.7).unwrap()
    }

    #[test]
    fn cubic_roots_known_polynomials() {
        let mut r = real_cubic_roots([1.0, -6.0, 11.0, -6.0]);
        r.sort_by(f64::total_cmp);
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let r = real_cubic_roots([1.0, 0.0, 1.0, -2.0]);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
        let r = real_cubic_roots([0.0, 1.0, -3.0, 2.0]);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let co = NaiveCoordinate { n: 50.0, sxx: 10.0, sxr: 4.0, srr: 9.0 };
        let sol = naive_coordinate_min(&co, pp(0.0));
        assert!((sol.best.beta - 0.4).abs() < 1e-15);
    }

    #[test]
    fn huge_lambda_gives_zero_for_weak_signal() {
        let co = NaiveCoordinate { n: 50.0, sxx: 10.0, sxr: 0.5, srr: 9.0 };
        let sol = naive_coordinate_min(&co, pp(10.0));
        assert_eq!(sol.best.beta, 0.0);
    }

    proptest! {
        #[test]
        fn best_beats_fine_grid(sxx in 1.0f64..50.0, corr in -0.99f64..0.99, srr in 1.0f64..50.0, lam in 0.001f64..1.0) {
            let n = 40.0;
            let sxr = corr * (sxx * srr).sqrt();
            let co = NaiveCoordinate { n, sxx, sxr, srr };
            let p = pp(lam);
            let sol = naive_coordinate_min(&co, p);
            let hi = (sxr / sxx).abs() * 1.5 + 1.0;
            let steps = 4000;
            for k in 0..=steps {
                let beta = -hi + 2.0 * hi * k as f64 / steps as f64;
                prop_assert!(sol.best.objective <= co.objective(beta, p) + 1e-9);
            }
            for c in &sol.candidates {
                if c.regime != Regime::Zero {
                    let res = co.stationarity_residual(c.beta, p);
                    let scale = n * sxx.max(sxr.abs()).max(srr);
                    prop_assert!(res.abs() < 1e-9 * scale, "res={res}");
                }
            }
        }
    }
}
