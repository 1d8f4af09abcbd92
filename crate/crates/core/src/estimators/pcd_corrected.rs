//! Pairwise coordinate descent on the corrected-score objective
//! V_j(b) + Σ P_λ(|b_ij|).
//!
//! Moving one coefficient β of node j's column makes the stacked score matrix
//! affine in β: C(β) = C₀ + βR. With G = CᵀC, K = RᵀC, M = RᵀR, s = Cᵀ1 and
//! r = Rᵀ1 every quantity needed for a Newton step is an m × m product, so the
//! n × m matrices are touched once per pair side:
//!
//! ```text
//! V   = sᵀG⁻¹s / n,                 w = G⁻¹s
//! V′  = 2(rᵀw − wᵀKw) / n
//! V″  = 2(qᵀG⁻¹q − wᵀMw) / n,       q = r − (K + Kᵀ)w
//! ```

use nalgebra::{DMatrix, DVector};

use super::{Diagnostics, EstimatorConfig, Sweeper};
use crate::error::{CsbnError, Result};
use crate::linalg::{ridge_inverse, RIDGE_REL};
use crate::model::{CoefMatrix, PenaltyParams};
use crate::penalty::{scad_abs, scad_d1, scad_d2};
use crate::score::ScoreContext;

/// Steps longer than this are treated as divergence.
const MAX_STEP: f64 = 1e6;
const MAX_HALVINGS: usize = 20;

/// V and its first two derivatives in one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrTerms {
    pub v: f64,
    pub dv: f64,
    pub d2v: f64,
}

/// Precomputed moments for moving coefficient `pos` of one node's column.
#[derive(Debug, Clone)]
pub struct CorrectedPairSide {
    n: f64,
    g0: DMatrix<f64>,
    k0: DMatrix<f64>,
    m: DMatrix<f64>,
    s0: DVector<f64>,
    r: DVector<f64>,
}

impl CorrectedPairSide {
    /// `bj` is the node's full (p−1) coefficient vector; its entry at `pos` is
    /// replaced by the moving coefficient.
    pub fn new(ctx: &ScoreContext, bj: &DVector<f64>, pos: usize) -> Self {
        let mut b0 = bj.clone();
        b0[pos] = 0.0;
        let c0 = ctx.psi_matrix(&b0);
        let x = ctx.covariates();
        let sig_col = ctx.sigma().column(pos).transpose();
        let mut r_mat = x.clone();
        for l in 0..r_mat.nrows() {
            let xk = x[(l, pos)];
            let mut row = r_mat.row_mut(l);
            row *= -xk;
            row += &sig_col;
        }
        let rt = r_mat.transpose();
        CorrectedPairSide {
            n: ctx.n() as f64,
            g0: c0.transpose() * &c0,
            k0: &rt * &c0,
            m: &rt * &r_mat,
            s0: c0.row_sum().transpose(),
            r: r_mat.row_sum().transpose(),
        }
    }

    fn parts(&self, beta: f64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let k = &self.k0 + &self.m * beta;
        let g = &self.g0 + (&self.k0 + self.k0.transpose()) * beta + &self.m * (beta * beta);
        let s = &self.s0 + &self.r * beta;
        (g, k, s)
    }

    fn inverse(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        ridge_inverse(&crate::linalg::symmetrize(g))
    }

    /// V at the moving coefficient `beta`; `None` if the score covariance is
    /// singular even after the ridge.
    pub fn v(&self, beta: f64) -> Option<f64> {
        let (g, _, s) = self.parts(beta);
        if g.trace() == 0.0 {
            return Some(0.0);
        }
        let gi = Self::inverse(&g)?;
        Some((s.dot(&(gi * &s)) / self.n).max(0.0))
    }

    /// V, V′ and V″ at `beta`, differentiating through the trace-scaled ridge.
    pub fn terms(&self, beta: f64) -> Option<NrTerms> {
        let (g, k, s) = self.parts(beta);
        if g.trace() == 0.0 {
            return None;
        }
        let gi = Self::inverse(&g)?;
        let w = &gi * &s;
        // G' = K + Kᵀ, G'' = 2M, s' = r; the ridge ε = c·tr(G) moves with β
        let c = RIDGE_REL / g.nrows() as f64;
        let (de, d2e) = (2.0 * c * k.trace(), 2.0 * c * self.m.trace());
        let q = &self.r - (&k + k.transpose()) * &w - &w * de;
        let ww = w.norm_squared();
        let numer = self.r.dot(&w) - w.dot(&(&k * &w)) - 0.5 * de * ww;
        let denom = q.dot(&(&gi * &q)) - w.dot(&(&self.m * &w)) - 0.5 * d2e * ww;
        let scale = 2.0 / self.n;
        Some(NrTerms {
            v: (s.dot(&w) / self.n).max(0.0),
            dv: scale * numer,
            d2v: scale * denom,
        })
    }

    fn objective(&self, beta: f64, pp: PenaltyParams) -> f64 {
        self.v(beta).map_or(f64::INFINITY, |v| v + scad_abs(beta, pp))
    }

    /// Safeguarded Newton–Raphson on V(β) + P_λ(|β|) from `start`, then
    /// compared against β = 0. Returns the minimiser, its objective and
    /// whether the Newton iteration diverged.
    pub fn minimize(&self, start: f64, cfg: &EstimatorConfig) -> (f64, f64, bool) {
        let pp = cfg.penalty;
        let mut beta = start;
        let mut f = self.objective(beta, pp);
        let mut diverged = !f.is_finite();
        if !diverged {
            for _ in 0..cfg.nr_max_iters {
                let Some(t) = self.terms(beta) else {
                    diverged = true;
                    break;
                };
                let grad = t.dv + scad_d1(beta, pp);
                let hess = t.d2v + scad_d2(beta, pp);
                let mut step = if hess > 1e-12 {
                    -grad / hess
                } else if hess < -1e-12 {
                    -grad / hess.abs()
                } else {
                    -grad
                };
                if !step.is_finite() || step.abs() > MAX_STEP {
                    diverged = true;
                    break;
                }
                let mut accepted = None;
                for _ in 0..=MAX_HALVINGS {
                    let cand = beta + step;
                    let fc = self.objective(cand, pp);
                    if fc <= f {
                        accepted = Some((cand, fc));
                        break;
                    }
                    step *= 0.5;
                }
                let Some((cand, fc)) = accepted else { break };
                let moved = (cand - beta).abs();
                beta = cand;
                f = fc;
                if moved < cfg.nr_tol * (1.0 + beta.abs()) {
                    break;
                }
            }
        }
        if diverged {
            beta = start;
            f = self.objective(beta, pp);
        }
        let f0 = self.objective(0.0, pp);
        if f0 <= f || !f.is_finite() {
            (0.0, f0, diverged)
        } else {
            (beta, f, diverged)
        }
    }
}

pub(super) fn column(b: &CoefMatrix, j: usize) -> DVector<f64> {
    DVector::from_vec(b.column_without_diag(j))
}

pub(super) struct Sweep {
    ctxs: Vec<ScoreContext>,
    cfg: EstimatorConfig,
}

impl Sweep {
    pub(super) fn new(ctxs: Vec<ScoreContext>, cfg: EstimatorConfig) -> Self {
        Sweep { ctxs, cfg }
    }

    fn side(&self, b: &CoefMatrix, from: usize, to: usize) -> Result<CorrectedPairSide> {
        let ctx = &self.ctxs[to];
        let pos = ctx
            .position_of(from)
            .ok_or_else(|| CsbnError::invalid(format!("{from} is not a parent slot of {to}")))?;
        Ok(CorrectedPairSide::new(ctx, &column(b, to), pos))
    }
}

impl Sweeper for Sweep {
    fn initial(&mut self, diag: &mut Diagnostics) -> Result<CoefMatrix> {
        super::initial_corrected(&self.ctxs, diag)
    }

    fn sweep(&mut self, b: &CoefMatrix, diag: &mut Diagnostics) -> Result<CoefMatrix> {
        let p = b.p();
        let thr = self.cfg.zero_threshold;
        let mut cur = b.clone();
        for i in 0..p {
            for j in (i + 1)..p {
                let side_ij = self.side(&cur, i, j)?;
                let side_ji = self.side(&cur, j, i)?;
                let (b_ij, f_ij, div_ij) = side_ij.minimize(cur.get(i, j), &self.cfg);
                let (b_ji, f_ji, div_ji) = side_ji.minimize(cur.get(j, i), &self.cfg);
                diag.nr_fallbacks += div_ij as usize + div_ji as usize;
                let v_i0 = side_ji
                    .v(0.0)
                    .ok_or_else(|| CsbnError::numerical(i, "score covariance H is singular"))?;
                let v_j0 = side_ij
                    .v(0.0)
                    .ok_or_else(|| CsbnError::numerical(j, "score covariance H is singular"))?;
                let s1 = v_i0 + f_ij;
                let s2 = f_ji + v_j0;
                let (mut new_ij, mut new_ji) = if s1 <= s2 { (b_ij, 0.0) } else { (0.0, b_ji) };
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
    use crate::model::{DataSet, ErrorSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy(seed: u64, n: usize, p: usize) -> DataSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut w = w;
        for r in 0..n {
            w[(r, 1)] += 0.8 * w[(r, 0)];
        }
        DataSet::observational(w).unwrap()
    }

    #[test]
    fn side_v_matches_score_kernel() {
        let ds = toy(1, 40, 3);
        let es = ErrorSpec::diagonal(3, 0.1).unwrap();
        let ctx = ScoreContext::new(&ds, &es, 1).unwrap();
        let bj = DVector::from_vec(vec![0.3, -0.2]);
        let side = CorrectedPairSide::new(&ctx, &bj, 0);
        for beta in [-1.0, 0.0, 0.3, 0.75] {
            let mut b = bj.clone();
            b[0] = beta;
            let direct = ctx.v_quadratic(&b).unwrap();
            let fast = side.v(beta).unwrap();
            assert!((direct - fast).abs() < 1e-12 * (1.0 + direct), "{direct} vs {fast}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let ds = toy(2, 60, 4);
        let es = ErrorSpec::diagonal(4, 0.2).unwrap();
        let ctx = ScoreContext::new(&ds, &es, 1).unwrap();
        let bj = DVector::from_vec(vec![0.5, 0.1, -0.3]);
        let side = CorrectedPairSide::new(&ctx, &bj, 2);
        let h = 1e-4;
        for beta in [-0.4, 0.2, 0.9] {
            let t = side.terms(beta).unwrap();
            let (fm, f0, fp) = (side.v(beta - h).unwrap(), side.v(beta).unwrap(), side.v(beta + h).unwrap());
            let d1 = (fp - fm) / (2.0 * h);
            let d2 = (fp - 2.0 * f0 + fm) / (h * h);
            assert!((t.dv - d1).abs() < 1e-5 * t.dv.abs().max(1e-3));
            assert!((t.d2v - d2).abs() < 1e-4 * t.d2v.abs().max(1e-3));
        }
    }

    #[test]
    fn minimize_never_worse_than_start_or_zero() {
        let ds = toy(3, 80, 3);
        let es = ErrorSpec::diagonal(3, 0.1).unwrap();
        let ctx = ScoreContext::new(&ds, &es, 1).unwrap();
        let cfg = EstimatorConfig::new(PenaltyParams::new(0.05, 3.7).unwrap());
        let bj = DVector::from_vec(vec![0.0, 0.0]);
        let side = CorrectedPairSide::new(&ctx, &bj, 0);
        for start in [-2.0, 0.0, 0.4, 3.0] {
            let (beta, f, _) = side.minimize(start, &cfg);
            assert!(f <= side.objective(start, cfg.penalty) + 1e-15);
            assert!(f <= side.objective(0.0, cfg.penalty) + 1e-15);
            assert!((side.objective(beta, cfg.penalty) - f).abs() < 1e-15);
        }
        let (beta, _, _) = side.minimize(0.0, &cfg);
        assert!((beta - 0.8).abs() < 0.3, "beta={beta}");
    }
}
