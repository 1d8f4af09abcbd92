//! Corrected-score kernel for one node's regression.
//!
//! For node j with observational rows O_j, the per-row corrected score is
//!
//! ```text
//! ψ_ℓ(b) = (W[ℓ, j] − W[ℓ, −j]·b) · W[ℓ, −j]ᵀ + Σ_u[−j, −j]·b
//! ```
//!
//! which has the same expectation as the error-free least-squares score when
//! the covariates are measured with additive Gaussian error of covariance Σ_u.
//! Everything here is expressed on the (p−1) "other node" positions of j;
//! [`ScoreContext::node_at`] and [`ScoreContext::position_of`] convert between
//! positions and node indices.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CsbnError, Result};
use crate::linalg::{eigen_floor, ridge_inverse, solve_spd, submatrix, subvector};
use crate::model::{DataSet, ErrorSpec};

/// Read-only per-node view of the data: W[O_j, −j], W[O_j, j] and
/// Σ_u[−j, −j], plus their cross-moments.
#[derive(Debug, Clone)]
pub struct ScoreContext {
    j: usize,
    rows: Vec<usize>,
    others: Vec<usize>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma: DMatrix<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

/// Solution of the unpenalized corrected score equations on a support.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    /// Covariate node indices, ascending.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`.
    pub coef: Vec<f64>,
    /// Whether the corrected Gram matrix needed an eigenvalue floor.
    pub rescued: bool,
}

/// Sandwich-variance test of H0: β_ij = 0 for one supported coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefTest {
    pub node: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
    /// Set when the variance estimate was not positive; p-value is then 1.
    pub degenerate: bool,
}

impl ScoreContext {
    pub fn new(ds: &DataSet, es: &ErrorSpec, j: usize) -> Result<Self> {
        let p = ds.n_nodes();
        if es.p() != p {
            return Err(CsbnError::invalid(format!(
                "measurement-error covariance is {}x{} but data has {p} nodes",
                es.p(),
                es.p()
            )));
        }
        let rows = ds.observational_rows(j)?;
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let w = ds.w();
        let x = DMatrix::from_fn(rows.len(), others.len(), |r, c| w[(rows[r], others[c])]);
        let y = DVector::from_fn(rows.len(), |r, _| w[(rows[r], j)]);
        let sigma = submatrix(es.as_matrix(), &others, &others);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let yty = y.dot(&y);
        Ok(ScoreContext {
            j,
            rows,
            others,
            x,
            y,
            sigma,
            xtx,
            xty,
            yty,
        })
    }

    pub fn node(&self) -> usize {
        self.j
    }

    /// O_j, ascending.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// n_{-j}.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// p − 1.
    pub fn dim(&self) -> usize {
        self.others.len()
    }

    pub fn node_at(&self, pos: usize) -> usize {
        self.others[pos]
    }

    pub fn position_of(&self, node: usize) -> Option<usize> {
        if node == self.j || node > self.others.len() {
            None
        } else if node < self.j {
            Some(node)
        } else {
            Some(node - 1)
        }
    }

    /// W[O_j, −j].
    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// W[O_j, j].
    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    /// Σ_u[−j, −j].
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn xtx(&self) -> &DMatrix<f64> {
        &self.xtx
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    fn check_dim(&self, bj: &DVector<f64>) -> Result<()> {
        if bj.len() != self.dim() {
            return Err(CsbnError::invalid(format!(
                "coefficient vector has length {}, expected {}",
                bj.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// ψ_ℓ(b) for a data-set row index ℓ ∈ O_j.
    pub fn psi(&self, row: usize, bj: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(bj)?;
        let r = self.rows.binary_search(&row).map_err(|_| {
            CsbnError::invalid(format!("row {row} is not observational for node {}", self.j))
        })?;
        Ok(self.psi_at(r, bj))
    }

    fn psi_at(&self, r: usize, bj: &DVector<f64>) -> DVector<f64> {
        let xr = self.x.row(r).transpose();
        let resid = self.y[r] - xr.dot(bj);
        xr * resid + &self.sigma * bj
    }

    /// All per-row scores stacked as an n_{-j} × (p−1) matrix.
    pub fn psi_matrix(&self, bj: &DVector<f64>) -> DMatrix<f64> {
        let resid = &self.y - &self.x * bj;
        let corr = (&self.sigma * bj).transpose();
        let mut c = self.x.clone();
        for r in 0..c.nrows() {
            let mut row = c.row_mut(r);
            row *= resid[r];
            row += &corr;
        }
        c
    }

    /// ψ̄ = n⁻¹ Σ_ℓ ψ_ℓ(b).
    pub fn score_mean(&self, bj: &DVector<f64>) -> DVector<f64> {
        let n = self.n() as f64;
        (&self.xty - &self.xtx * bj) / n + &self.sigma * bj
    }

    /// H_j(b) = n⁻¹ Σ ψ_ℓ ψ_ℓᵀ.
    pub fn h_matrix(&self, bj: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(bj)?;
        let c = self.psi_matrix(bj);
        let h = c.transpose() * &c / self.n() as f64;
        Ok(crate::linalg::symmetrize(&h))
    }

    /// V_j(b) = ψ̄ᵀ H⁻¹ ψ̄ with H recomputed at b and ridge-stabilised.
    pub fn v_quadratic(&self, bj: &DVector<f64>) -> Result<f64> {
        let h = self.h_matrix(bj)?;
        let mean = self.score_mean(bj);
        if h.trace() == 0.0 {
            // every ψ_ℓ is zero, so is their mean
            return Ok(0.0);
        }
        let hinv = ridge_inverse(&h)
            .ok_or_else(|| CsbnError::numerical(self.j, "score covariance H is singular"))?;
        let v = mean.dot(&(hinv * &mean));
        Ok(v.max(0.0))
    }

    /// Residual sum of squares Σ_{ℓ∈O_j} (W[ℓ,j] − W[ℓ,−j]·b)².
    pub fn rss(&self, bj: &DVector<f64>) -> f64 {
        (&self.y - &self.x * bj).norm_squared()
    }

    /// Naive log-likelihood term (n_{-j}/2)·log(RSS).
    pub fn naive_v(&self, bj: &DVector<f64>) -> Result<f64> {
        self.check_dim(bj)?;
        let rss = self.rss(bj);
        if !(rss > 0.0) {
            return Err(CsbnError::numerical(
                self.j,
                "residual sum of squares is zero; naive log-likelihood undefined",
            ));
        }
        Ok(0.5 * self.n() as f64 * rss.ln())
    }

    fn positions(&self, support: &[usize]) -> Result<Vec<usize>> {
        let mut pos = Vec::with_capacity(support.len());
        for &node in support {
            pos.push(self.position_of(node).ok_or_else(|| {
                CsbnError::invalid(format!("node {node} is not a candidate parent of {}", self.j))
            })?);
        }
        Ok(pos)
    }

    /// Corrected Gram matrix (n⁻¹ Σ Wᵀ_S W_S − Σ_u[S,S]) on support positions,
    /// with the eigenvalue floor applied.
    fn corrected_gram(&self, pos: &[usize]) -> (DMatrix<f64>, bool) {
        let n = self.n() as f64;
        let a = submatrix(&self.xtx, pos, pos) / n - submatrix(&self.sigma, pos, pos);
        eigen_floor(&a)
    }

    /// Solves Σ_ℓ ψ_ℓ = 0 restricted to `support` (node indices).
    pub fn corrected_ls(&self, support: &[usize]) -> Result<LsSolution> {
        let mut support = support.to_vec();
        support.sort_unstable();
        support.dedup();
        let pos = self.positions(&support)?;
        if pos.is_empty() {
            return Ok(LsSolution {
                support,
                coef: Vec::new(),
                rescued: false,
            });
        }
        let (a, rescued) = self.corrected_gram(&pos);
        let rhs = subvector(&self.xty, &pos) / self.n() as f64;
        let b = solve_spd(&a, &rhs)
            .filter(|b| b.iter().all(|v| v.is_finite()))
            .ok_or_else(|| CsbnError::numerical(self.j, "corrected Gram matrix is singular"))?;
        Ok(LsSolution {
            support,
            coef: b.iter().copied().collect(),
            rescued,
        })
    }

    /// Scatters a support solution into a full (p−1) coefficient vector.
    pub fn expand(&self, sol: &LsSolution) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        for (&node, &c) in sol.support.iter().zip(&sol.coef) {
            if let Some(k) = self.position_of(node) {
                b[k] = c;
            }
        }
        b
    }

    /// Two-sided normal p-values from the M-estimator sandwich variance at the
    /// corrected least-squares solution on `support`.
    pub fn sandwich_pvalues(&self, support: &[usize]) -> Result<Vec<CoefTest>> {
        let sol = self.corrected_ls(support)?;
        if sol.support.is_empty() {
            return Ok(Vec::new());
        }
        let pos = self.positions(&sol.support)?;
        let n = self.n() as f64;
        let (a, _) = self.corrected_gram(&pos);
        let ainv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| CsbnError::numerical(self.j, "sandwich bread matrix is singular"))?;

        let xs = DMatrix::from_fn(self.n(), pos.len(), |r, c| self.x[(r, pos[c])]);
        let sig = submatrix(&self.sigma, &pos, &pos);
        let b = DVector::from_column_slice(&sol.coef);
        let resid = &self.y - &xs * &b;
        let corr = &sig * &b;
        let mut meat = DMatrix::zeros(pos.len(), pos.len());
        for r in 0..self.n() {
            let psi = xs.row(r).transpose() * resid[r] + &corr;
            meat += &psi * psi.transpose();
        }
        meat /= n;
        let cov = &ainv * meat * ainv.transpose() / n;

        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        Ok(sol
            .support
            .iter()
            .enumerate()
            .map(|(k, &node)| {
                let var = cov[(k, k)];
                let est = sol.coef[k];
                if !(var > 0.0) || !var.is_finite() {
                    CoefTest {
                        node,
                        estimate: est,
                        std_error: f64::NAN,
                        p_value: 1.0,
                        degenerate: true,
                    }
                } else {
                    let se = var.sqrt();
                    let z = est / se;
                    CoefTest {
                        node,
                        estimate: est,
                        std_error: se,
                        p_value: (2.0 * normal.sf(z.abs())).min(1.0),
                        degenerate: false,
                    }
                }
            })
            .collect())
    }
}
