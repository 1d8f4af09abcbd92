//! Observed data, coefficient matrices, and the known measurement-error
//! covariance.
//!
//! Node indices are zero-based throughout the library. File formats and the
//! CLI use one-based node labels; conversion happens in [`crate::io`].

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CsbnError, Result};

/// Coefficients with magnitude at or below this value are treated as zero.
pub const ZERO_THRESHOLD: f64 = 1e-4;

/// Default SCAD shape parameter.
pub const SCAD_A: f64 = 3.7;

/// First violated data-set invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewRows { rows: usize },
    TooFewNodes { nodes: usize },
    LengthMismatch { rows: usize, labels: usize },
    NonFinite { row: usize, col: usize },
    NodeOutOfRange { row: usize, node: usize },
    NoObservationalRows { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewRows { rows } => write!(f, "N={rows}, need at least one row"),
            Violation::TooFewNodes { nodes } => write!(f, "p={nodes}, need at least two nodes"),
            Violation::LengthMismatch { rows, labels } => write!(
                f,
                "intervention vector has {labels} entries for {rows} data rows"
            ),
            Violation::NonFinite { row, col } => {
                write!(f, "non-finite entry at ({},{})", row + 1, col + 1)
            }
            Violation::NodeOutOfRange { row, node } => write!(
                f,
                "row {} intervenes node {} which is out of range",
                row + 1,
                node + 1
            ),
            Violation::NoObservationalRows { node } => write!(f, "n_{{-{}}}=0", node + 1),
        }
    }
}

/// Checks every [`DataSet`] invariant on raw parts and reports the first one
/// that fails.
pub fn validate(w: &DMatrix<f64>, intervened: &[Option<usize>]) -> std::result::Result<(), Violation> {
    let (n, p) = w.shape();
    if n < 1 {
        return Err(Violation::TooFewRows { rows: n });
    }
    if p < 2 {
        return Err(Violation::TooFewNodes { nodes: p });
    }
    if intervened.len() != n {
        return Err(Violation::LengthMismatch {
            rows: n,
            labels: intervened.len(),
        });
    }
    for r in 0..n {
        for c in 0..p {
            if !w[(r, c)].is_finite() {
                return Err(Violation::NonFinite { row: r, col: c });
            }
        }
    }
    let mut n_int = vec![0usize; p];
    for (r, lab) in intervened.iter().enumerate() {
        if let Some(k) = *lab {
            if k >= p {
                return Err(Violation::NodeOutOfRange { row: r, node: k });
            }
            n_int[k] += 1;
        }
    }
    for (j, &k) in n_int.iter().enumerate() {
        if k == n {
            return Err(Violation::NoObservationalRows { node: j });
        }
    }
    Ok(())
}

/// Observed N×p surrogate matrix with per-row intervention labels.
///
/// `intervened[r] == Some(j)` means node `j` was set by the experimenter in
/// row `r`; that row is then excluded from node `j`'s regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    w: DMatrix<f64>,
    intervened: Vec<Option<usize>>,
}

impl DataSet {
    pub fn new(w: DMatrix<f64>, intervened: Vec<Option<usize>>) -> Result<Self> {
        validate(&w, &intervened).map_err(|v| CsbnError::Validation(v.to_string()))?;
        Ok(DataSet { w, intervened })
    }

    /// Purely observational data (no row intervenes any node).
    pub fn observational(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        Self::new(w, vec![None; n])
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn intervened(&self) -> &[Option<usize>] {
        &self.intervened
    }

    pub fn n_rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.w.ncols()
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        validate(&self.w, &self.intervened)
    }

    /// Rows whose intervention label is not `j`, ascending.
    pub fn observational_rows(&self, j: usize) -> Result<Vec<usize>> {
        if j >= self.n_nodes() {
            return Err(CsbnError::invalid(format!(
                "node index {j} out of range for p={}",
                self.n_nodes()
            )));
        }
        Ok(self
            .intervened
            .iter()
            .enumerate()
            .filter(|(_, lab)| **lab != Some(j))
            .map(|(r, _)| r)
            .collect())
    }

    /// n_{-j}: number of observational rows for node `j`.
    pub fn n_obs(&self, j: usize) -> usize {
        self.n_rows() - self.n_interventional(j)
    }

    /// n_j: number of rows intervening node `j`.
    pub fn n_interventional(&self, j: usize) -> usize {
        self.intervened.iter().filter(|lab| **lab == Some(j)).count()
    }

    /// Smallest n_{-j} over all nodes.
    pub fn min_n_obs(&self) -> usize {
        (0..self.n_nodes()).map(|j| self.n_obs(j)).min().unwrap_or(0)
    }
}

/// p×p regression-coefficient matrix; entry (i, j) is the effect of node i on
/// node j. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix(DMatrix<f64>);

impl CoefMatrix {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() {
            return Err(CsbnError::invalid("coefficient matrix must be square"));
        }
        for i in 0..b.nrows() {
            if b[(i, i)] != 0.0 {
                return Err(CsbnError::invalid(format!(
                    "coefficient matrix diagonal entry {} is nonzero",
                    i + 1
                )));
            }
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(CsbnError::invalid("coefficient matrix has non-finite entries"));
        }
        Ok(CoefMatrix(b))
    }

    pub fn zeros(p: usize) -> Self {
        CoefMatrix(DMatrix::zeros(p, p))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets β_ij. Writes to the diagonal are ignored.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i != j {
            self.0[(i, j)] = v;
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Off-diagonal entries of column `j` in row order, i.e. B[-j, j].
    pub fn column_without_diag(&self, j: usize) -> Vec<f64> {
        (0..self.p()).filter(|&i| i != j).map(|i| self.0[(i, j)]).collect()
    }

    /// Edges (i, j) with |β_ij| > threshold, in row-major order.
    pub fn edges(&self, threshold: f64) -> Vec<(usize, usize)> {
        let p = self.p();
        let mut out = Vec::new();
        for i in 0..p {
            for j in 0..p {
                if i != j && self.0[(i, j)].abs() > threshold {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &CoefMatrix) -> f64 {
        (&self.0 - &other.0).amax()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.p())
            .map(|i| (0..self.p()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}

/// Known p×p covariance of the additive measurement error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSpec(DMatrix<f64>);

impl ErrorSpec {
    pub fn new(sigma_u: DMatrix<f64>) -> Result<Self> {
        if !sigma_u.is_square() {
            return Err(CsbnError::invalid("measurement-error covariance must be square"));
        }
        if sigma_u.iter().any(|v| !v.is_finite()) {
            return Err(CsbnError::invalid("measurement-error covariance has non-finite entries"));
        }
        let p = sigma_u.nrows();
        let scale = sigma_u.amax();
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b) = (sigma_u[(i, j)], sigma_u[(j, i)]);
                if (a - b).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(CsbnError::invalid(format!(
                        "measurement-error covariance is not symmetric at ({},{})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        if scale > 0.0 {
            let eig = SymmetricEigen::new(sigma_u.clone()).eigenvalues;
            let max = eig.max();
            let min = eig.min();
            if min < -1e-10 * max.abs().max(scale) {
                return Err(CsbnError::invalid(format!(
                    "measurement-error covariance is not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(ErrorSpec(sigma_u))
    }

    pub fn zeros(p: usize) -> Self {
        ErrorSpec(DMatrix::zeros(p, p))
    }

    pub fn diagonal(p: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(p, p) * variance)
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// SCAD tuning pair (λ, a).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub lambda: f64,
    pub a: f64,
}

impl PenaltyParams {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(CsbnError::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(a > 2.0) || !a.is_finite() {
            return Err(CsbnError::invalid(format!("SCAD a must be > 2, got {a}")));
        }
        Ok(PenaltyParams { lambda, a })
    }

    pub fn with_lambda(lambda: f64) -> Result<Self> {
        Self::new(lambda, SCAD_A)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DataSet {
        let w = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1.0, 0.0, 1.0]);
        DataSet::new(w, vec![Some(0), Some(0), Some(1), None]).unwrap()
    }

    #[test]
    fn observational_rows_follow_labels() {
        let ds = toy();
        assert_eq!(ds.observational_rows(0).unwrap(), vec![2, 3]);
        assert_eq!(ds.observational_rows(1).unwrap(), vec![0, 1, 3]);
        assert_eq!(ds.observational_rows(2).unwrap(), vec![0, 1, 2, 3]);
        assert!(ds.observational_rows(3).is_err());
        for j in 0..3 {
            assert_eq!(ds.n_obs(j) + ds.n_interventional(j), ds.n_rows());
            assert_eq!(ds.observational_rows(j).unwrap(), ds.observational_rows(j).unwrap());
        }
    }

    #[test]
    fn validate_reports_first_violation() {
        let mut w = DMatrix::from_element(10, 3, 1.0);
        assert!(validate(&w, &vec![None; 10]).is_ok());
        w[(4, 1)] = f64::NAN;
        let v = validate(&w, &vec![None; 10]).unwrap_err();
        assert_eq!(v.to_string(), "non-finite entry at (5,2)");

        let w = DMatrix::from_element(10, 3, 1.0);
        let v = validate(&w, &vec![Some(1); 10]).unwrap_err();
        assert_eq!(v, Violation::NoObservationalRows { node: 1 });
        assert_eq!(v.to_string(), "n_{-2}=0");

        let v = validate(&DMatrix::from_element(3, 1, 0.0), &[None, None, None]).unwrap_err();
        assert_eq!(v, Violation::TooFewNodes { nodes: 1 });
        let v = validate(&w, &[None]).unwrap_err();
        assert!(matches!(v, Violation::LengthMismatch { .. }));
        let mut lab = vec![None; 10];
        lab[3] = Some(7);
        assert!(matches!(validate(&w, &lab).unwrap_err(), Violation::NodeOutOfRange { row: 3, node: 7 }));
    }

    #[test]
    fn coef_matrix_rejects_nonzero_diagonal() {
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 1)] = 0.1;
        assert!(CoefMatrix::new(m).is_err());
        let mut b = CoefMatrix::zeros(3);
        b.set(1, 1, 5.0);
        assert_eq!(b.get(1, 1), 0.0);
    }

    #[test]
    fn edge_extraction_is_monotone_in_threshold() {
        let b = CoefMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.5, 1e-5, -0.2, 0.0, 3e-4, 0.0, -1.0, 0.0],
        ))
        .unwrap();
        let mut prev = usize::MAX;
        for t in [0.0, 1e-5, 1e-4, 1e-3, 0.3, 0.6, 2.0] {
            let e = b.edges(t).len();
            assert!(e <= prev);
            prev = e;
        }
        assert_eq!(b.edges(ZERO_THRESHOLD), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn error_spec_checks_symmetry_and_psd() {
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(ErrorSpec::new(ok).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(ErrorSpec::new(asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(ErrorSpec::new(indef).is_err());
        assert!(ErrorSpec::zeros(3).is_zero());
    }

    #[test]
    fn penalty_params_bounds() {
        assert!(PenaltyParams::new(0.0, 3.7).is_ok());
        assert!(PenaltyParams::new(-0.1, 3.7).is_err());
        assert!(PenaltyParams::new(0.1, 2.0).is_err());
        assert!(PenaltyParams::new(f64::NAN, 3.7).is_err());
    }
}
