//! Small dense helpers shared by the score kernel and the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative ridge added to H before inversion: ε = RIDGE_REL · trace(H) / dim.
pub const RIDGE_REL: f64 = 1e-8;

/// Relative eigenvalue floor applied to indefinite corrected Gram matrices.
pub const EIGEN_FLOOR_REL: f64 = 1e-10;

/// Inverse of a symmetric PSD matrix after adding the relative ridge.
///
/// Returns `None` when the ridged matrix is still not positive definite.
pub fn ridge_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = h.nrows();
    if m == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let eps = RIDGE_REL * h.trace() / m as f64;
    let mut hr = symmetrize(h);
    for k in 0..m {
        hr[(k, k)] += eps;
    }
    hr.cholesky().map(|c| c.inverse())
}

/// Raises eigenvalues of a symmetric matrix to `EIGEN_FLOOR_REL · max|eig|`.
///
/// Returns the (possibly) modified matrix and whether a shift happened.
pub fn eigen_floor(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let m = a.nrows();
    if m == 0 {
        return (a.clone(), false);
    }
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym.clone());
    let top = eig.eigenvalues.amax();
    let floor = EIGEN_FLOOR_REL * top;
    if top == 0.0 || eig.eigenvalues.min() < floor {
        let floor = if top == 0.0 { f64::MIN_POSITIVE.sqrt() } else { floor };
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        (symmetrize(&fixed), true)
    } else {
        (sym, false)
    }
}

/// Solves `a x = b` for symmetric positive definite `a`, falling back to LU.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Sub-matrix on the given row and column positions.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
