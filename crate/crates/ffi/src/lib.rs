//! C ABI over `csbn`.
//!
//! Every fallible function returns a [`CsbnStatus`]; on failure a message is
//! kept per thread and can be read with [`csbn_last_error_message`]. Objects
//! are opaque handles created by `*_new`/`csbn_fit*` and released with the
//! matching `*_free`. Matrices cross the boundary row-major, nodes are
//! zero-based, and panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use csbn::metrics::{evaluate_coefs, CorrectnessRule};
use csbn::model::SCAD_A;
use csbn::tuning::{select_lambda_rcp, select_lambda_sic, LambdaGrid, RcpParams};
use csbn::{CoefMatrix, CsbnError, DataSet, ErrorSpec, EstimatorConfig, FitResult, Method, PenaltyParams};
use nalgebra::DMatrix;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsbnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Numerical = 4,
    Parse = 5,
    Io = 6,
    Panic = 7,
}

/// Estimation method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsbnMethod {
    PcdNaive = 0,
    PcdCorrected = 1,
    Nps = 2,
}

/// Methods arrive as plain integers so an out-of-range value from C is an
/// error rather than an invalid enum.
fn method_from(raw: i32) -> Result<Method, Failure> {
    match raw {
        x if x == CsbnMethod::PcdNaive as i32 => Ok(Method::PcdNaive),
        x if x == CsbnMethod::PcdCorrected as i32 => Ok(Method::PcdCorrected),
        x if x == CsbnMethod::Nps as i32 => Ok(Method::Nps),
        other => Err(Failure(CsbnStatus::InvalidArgument, format!("unknown method code {other}"))),
    }
}

/// Solver settings. Obtain defaults from [`csbn_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsbnFitOptions {
    pub lambda: f64,
    pub scad_a: f64,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub nr_tol: f64,
    pub nr_max_iters: usize,
    pub zero_threshold: f64,
}

impl CsbnFitOptions {
    fn config(&self) -> Result<EstimatorConfig, CsbnError> {
        let cfg = EstimatorConfig {
            penalty: PenaltyParams::new(self.lambda, self.scad_a)?,
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

/// Graph recovery metrics. `frob_scaled` is always filled.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CsbnGraphEval {
    pub tpr: f64,
    pub fdr: f64,
    pub specificity: f64,
    pub correctness: f64,
    pub frob_scaled: f64,
    pub true_positives: usize,
    pub reversed: usize,
    pub spurious: usize,
    pub estimated_edges: usize,
    pub true_edges: usize,
}

/// Opaque data set handle.
pub struct CsbnDataSet(DataSet);

/// Opaque measurement-error covariance handle.
pub struct CsbnErrorSpec(ErrorSpec);

/// Opaque fit result handle.
pub struct CsbnFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // interior NULs would truncate the C string, so replace them
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(CsbnStatus, String);

impl From<CsbnError> for Failure {
    fn from(e: CsbnError) -> Self {
        let status = match &e {
            CsbnError::InvalidArgument(_) => CsbnStatus::InvalidArgument,
            CsbnError::Validation(_) => CsbnStatus::Validation,
            CsbnError::Numerical { .. } => CsbnStatus::Numerical,
            CsbnError::Parse(_) => CsbnStatus::Parse,
            CsbnError::Io(_) => CsbnStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CsbnStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CsbnStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsbnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            CsbnStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Reads `rows × cols` doubles laid out row-major.
unsafe fn matrix(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(CsbnStatus::InvalidArgument, format!("{what} dimensions overflow")))?;
    Ok(DMatrix::from_row_slice(rows, cols, slice::from_raw_parts(data, len)))
}

fn check_len(len: usize, need: usize, what: &str) -> Result<(), Failure> {
    if len < need {
        return Err(Failure(
            CsbnStatus::InvalidArgument,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    Ok(())
}

/// Message for the last failure on this thread, or null after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn csbn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn csbn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a data set from an `n × p` row-major matrix. `interventions` holds
/// `n` entries: the zero-based intervened node, or -1 for an observational
/// row. Passing null for `interventions` marks every row observational.
///
/// # Safety
/// `w` must point to `n·p` doubles and `interventions`, when not null, to `n`
/// integers. `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csbn_dataset_new(
    w: *const f64,
    n: usize,
    p: usize,
    interventions: *const i64,
    out: *mut *mut CsbnDataSet,
) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let w = matrix(w, n, p, "w")?;
        let iv = if interventions.is_null() {
            vec![None; n]
        } else {
            slice::from_raw_parts(interventions, n)
                .iter()
                .enumerate()
                .map(|(r, &v)| match v {
                    -1 => Ok(None),
                    v if v >= 0 && (v as u64) < p as u64 => Ok(Some(v as usize)),
                    v => Err(Failure(
                        CsbnStatus::InvalidArgument,
                        format!("row {r}: intervention {v} is neither -1 nor a node in 0..{p}"),
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let ds = DataSet::new(w, iv)?;
        *out = Box::into_raw(Box::new(CsbnDataSet(ds)));
        Ok(())
    })
}

/// Releases a data set. Null is ignored.
///
/// # Safety
/// `ds` must come from [`csbn_dataset_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn csbn_dataset_free(ds: *mut CsbnDataSet) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Builds Σ_u from a `p × p` row-major matrix; it must be symmetric PSD.
///
/// # Safety
/// `sigma` must point to `p·p` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csbn_error_spec_new(
    sigma: *const f64,
    p: usize,
    out: *mut *mut CsbnErrorSpec,
) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let es = ErrorSpec::new(matrix(sigma, p, p, "sigma")?)?;
        *out = Box::into_raw(Box::new(CsbnErrorSpec(es)));
        Ok(())
    })
}

/// Releases an error specification. Null is ignored.
///
/// # Safety
/// `es` must come from [`csbn_error_spec_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn csbn_error_spec_free(es: *mut CsbnErrorSpec) {
    if !es.is_null() {
        drop(Box::from_raw(es));
    }
}

/// Fills `out` with the library defaults (λ = 0.1, a = 3.7).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_options_default(out: *mut CsbnFitOptions) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let d = EstimatorConfig::new(PenaltyParams::new(0.1, SCAD_A)?);
        *out = CsbnFitOptions {
            lambda: d.penalty.lambda,
            scad_a: d.penalty.a,
            outer_tol: d.outer_tol,
            max_outer_iters: d.max_outer_iters,
            nr_tol: d.nr_tol,
            nr_max_iters: d.nr_max_iters,
            zero_threshold: d.zero_threshold,
        };
        Ok(())
    })
}

unsafe fn error_spec<'a>(method: Method, es: *const CsbnErrorSpec) -> Result<Option<&'a ErrorSpec>, Failure> {
    match es.as_ref() {
        Some(e) => Ok(Some(&e.0)),
        None if method.is_corrected() => Err(null("error spec (required by corrected methods)")),
        None => Ok(None),
    }
}

/// Fits at the λ in `options`. `method` is a `CsbnMethod` value; `es` may be
/// null for the naive method.
///
/// # Safety
/// Handles must be live; `options` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit(
    method: i32,
    ds: *const CsbnDataSet,
    es: *const CsbnErrorSpec,
    options: *const CsbnFitOptions,
    out: *mut *mut CsbnFit,
) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let ds = &borrow(ds, "data set")?.0;
        let method = method_from(method)?;
        let es = error_spec(method, es)?;
        let cfg = borrow(options, "options")?.config()?;
        let fit = csbn::fit(method, ds, es, &cfg)?;
        *out = Box::into_raw(Box::new(CsbnFit(fit)));
        Ok(())
    })
}

/// Fits along the default λ grid and keeps the selected fit: SIC for the
/// corrected methods, RCP (α = 0.1) for the naive one. `options.lambda` is
/// ignored.
///
/// # Safety
/// As for [`csbn_fit`].
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_auto(
    method: i32,
    ds: *const CsbnDataSet,
    es: *const CsbnErrorSpec,
    options: *const CsbnFitOptions,
    out: *mut *mut CsbnFit,
) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let ds = &borrow(ds, "data set")?.0;
        let method = method_from(method)?;
        let es = error_spec(method, es)?;
        let grid = LambdaGrid::default_for(ds, es, method)?;
        let mut opts = *borrow(options, "options")?;
        opts.lambda = grid.values()[0];
        let base = opts.config()?;
        let sel = match es {
            Some(es) if method.is_corrected() => select_lambda_sic(ds, es, &grid, method, &base)?,
            _ => select_lambda_rcp(ds, &grid, RcpParams::default(), &base)?,
        };
        *out = Box::into_raw(Box::new(CsbnFit(sel.fit)));
        Ok(())
    })
}

/// Releases a fit. Null is ignored.
///
/// # Safety
/// `fit` must come from [`csbn_fit`] or [`csbn_fit_auto`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_free(fit: *mut CsbnFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of nodes in a fit.
///
/// # Safety
/// `fit` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_nodes(fit: *const CsbnFit, out: *mut usize) -> CsbnStatus {
    guard(|| {
        *out_ref(out, "out")? = borrow(fit, "fit")?.0.b_hat.p();
        Ok(())
    })
}

/// λ the fit was computed at.
///
/// # Safety
/// `fit` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_lambda(fit: *const CsbnFit, out: *mut f64) -> CsbnStatus {
    guard(|| {
        *out_ref(out, "out")? = borrow(fit, "fit")?.0.lambda;
        Ok(())
    })
}

/// Whether the outer loop met its tolerance before the iteration cap.
///
/// # Safety
/// `fit` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_converged(fit: *const CsbnFit, out: *mut bool) -> CsbnStatus {
    guard(|| {
        *out_ref(out, "out")? = borrow(fit, "fit")?.0.diagnostics.converged;
        Ok(())
    })
}

/// Copies B̂ row-major into `out` (`len` ≥ p·p). Entry (i, j) is the effect
/// of node i on node j.
///
/// # Safety
/// `fit` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_coefficients(fit: *const CsbnFit, out: *mut f64, len: usize) -> CsbnStatus {
    guard(|| {
        let b = &borrow(fit, "fit")?.0.b_hat;
        let p = b.p();
        check_len(len, p * p, "out")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = slice::from_raw_parts_mut(out, p * p);
        for i in 0..p {
            for j in 0..p {
                dst[i * p + j] = b.get(i, j);
            }
        }
        Ok(())
    })
}

/// Copies the topological order (p zero-based nodes) into `out`.
///
/// # Safety
/// `fit` must be live and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn csbn_fit_order(fit: *const CsbnFit, out: *mut usize, len: usize) -> CsbnStatus {
    guard(|| {
        let order = &borrow(fit, "fit")?.0.order;
        check_len(len, order.len(), "out")?;
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, order.len()).copy_from_slice(order);
        Ok(())
    })
}

/// SCAD penalty P_λ(|t|) with shape parameter `a` > 2.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csbn_scad(t: f64, lambda: f64, a: f64, out: *mut f64) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = csbn::penalty::scad(t, PenaltyParams::new(lambda, a)?)?;
        Ok(())
    })
}

/// Compares an estimated coefficient matrix with the truth (both `p × p`
/// row-major). Entries with magnitude ≤ `threshold` count as absent.
///
/// # Safety
/// Both matrices must hold `p·p` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn csbn_evaluate(
    b_hat: *const f64,
    b_true: *const f64,
    p: usize,
    threshold: f64,
    out: *mut CsbnGraphEval,
) -> CsbnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let est = CoefMatrix::new(matrix(b_hat, p, p, "b_hat")?)?;
        let truth = CoefMatrix::new(matrix(b_true, p, p, "b_true")?)?;
        let e = evaluate_coefs(&est, &truth, threshold, CorrectnessRule::Bounded)?;
        *out = CsbnGraphEval {
            tpr: e.tpr,
            fdr: e.fdr,
            specificity: e.specificity,
            correctness: e.correctness,
            frob_scaled: e.frob_scaled.unwrap_or(f64::NAN),
            true_positives: e.true_positives,
            reversed: e.reversed,
            spurious: e.spurious,
            estimated_edges: e.estimated_edges,
            true_edges: e.true_edges,
        };
        Ok(())
    })
}
