use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use csbn_ffi::*;

fn last_error() -> String {
    let p = csbn_last_error_message();
    assert!(!p.is_null(), "a failure must leave a message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Two-node design: X0 → X1 with coefficient 1, 200 rows per block.
fn two_node_data() -> (Vec<f64>, Vec<i64>) {
    let mut w = Vec::new();
    let mut iv = Vec::new();
    let mut s = 12345u64;
    let mut normal = move || {
        // Box–Muller on a small LCG; reproducible and dependency-free
        let mut u = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let (a, b) = (u(), u());
        (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
    };
    for block in 0..2i64 {
        for _ in 0..200 {
            let x0 = normal();
            let x1 = if block == 1 { normal() } else { x0 + normal() };
            w.extend([x0, x1]);
            iv.push(block);
        }
    }
    (w, iv)
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(csbn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn fit_round_trip() {
    let (w, iv) = two_node_data();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(csbn_dataset_new(w.as_ptr(), 400, 2, iv.as_ptr(), &mut ds), CsbnStatus::Ok);
        assert!(csbn_last_error_message().is_null());
        let sigma = [0.0; 4];
        let mut es = ptr::null_mut();
        assert_eq!(csbn_error_spec_new(sigma.as_ptr(), 2, &mut es), CsbnStatus::Ok);
        let mut opts = std::mem::zeroed::<CsbnFitOptions>();
        assert_eq!(csbn_fit_options_default(&mut opts), CsbnStatus::Ok);
        opts.lambda = 0.05;

        for method in [CsbnMethod::PcdNaive, CsbnMethod::PcdCorrected, CsbnMethod::Nps] {
            let mut fit = ptr::null_mut();
            let st = csbn_fit(method as i32, ds, es, &opts, &mut fit);
            assert_eq!(st, CsbnStatus::Ok, "{method:?}");
            let mut p = 0usize;
            assert_eq!(csbn_fit_nodes(fit, &mut p), CsbnStatus::Ok);
            assert_eq!(p, 2);
            let mut b = [f64::NAN; 4];
            assert_eq!(csbn_fit_coefficients(fit, b.as_mut_ptr(), 4), CsbnStatus::Ok);
            assert_eq!(b[0], 0.0);
            assert_eq!(b[3], 0.0);
            assert!((b[1] - 1.0).abs() < 0.2, "{method:?}: b01 = {}", b[1]);
            assert_eq!(b[2], 0.0, "{method:?}: the reverse edge must be absent");
            let mut order = [9usize; 2];
            assert_eq!(csbn_fit_order(fit, order.as_mut_ptr(), 2), CsbnStatus::Ok);
            assert_eq!(order, [0, 1]);
            let mut lambda = 0.0;
            assert_eq!(csbn_fit_lambda(fit, &mut lambda), CsbnStatus::Ok);
            assert_eq!(lambda, 0.05);
            let mut conv = false;
            assert_eq!(csbn_fit_converged(fit, &mut conv), CsbnStatus::Ok);

            let truth = [0.0, 1.0, 0.0, 0.0];
            let mut ev = CsbnGraphEval::default();
            assert_eq!(csbn_evaluate(b.as_ptr(), truth.as_ptr(), 2, 1e-4, &mut ev), CsbnStatus::Ok);
            assert_eq!(ev.tpr, 1.0);
            assert_eq!(ev.true_positives, 1);
            csbn_fit_free(fit);
        }
        csbn_error_spec_free(es);
        csbn_dataset_free(ds);
    }
}

#[test]
fn auto_fit_selects_a_lambda() {
    let (w, iv) = two_node_data();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(csbn_dataset_new(w.as_ptr(), 400, 2, iv.as_ptr(), &mut ds), CsbnStatus::Ok);
        let mut opts = std::mem::zeroed::<CsbnFitOptions>();
        csbn_fit_options_default(&mut opts);
        let mut fit = ptr::null_mut();
        assert_eq!(
            csbn_fit_auto(CsbnMethod::PcdNaive as i32, ds, ptr::null(), &opts, &mut fit),
            CsbnStatus::Ok
        );
        let mut lambda = 0.0;
        csbn_fit_lambda(fit, &mut lambda);
        assert!(lambda > 0.0);
        csbn_fit_free(fit);
        csbn_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(csbn_dataset_new(ptr::null(), 2, 2, ptr::null(), &mut ds), CsbnStatus::NullPointer);
        assert!(ds.is_null());
        assert!(last_error().contains("w is null"));

        let w = [1.0, 2.0, 3.0, 4.0];
        let bad_iv = [0i64, 5];
        assert_eq!(csbn_dataset_new(w.as_ptr(), 2, 2, bad_iv.as_ptr(), &mut ds), CsbnStatus::InvalidArgument);

        let asym = [1.0, 0.5, 0.0, 1.0];
        let mut es = ptr::null_mut();
        assert_eq!(csbn_error_spec_new(asym.as_ptr(), 2, &mut es), CsbnStatus::InvalidArgument);
        assert!(last_error().contains("symmetric"));

        let mut v = 0.0;
        assert_eq!(csbn_scad(1.0, -1.0, 3.7, &mut v), CsbnStatus::InvalidArgument);
        assert_eq!(csbn_scad(1.0, 1.0, 3.7, &mut v), CsbnStatus::Ok);
        assert!((v - 1.0).abs() < 1e-15);
        assert!(csbn_last_error_message().is_null());

        let (w, iv) = two_node_data();
        assert_eq!(csbn_dataset_new(w.as_ptr(), 400, 2, iv.as_ptr(), &mut ds), CsbnStatus::Ok);
        let mut opts = std::mem::zeroed::<CsbnFitOptions>();
        csbn_fit_options_default(&mut opts);
        let mut fit = ptr::null_mut();
        assert_eq!(csbn_fit(7, ds, ptr::null(), &opts, &mut fit), CsbnStatus::InvalidArgument);
        assert!(last_error().contains("unknown method"));
        assert_eq!(
            csbn_fit(CsbnMethod::Nps as i32, ds, ptr::null(), &opts, &mut fit),
            CsbnStatus::NullPointer
        );
        opts.max_outer_iters = 0;
        assert_eq!(
            csbn_fit(CsbnMethod::PcdNaive as i32, ds, ptr::null(), &opts, &mut fit),
            CsbnStatus::InvalidArgument
        );
        assert!(fit.is_null());

        let mut short = [0.0; 2];
        opts.max_outer_iters = 100;
        assert_eq!(csbn_fit(CsbnMethod::PcdNaive as i32, ds, ptr::null(), &opts, &mut fit), CsbnStatus::Ok);
        assert_eq!(csbn_fit_coefficients(fit, short.as_mut_ptr(), 2), CsbnStatus::InvalidArgument);
        csbn_fit_free(fit);
        csbn_dataset_free(ds);
        csbn_dataset_free(ptr::null_mut());
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/csbn.h");
    let text = std::fs::read_to_string(&header).expect("build script writes the header");
    for sym in ["csbn_fit_auto", "CSBN_STATUS_NUMERICAL", "CSBN_METHOD_NPS", "typedef struct CsbnFit CsbnFit"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"csbn.h\"\nint main(void) { CsbnFitOptions o; (void)o; return CSBN_STATUS_OK; }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler available; syntax check skipped");
            return;
        }
    };
    assert!(status.success(), "header does not compile as C");
}
