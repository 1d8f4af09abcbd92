//! Cross-module invariants checked over randomized inputs.

use std::collections::BTreeSet;

use csbn::dag::{graph_from_coefs, is_dag, kahn_eliminate, order_is_topological, EdgeWeakness, WeaknessMap};
use csbn::estimators::{fit, EstimatorConfig, Method};
use csbn::metrics::{evaluate_graph, frob_scaled};
use csbn::model::{CoefMatrix, DataSet, ErrorSpec, PenaltyParams, SCAD_A};
use csbn::penalty::scad_abs;
use csbn::score::ScoreContext;
use csbn::simgen::{contaminate, gen_data, random_dag, ContaminationSpec, Structure};
use csbn::tuning::{select_lambda_sic, LambdaGrid};
use csbn::DirectedGraph;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arb_graph(max_p: usize) -> impl Strategy<Value = DirectedGraph> {
    (2..=max_p).prop_flat_map(|p| {
        proptest::collection::vec(any::<bool>(), p * p).prop_map(move |bits| {
            let mut g = DirectedGraph::new(p);
            for i in 0..p {
                for j in 0..p {
                    if i != j && bits[i * p + j] {
                        g.add_edge(i, j);
                    }
                }
            }
            g
        })
    })
}

fn weakness_for(g: &DirectedGraph, seed: u64) -> WeaknessMap {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 40) % 7) as f64 / 6.0
    };
    g.edges().map(|e| (e, EdgeWeakness::new(next(), next()))).collect()
}

/// Small contaminated simulation shared by estimator properties.
fn small_problem(p: usize, seed: u64, tau: f64) -> (DataSet, ErrorSpec, CoefMatrix) {
    let net = random_dag(p, p, 3, seed).unwrap();
    let (x, iv) = gen_data(&net, 30, seed ^ 0xABCD).unwrap();
    let c = contaminate(&x, &ContaminationSpec::new(Structure::Diagonal, tau).unwrap(), seed ^ 0x1234).unwrap();
    (DataSet::new(c.w, iv).unwrap(), c.es, net.b_star)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn observational_rows_partition(p in 2usize..6, labels in proptest::collection::vec(0usize..7, 1..40)) {
        // label ≥ p means observational
        let iv: Vec<Option<usize>> = labels.iter().map(|&l| (l < p).then_some(l)).collect();
        let n = iv.len();
        let w = DMatrix::from_fn(n, p, |r, c| (r * 3 + c) as f64);
        if let Ok(ds) = DataSet::new(w, iv.clone()) {
            for j in 0..p {
                let rows = ds.observational_rows(j).unwrap();
                prop_assert_eq!(rows.clone(), ds.observational_rows(j).unwrap());
                prop_assert_eq!(ds.n_obs(j) + ds.n_interventional(j), n);
                prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(rows.iter().all(|&r| iv[r] != Some(j)));
            }
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_edges(vals in proptest::collection::vec(-1.0f64..1.0, 16), t1 in 0.0f64..0.5, dt in 0.0f64..0.5) {
        let mut m = DMatrix::from_row_slice(4, 4, &vals);
        m.fill_diagonal(0.0);
        let b = CoefMatrix::new(m).unwrap();
        let low: BTreeSet<_> = b.edges(t1).into_iter().collect();
        let high: BTreeSet<_> = b.edges(t1 + dt).into_iter().collect();
        prop_assert!(high.is_subset(&low));
    }

    #[test]
    fn scad_is_continuous_monotone_and_concave(lambda in 0.01f64..2.0, u1 in 0.0f64..1.0, u2 in 0.0f64..1.0) {
        let pp = PenaltyParams::new(lambda, SCAD_A).unwrap();
        let eps = 1e-8;
        for knot in [lambda, SCAD_A * lambda] {
            prop_assert!((scad_abs(knot + eps, pp) - scad_abs(knot, pp)).abs() < 1e-7);
            prop_assert!((scad_abs(knot - eps, pp) - scad_abs(knot, pp)).abs() < 1e-7);
        }
        let span = 2.0 * SCAD_A * lambda;
        let (t1, t2) = if u1 < u2 { (u1 * span, u2 * span) } else { (u2 * span, u1 * span) };
        prop_assert!(scad_abs(t1, pp) <= scad_abs(t2, pp) + 1e-15);
        let mid = scad_abs(0.5 * (t1 + t2), pp);
        prop_assert!(0.5 * (scad_abs(t1, pp) + scad_abs(t2, pp)) <= mid + 1e-12);
    }

    #[test]
    fn kahn_repair_properties(g in arb_graph(7), seed in any::<u64>()) {
        let weak = weakness_for(&g, seed);
        let r = kahn_eliminate(&g, &weak);
        prop_assert!(is_dag(&r.dag));
        prop_assert!(order_is_topological(&r.dag, &r.order));
        prop_assert_eq!(r.removed_edges.is_empty(), is_dag(&g));
        let mut repaired = g.clone();
        for &(i, j) in &r.removed_edges {
            repaired.remove_edge(i, j);
        }
        prop_assert_eq!(&repaired, &r.dag);
        prop_assert!(kahn_eliminate(&repaired, &weak).removed_edges.is_empty());
    }

    #[test]
    fn orientation_decomposition_and_relabeling(gh in arb_graph(6), seed in any::<u64>()) {
        let p = gh.p();
        let mut s = seed;
        let mut gt = DirectedGraph::new(p);
        for i in 0..p {
            for j in 0..p {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                if i != j && (s >> 60) < 5 {
                    gt.add_edge(i, j);
                }
            }
        }
        let e = evaluate_graph(&gh, &gt).unwrap();
        prop_assert_eq!(e.true_positives + e.reversed + e.spurious, gh.n_edges());
        // reverse the labels of both graphs
        let relabel = |g: &DirectedGraph| DirectedGraph::from_edges(p, g.edges().map(|(i, j)| (p - 1 - i, p - 1 - j)));
        let f = evaluate_graph(&relabel(&gh), &relabel(&gt)).unwrap();
        prop_assert_eq!(e, f);
    }

    #[test]
    fn frob_matches_double_loop(a in proptest::collection::vec(-2.0f64..2.0, 25), b in proptest::collection::vec(-2.0f64..2.0, 25)) {
        let mk = |v: &[f64]| {
            let mut m = DMatrix::from_row_slice(5, 5, v);
            m.fill_diagonal(0.0);
            CoefMatrix::new(m).unwrap()
        };
        let (x, y) = (mk(&a), mk(&b));
        let mut ss = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                ss += (x.get(i, j) - y.get(i, j)).powi(2);
            }
        }
        let oracle = ss / 20.0;
        prop_assert!((frob_scaled(&x, &y).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn corrected_ls_is_a_local_minimum_of_v(seed in any::<u64>()) {
        let (ds, es, _) = small_problem(4, seed, 0.9);
        for j in 0..4 {
            let ctx = ScoreContext::new(&ds, &es, j).unwrap();
            let all: Vec<usize> = (0..4).filter(|&k| k != j).collect();
            let sol = ctx.corrected_ls(&all).unwrap();
            if sol.rescued {
                continue;
            }
            let b0 = ctx.expand(&sol);
            let v0 = ctx.v_quadratic(&b0).unwrap();
            let mut s = seed;
            for _ in 0..20 {
                let d = DVector::from_fn(b0.len(), |_, _| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 1e-2
                });
                prop_assert!(ctx.v_quadratic(&(&b0 + d)).unwrap() >= v0 - 1e-12);
            }
        }
    }

    #[test]
    fn fits_are_acyclic_and_stop_within_budget(seed in any::<u64>(), lambda in 0.001f64..1.0, m in 0usize..3) {
        let (ds, es, _) = small_problem(5, seed, 0.85);
        let method = Method::ALL[m];
        let mut cfg = EstimatorConfig::new(PenaltyParams::new(lambda, SCAD_A).unwrap());
        cfg.max_outer_iters = 30;
        let f = fit(method, &ds, Some(&es), &cfg).unwrap();
        let g = graph_from_coefs(&f.b_hat, cfg.zero_threshold);
        prop_assert!(is_dag(&g));
        prop_assert!(order_is_topological(&g, &f.order));
        prop_assert!(f.diagnostics.iterations <= cfg.max_outer_iters);
        if f.diagnostics.converged {
            prop_assert!(f.diagnostics.final_change <= cfg.outer_tol);
        }
        if method != Method::Nps {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    prop_assert!(f.b_hat.get(i, j) == 0.0 || f.b_hat.get(j, i) == 0.0);
                }
            }
        }
    }

    #[test]
    fn sic_selection_ignores_grid_order(seed in any::<u64>()) {
        let (ds, es, _) = small_problem(4, seed, 0.9);
        let vals = vec![0.5, 0.2, 0.08, 0.03, 0.01];
        let mut shuffled = vals.clone();
        shuffled.rotate_left((seed % 5) as usize);
        shuffled.swap(0, 3);
        let cfg = EstimatorConfig::new(PenaltyParams::new(0.5, SCAD_A).unwrap());
        let a = select_lambda_sic(&ds, &es, &LambdaGrid::new(vals).unwrap(), Method::Nps, &cfg).unwrap();
        let b = select_lambda_sic(&ds, &es, &LambdaGrid::from_unsorted(shuffled).unwrap(), Method::Nps, &cfg).unwrap();
        prop_assert_eq!(a.lambda, b.lambda);
        prop_assert_eq!(a.fit.b_hat, b.fit.b_hat);
    }

    #[test]
    fn random_dags_are_reproducible_and_acyclic(p in 2usize..12, seed in any::<u64>()) {
        let edges = csbn::simgen::max_edges(p, 4).min(2 * p);
        let a = random_dag(p, edges, 4, seed).unwrap();
        let b = random_dag(p, edges, 4, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(is_dag(&a.graph()));
        prop_assert_eq!(a.graph().n_edges(), edges);
        prop_assert!((0..p).all(|j| a.graph().in_degree(j) <= 4));
    }
}

#[test]
fn error_structure_is_additive() {
    let net = random_dag(4, 3, 4, 9).unwrap();
    let (x, _) = gen_data(&net, 1250, 10).unwrap();
    let spec = ContaminationSpec::new(Structure::Ar, 0.8).unwrap();
    let c = contaminate(&x, &spec, 11).unwrap();
    let u = &c.w - &x;
    let n = u.nrows() as f64;
    let mean = u.row_mean();
    let centered = DMatrix::from_fn(u.nrows(), u.ncols(), |r, k| u[(r, k)] - mean[k]);
    let cov = centered.transpose() * &centered / (n - 1.0);
    let target = c.es.as_matrix();
    let rel = (&cov - target).norm() / target.norm();
    assert!(rel < 0.1, "relative Frobenius error {rel}");
}
