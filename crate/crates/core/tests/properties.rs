use nalgebra::DMatrix;
use proptest::prelude::*;

use monocalc::operator::min_monotonicity_gap;
use monocalc::representability::{fitzpatrick_value, representative_value};
use monocalc::variational::regularized_sum_eval;
use monocalc::{
    moreau_yosida, solve_translated_inclusion, zoo, Covector, LinearOp, NormedSpace, OperatorSpec, Point, SampledGraph,
    SolverOptions,
};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

fn exponent() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![1.5, 2.0, 3.0, 4.0])
}

fn operator(kind: usize, sp: NormedSpace) -> OperatorSpec {
    let n = sp.dim();
    match kind {
        0 => zoo::abs(sp),
        1 => zoo::indicator_ball(sp, vec![0.3; n], 1.0).unwrap(),
        2 => zoo::indicator_box(sp, vec![-1.0; n], vec![0.5; n]).unwrap(),
        _ => {
            let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else if i < j { 0.7 } else { -0.7 });
            zoo::linear(sp, m).unwrap()
        }
    }
}

proptest! {
    #[test]
    fn duality_map_identities(x in coords(3), p in exponent()) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
        let sp = NormedSpace::new(3, p).unwrap();
        let j = sp.duality_map(&Point(x.clone())).unwrap();
        let nx = sp.norm(&x);
        prop_assert!((dot(&x, &j) - nx * nx).abs() <= 1e-10 * nx * nx);
        prop_assert!((sp.dual_norm(&j) - nx).abs() <= 1e-10 * nx);
    }

    #[test]
    fn duality_map_homogeneous(x in coords(3), p in exponent(), t in 0.01..10.0f64) {
        let sp = NormedSpace::new(3, p).unwrap();
        let j = sp.duality_map(&Point(x.clone())).unwrap();
        let jt = sp.duality_map(&Point(x.iter().map(|v| t * v).collect())).unwrap();
        for (a, b) in j.iter().zip(jt.iter()) {
            prop_assert!((t * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn duality_map_monotone(x in coords(3), y in coords(3), p in exponent()) {
        let sp = NormedSpace::new(3, p).unwrap();
        let jx = sp.duality_map(&Point(x.clone())).unwrap();
        let jy = sp.duality_map(&Point(y.clone())).unwrap();
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let e: Vec<f64> = jx.iter().zip(jy.iter()).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&d, &e) >= -1e-12);
    }

    #[test]
    fn fenchel_young_gap_nonnegative(u in coords(3), w in coords(3), p in exponent()) {
        let sp = NormedSpace::new(3, p).unwrap();
        prop_assert!(sp.eps_duality_gap(&Point(u), &Covector(w)).unwrap() >= -1e-12);
    }

    #[test]
    fn adjoint_identity(rows in 1usize..4, cols in 1usize..4, seed in prop::collection::vec(-2.0..2.0f64, 27)) {
        let a = LinearOp::new(DMatrix::from_fn(rows, cols, |i, j| seed[i * cols + j])).unwrap();
        let y = &seed[9..9 + cols];
        let xs = &seed[18..18 + rows];
        let lhs = dot(&a.apply(y), xs);
        let rhs = dot(y, &a.adjoint(xs));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn hilbert_yosida_matches_prox(x in -5.0..5.0f64, lambda in 0.01..2.0f64) {
        let t = zoo::abs(NormedSpace::euclidean(1).unwrap());
        let got = moreau_yosida(&t, lambda, &Point(vec![x]), &SolverOptions::default()).unwrap();
        let prox = x.signum() * (x.abs() - lambda).max(0.0);
        prop_assert!((got[0] - (x - prox) / lambda).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn yosida_monotone(kind in 0usize..4, p in prop::sample::select(vec![1.5, 2.0, 3.0]),
                       x in coords(2), y in coords(2), lambda in 0.05..2.0f64) {
        let t = operator(kind, NormedSpace::new(2, p).unwrap());
        let opts = SolverOptions::default();
        let tx = moreau_yosida(&t, lambda, &Point(x.clone()), &opts).unwrap();
        let ty = moreau_yosida(&t, lambda, &Point(y.clone()), &opts).unwrap();
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let e: Vec<f64> = tx.iter().zip(ty.iter()).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&d, &e) >= -1e-8);
    }

    #[test]
    fn translated_solution_is_eps_duality(kind in 0usize..4, p in prop::sample::select(vec![1.5, 2.0, 3.0]),
                                          x in coords(2), xs in coords(2)) {
        let sp = NormedSpace::new(2, p).unwrap();
        let t = operator(kind, sp);
        let opts = SolverOptions::default();
        let sol = solve_translated_inclusion(&t, &Point(x.clone()), &Covector(xs), &opts).unwrap();
        let u = Point(sol.z.iter().zip(&x).map(|(a, b)| a - b).collect());
        prop_assert!(sp.eps_duality_gap(&u, &sol.w_star).unwrap() <= opts.tol);
        prop_assert!(sol.residual <= sol.accepted_tol(opts.tol));
    }

    #[test]
    fn regularized_sum_everywhere_defined(k1 in 0usize..4, k2 in 0usize..4, x in coords(2),
                                          lambda in 0.01..1.0f64, mu in 0.01..1.0f64) {
        let sp = NormedSpace::euclidean(2).unwrap();
        let v = regularized_sum_eval(&operator(k1, sp), &operator(k2, sp), lambda, mu, &Point(x), &SolverOptions::default());
        prop_assert!(v.is_ok());
        prop_assert!(v.unwrap().iter().all(|c| c.is_finite()));
    }

    #[test]
    fn gap_vanishes_on_monotone_samples(mut xs in prop::collection::vec(-2.0..2.0f64, 2..12),
                                        incs in prop::collection::vec(0.0..1.0f64, 12), pick in 0usize..12) {
        xs.sort_by(f64::total_cmp);
        let mut acc = -1.0;
        let pairs: Vec<(Point, Covector)> = xs.iter().zip(&incs).map(|(x, d)| {
            acc += d;
            (Point(vec![*x]), Covector(vec![acc]))
        }).collect();
        let g = SampledGraph::new(NormedSpace::euclidean(1).unwrap(), pairs).unwrap();
        prop_assume!(g.is_monotone());
        let (z, zs) = &g.pairs()[pick % g.len()];
        prop_assert!(min_monotonicity_gap(&g, z, zs).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn fitzpatrick_conjugate_fenchel_young(a in coords(2), w in prop::collection::vec(0.0..1.0f64, 81)) {
        let g = zoo::sign_graph_samples(0.1);
        let pairs = g.pairs();
        // a point of the convex hull of the samples, so h is finite there
        let total: f64 = w.iter().sum::<f64>().max(1e-12);
        let (mut x, mut xs) = (0.0, 0.0);
        for ((y, ys), wi) in pairs.iter().zip(&w) {
            x += wi / total * y[0];
            xs += wi / total * ys[0];
        }
        let h = representative_value(&g, &Point(vec![x]), &Covector(vec![xs])).unwrap();
        prop_assert!(h.is_finite());
        let phi = fitzpatrick_value(&g, &Point(vec![a[0]]), &Covector(vec![a[1]])).unwrap();
        prop_assert!(phi + h >= a[0] * xs + x * a[1] - 1e-8);
    }

    #[test]
    fn representative_convex_on_segments(w1 in prop::collection::vec(0.0..1.0f64, 41),
                                         w2 in prop::collection::vec(0.0..1.0f64, 41), alpha in 0.0..1.0f64) {
        let g = zoo::identity_graph_samples(-2.0, 2.0, 0.1);
        let hull = |w: &[f64]| {
            let total: f64 = w.iter().sum::<f64>().max(1e-12);
            g.pairs().iter().zip(w).fold((0.0, 0.0), |(x, xs), ((y, ys), wi)| (x + wi / total * y[0], xs + wi / total * ys[0]))
        };
        let (z1, z2) = (hull(&w1), hull(&w2));
        let h = |z: (f64, f64)| representative_value(&g, &Point(vec![z.0]), &Covector(vec![z.1])).unwrap();
        let mid = (alpha * z1.0 + (1.0 - alpha) * z2.0, alpha * z1.1 + (1.0 - alpha) * z2.1);
        prop_assert!(h(mid) <= alpha * h(z1) + (1.0 - alpha) * h(z2) + 1e-8);
    }
}
