use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use cellfree_ris::circuit::{reflection_pf, CapacitorVector, CircuitParams};
use cellfree_ris::consensus::{
    consensus_average_all, disagreement, metropolis_weights, solve_caps, CapacitorTerms,
};
use cellfree_ris::precoder::{bisect_power, Subproblem};

fn connected_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..9).prop_flat_map(|n| {
        let tree = proptest::collection::vec(any::<u32>(), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n), 0..2 * n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges: Vec<(usize, usize)> =
                tree.iter().enumerate().map(|(i, r)| (*r as usize % (i + 1), i + 1)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            (n, edges)
        })
    })
}

fn hermitian_pd(n: usize, entries: &[f64], shift: f64) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(entries[2 * (i * n + j)], entries[2 * (i * n + j) + 1]));
    &a * a.adjoint() + DMatrix::identity(n, n) * Complex64::new(shift, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reflection_is_passive(f in 1e9f64..8e9, c in 0.0f64..1.0, r0 in 0.0f64..10.0) {
        let p = CircuitParams { r0, ..CircuitParams::default() };
        let c = p.c_min_pf() + c * p.c_span_pf();
        prop_assert!(reflection_pf(f, c, &p).unwrap().norm() <= 1.0 + 1e-15);
    }

    #[test]
    fn metropolis_is_doubly_stochastic((n, edges) in connected_edges()) {
        let g = metropolis_weights(&edges, n).unwrap();
        prop_assert!(g.stochasticity_error() <= 1e-12);
        prop_assert!(g.weights().iter().all(|&v| v >= 0.0));
        prop_assert!((g.weights() - g.weights().transpose()).amax() == 0.0);
    }

    #[test]
    fn averaging_never_increases_disagreement(
        (n, edges) in connected_edges(),
        values in proptest::collection::vec(0.2f64..3.0, 64),
    ) {
        let g = metropolis_weights(&edges, n).unwrap();
        let copies: Vec<CapacitorVector> =
            (0..n).map(|b| CapacitorVector::from_picofarads(values[4 * b..4 * b + 4].to_vec())).collect();
        let before = disagreement(&copies);
        let after = disagreement(&consensus_average_all(&g, &copies).unwrap());
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn capacitor_solution_stays_in_box(
        start in proptest::collection::vec(0.0f64..1.0, 6),
        lin in proptest::collection::vec(-1.0f64..1.0, 18),
        rho in 0.01f64..1.0,
        tau in 1e-4f64..1.0,
    ) {
        let p = CircuitParams::default();
        let current = CapacitorVector::from_picofarads(start.iter().map(|s| p.c_min_pf() + s * p.c_span_pf()).collect());
        let terms = CapacitorTerms { pricing: lin[..6].to_vec(), accum: lin[6..12].to_vec(), gamma: lin[12..].to_vec() };
        prop_assert!(solve_caps(&current, &terms, rho, tau, &p).within_box(&p));
    }

    #[test]
    fn bisection_respects_budget(
        n in 1usize..4,
        entries in proptest::collection::vec(-1.0f64..1.0, 2 * 3 * 16),
        q in proptest::collection::vec(-3.0f64..3.0, 2 * 3 * 4),
        shift in 1e-3f64..1.0,
        p_max in 1e-4f64..10.0,
    ) {
        let subs: Vec<Subproblem> = (0..3)
            .map(|i| {
                let m = hermitian_pd(n, &entries[i * 32..], shift);
                let v = DVector::from_fn(n, |j, _| Complex64::new(q[8 * i + 2 * j], q[8 * i + 2 * j + 1]));
                Subproblem::new(m, v)
            })
            .collect();
        let sol = bisect_power(&subs, p_max, 1e-10).unwrap();
        let power: f64 = sol.w.iter().map(|w| w.norm_squared()).sum();
        prop_assert!(power <= p_max * (1.0 + 1e-8));
        prop_assert!(sol.lambda >= 0.0);
        if sol.lambda > 0.0 {
            prop_assert!(power >= p_max * (1.0 - 1e-8));
        }
    }
}
