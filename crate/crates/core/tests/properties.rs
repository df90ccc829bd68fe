mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use energy_coop::agent::{AlgoParams, StoppingRule};
use energy_coop::oracle::{solve_baseline, solve_p1};
use energy_coop::orchestrator::{run_distributed, DEFAULT_CONVERGENCE_TOL};
use energy_coop::qp::{self, QpBuilder, QpProblem, QpSettings, WarmStart};
use energy_coop::scenario::ScenarioFile;

use common::{community, exchange_toy, lossy};

/// `(Q, q, box, equality weights)`
type BoxQp = (DMatrix<f64>, Vec<f64>, Vec<(f64, f64)>, Vec<f64>);

/// Random convex QP with box bounds and one equality row.
fn box_qp() -> impl Strategy<Value = BoxQp> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0..2.0f64, n * n),
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec((-3.0..0.0f64, 0.1..3.0f64), n),
            prop::collection::vec(0.1..1.0f64, n),
        )
            .prop_map(move |(b, q, bounds, weights)| {
                let b = DMatrix::from_vec(n, n, b);
                let bounds = bounds.into_iter().map(|(lo, width)| (lo, lo + width)).collect();
                (b.transpose() * b, q, bounds, weights)
            })
    })
}

fn build(q_mat: &DMatrix<f64>, q: &[f64], bounds: &[(f64, f64)], eq: &[f64], scale: f64) -> QpProblem {
    let n = q.len();
    let mut b = QpBuilder::new();
    let vars: Vec<usize> = (0..n)
        .map(|i| b.add_bounded_var(format!("x{i}"), bounds[i].0, bounds[i].1))
        .collect();
    for i in 0..n {
        b.add_lin(vars[i], scale * q[i]);
        b.add_quad(vars[i], vars[i], scale * q_mat[(i, i)]);
        for j in i + 1..n {
            b.add_quad(vars[i], vars[j], scale * q_mat[(i, j)]);
        }
    }
    // Σ wᵢxᵢ at the midpoint of the box keeps the problem feasible.
    let rhs: f64 = (0..n).map(|i| eq[i] * 0.5 * (bounds[i].0 + bounds[i].1)).sum();
    let terms: Vec<(usize, f64)> = vars.iter().zip(eq).map(|(&v, &w)| (v, w)).collect();
    b.add_eq("mix", &terms, rhs);
    b.build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_the_objective_scales_the_optimum(
        (q_mat, q, bounds, eq) in box_qp(),
        scale in 0.01..100.0f64,
    ) {
        let settings = QpSettings::with_tolerance(1e-9);
        let a = qp::solve(&build(&q_mat, &q, &bounds, &eq, 1.0), &settings).unwrap();
        let b = qp::solve(&build(&q_mat, &q, &bounds, &eq, scale), &settings).unwrap();
        prop_assert!(a.is_optimal() && b.is_optimal());
        prop_assert!((b.objective - scale * a.objective).abs() <= 1e-6 * scale.max(1.0) * a.objective.abs().max(1.0));
    }

    #[test]
    fn no_feasible_perturbation_improves_the_optimum(
        (q_mat, q, bounds, eq) in box_qp(),
        dirs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 8),
        step in 1e-4..0.5f64,
    ) {
        let p = build(&q_mat, &q, &bounds, &eq, 1.0);
        let sol = qp::solve(&p, &QpSettings::with_tolerance(1e-9)).unwrap();
        prop_assert!(sol.is_optimal());
        let n = q.len();
        let w = DVector::from_column_slice(&eq);
        for d in dirs {
            // Stay on the equality row; skip candidates that leave the box.
            let mut d = DVector::from_column_slice(&d[..n]);
            d -= &w * (w.dot(&d) / w.dot(&w));
            let cand = &sol.x + d * step;
            if (0..n).any(|i| cand[i] < bounds[i].0 || cand[i] > bounds[i].1) {
                continue;
            }
            prop_assert!(p.objective(&cand) >= sol.objective - 1e-7);
        }
    }

    #[test]
    fn warm_start_from_the_optimum_confirms_in_one_step(
        (q_mat, q, bounds, eq) in box_qp(),
    ) {
        let p = build(&q_mat, &q, &bounds, &eq, 1.0);
        let cold = qp::solve(&p, &QpSettings::with_tolerance(1e-9)).unwrap();
        prop_assert!(cold.is_optimal());
        let warm = qp::solve(&p, &QpSettings {
            warm_start: Some(WarmStart { x: cold.x.clone() }),
            ..QpSettings::with_tolerance(1e-9)
        }).unwrap();
        prop_assert!(warm.is_optimal());
        prop_assert!(warm.iterations <= 1, "{} iterations", warm.iterations);
        prop_assert!((warm.objective - cold.objective).abs() <= 1e-7 * cold.objective.abs().max(1.0));
    }

    #[test]
    fn warm_start_anywhere_reaches_the_same_optimum(
        (q_mat, q, bounds, eq) in box_qp(),
        start in prop::collection::vec(-10.0..10.0f64, 6),
    ) {
        let p = build(&q_mat, &q, &bounds, &eq, 1.0);
        let cold = qp::solve(&p, &QpSettings::with_tolerance(1e-9)).unwrap();
        let warm = qp::solve(&p, &QpSettings {
            warm_start: Some(WarmStart { x: DVector::from_column_slice(&start[..q.len()]) }),
            ..QpSettings::with_tolerance(1e-9)
        }).unwrap();
        prop_assert!(cold.is_optimal() && warm.is_optimal());
        prop_assert!((warm.objective - cold.objective).abs() <= 1e-7 * cold.objective.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relaxing_trade_limits_never_raises_the_social_optimum(
        low in 0.0..20.0f64,
        extra in 0.0..30.0f64,
    ) {
        let mut tight = community("duo");
        for b in &mut tight.buildings {
            b.grid.p2p_limit = low;
        }
        let mut loose = tight.clone();
        for b in &mut loose.buildings {
            b.grid.p2p_limit = low + extra;
        }
        let a = solve_p1(&tight).unwrap().social_cost;
        let b = solve_p1(&loose).unwrap().social_cost;
        prop_assert!(b <= a + 1e-6, "{} > {}", b, a);
    }

    #[test]
    fn cooperation_never_costs_more_than_isolation(
        surplus in 0.0..30.0f64,
        need in 0.0..30.0f64,
        limit in 0.0..40.0f64,
    ) {
        let c = exchange_toy(surplus, need, limit);
        let base = solve_baseline(&c).unwrap().social_cost;
        let p1 = solve_p1(&c).unwrap().social_cost;
        let algo = AlgoParams { penalty: 4.5, max_iterations: 2000, stopping: StoppingRule::Residual(1e-6) };
        let r = run_distributed(&c, &algo, &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap();
        prop_assert!(p1 <= base + 1e-4);
        prop_assert!(r.social_cost <= base + 1e-4, "{} > {}", r.social_cost, base);
        prop_assert!(r.payment_sum().abs() <= 1e-4);
    }

    #[test]
    fn identical_seeds_give_bit_identical_runs(seed in any::<u64>(), xi in 0.0..0.8f64) {
        let c = community("line3");
        let algo = AlgoParams { penalty: 4.5, max_iterations: 15, stopping: StoppingRule::Fixed };
        let a = run_distributed(&c, &algo, &lossy(&c, xi, seed), DEFAULT_CONVERGENCE_TOL).unwrap();
        let b = run_distributed(&c, &algo, &lossy(&c, xi, seed), DEFAULT_CONVERGENCE_TOL).unwrap();
        prop_assert_eq!(&a.residuals, &b.residuals);
        prop_assert_eq!(&a.links, &b.links);
        prop_assert_eq!(a.social_cost.to_bits(), b.social_cost.to_bits());
        prop_assert_eq!(&a.edge_trades, &b.edge_trades);
    }

    #[test]
    fn scenario_round_trip_is_a_fixpoint(
        beta in 0.5..5.0f64,
        prob in 0.0..0.99f64,
        seed in any::<u64>(),
        stop in prop::option::of(1e-8..1e-2f64),
    ) {
        let mut s = ScenarioFile::from_json(include_str!("../scenarios/line3.json")).unwrap();
        s.community[1].hvac.discomfort_weight = beta;
        s.loss.prob = prob;
        s.loss.seed = seed;
        s.algo.stop_residual = stop;
        let once = ScenarioFile::from_json(&s.to_json()).unwrap();
        let twice = ScenarioFile::from_json(&once.to_json()).unwrap();
        prop_assert_eq!(&once, &s);
        prop_assert_eq!(&twice, &once);
    }
}
