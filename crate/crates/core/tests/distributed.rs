mod common;

use energy_coop::agent::{AlgoParams, StoppingRule};
use energy_coop::evaluate::evaluate_solution;
use energy_coop::network::LinkPolicy;
use energy_coop::oracle::{solve_baseline, solve_p1, OracleError};
use energy_coop::orchestrator::{run_distributed, Method, DEFAULT_CONVERGENCE_TOL};

use common::{community, exchange_toy, fixed, lossy, rel_gap, scenario};

fn algo(iterations: usize) -> AlgoParams {
    AlgoParams {
        penalty: 4.5,
        max_iterations: iterations,
        stopping: StoppingRule::Fixed,
    }
}

#[test]
fn toy_exchange_oracle_trades_the_full_surplus() {
    let c = exchange_toy(10.0, 10.0, 50.0);
    let p1 = solve_p1(&c).unwrap();
    let base = solve_baseline(&c).unwrap();
    // A sells 10 kW at 0.5 and B buys 10 kW at 1.0 without trading.
    assert!((base.social_cost - 5.0).abs() < 1e-6, "{}", base.social_cost);
    // The edge label is "A-B": a negative trade is an export from A to B.
    assert!((p1.edge_trades[0][0] + 10.0).abs() < 1e-5, "{:?}", p1.edge_trades);
    assert!(p1.social_cost.abs() < 1e-5);
    let price = p1.edge_prices[0][0].unwrap();
    assert!((0.5 - 1e-6..=1.0 + 1e-6).contains(&price), "{price}");
}

#[test]
fn toy_exchange_distributed_matches_oracle_trade() {
    let c = exchange_toy(10.0, 10.0, 50.0);
    let p1 = solve_p1(&c).unwrap();
    let r = run_distributed(&c, &algo(200), &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap();
    assert!(r.converged);
    assert!((r.edge_trades[0][0] - p1.edge_trades[0][0]).abs() < 1e-3);
    let price = r.edge_prices[0][0].unwrap();
    assert!((0.5 - 1e-3..=1.0 + 1e-3).contains(&price), "{price}");
}

#[test]
fn toy_exchange_with_interior_trade_price_converges() {
    // The trade cost sits strictly between the grid tariffs here, so the
    // local problems leave both grid flows at zero.
    let c = exchange_toy(7.041329259694486, 24.90360405034155, 31.25646580232413);
    let p1 = solve_p1(&c).unwrap();
    let stop = AlgoParams {
        stopping: StoppingRule::Residual(1e-6),
        ..algo(2000)
    };
    let r = run_distributed(&c, &stop, &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap();
    assert!(r.converged);
    assert!(rel_gap(r.social_cost, p1.social_cost) <= 1e-4, "{} vs {}", r.social_cost, p1.social_cost);
}

#[test]
fn disabled_trading_reproduces_isolated_optima() {
    let c = community("duo").without_p2p();
    let base = solve_baseline(&c).unwrap();
    let r = run_distributed(&c, &algo(30), &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap();
    assert!(r.edge_trades.iter().flatten().all(|e| e.abs() < 1e-9));
    for (a, b) in r.schedules.iter().zip(&base.schedules) {
        for t in 0..a.horizon() {
            assert!((a.p_hvac[t] - b.p_hvac[t]).abs() < 1e-5);
            assert!((a.p_buy[t] - b.p_buy[t]).abs() < 1e-5);
            assert!((a.t_in[t] - b.t_in[t]).abs() < 1e-5);
        }
    }
    assert!(rel_gap(r.social_cost, base.social_cost) < 1e-9);
}

#[test]
fn disabled_trading_makes_the_oracle_decompose() {
    let c = community("line3").without_p2p();
    let p1 = solve_p1(&c).unwrap();
    let base = solve_baseline(&c).unwrap();
    assert!(rel_gap(p1.social_cost, base.social_cost) < 1e-7);
}

#[test]
fn oracle_equivalence_on_every_bundled_scenario() {
    for name in common::bundled_names() {
        let file = scenario(&name);
        let c = file.community().unwrap();
        let p1 = solve_p1(&c).unwrap();
        let r = run_distributed(&c, &fixed(&file, file.algo.max_iterations), &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL)
            .unwrap();
        assert!(r.converged, "{name}");
        assert_eq!(r.method, Method::Distributed);
        assert!(rel_gap(r.social_cost, p1.social_cost) <= 1e-3, "{name}");
    }
}

#[test]
fn consensus_prices_match_oracle_duals_where_interior() {
    // Both scenarios have prices strictly inside the tariff band somewhere,
    // where the multiplier is unique.
    for name in ["line3", "duo"] {
        let file = scenario(name);
        let c = file.community().unwrap();
        let p1 = solve_p1(&c).unwrap();
        let r = run_distributed(&c, &fixed(&file, file.algo.max_iterations), &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL)
            .unwrap();
        let mut interior = 0;
        for (e, (pe, re)) in p1.edge_prices.iter().zip(&r.edge_prices).enumerate() {
            for (t, (p, q)) in pe.iter().zip(re).enumerate() {
                let (p, q) = (p.unwrap(), q.unwrap());
                let band = &c.buildings[0].grid;
                // A trade on its limit leaves the edge price non-unique.
                if p1.edge_trades[e][t].abs() >= band.p2p_limit - 1e-6 {
                    continue;
                }
                if p > band.sell_price[t] + 1e-3 && p < band.buy_price[t] - 1e-3 {
                    interior += 1;
                }
                assert!((p - q).abs() <= 5e-3, "{name} slot {t}: oracle {p} vs distributed {q}");
            }
        }
        assert!(interior > 0, "{name} has no interior price");
    }
}

#[test]
fn lossy_run_reaches_the_same_cost_but_later() {
    let file = scenario("community4");
    let c = file.community().unwrap();
    let a = fixed(&file, 100);
    let ideal = run_distributed(&c, &a, &lossy(&c, 0.0, 3), DEFAULT_CONVERGENCE_TOL).unwrap();
    let lossy_run = run_distributed(&c, &a, &lossy(&c, 0.2, 3), DEFAULT_CONVERGENCE_TOL).unwrap();
    assert!(rel_gap(lossy_run.social_cost, ideal.social_cost) <= 5e-3);
    let (k0, k1) = (
        ideal.iterations_to_reach(1e-2).unwrap(),
        lossy_run.iterations_to_reach(1e-2).unwrap(),
    );
    assert!(k0 <= k1, "{k0} > {k1}");
    assert!(lossy_run.links.iter().any(|l| l.count() < l.active.len()));
}

#[test]
fn residual_stopping_ends_early() {
    let c = community("duo");
    let stop = AlgoParams {
        stopping: StoppingRule::Residual(1e-4),
        ..algo(1000)
    };
    let r = run_distributed(&c, &stop, &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap();
    assert!(r.iterations < 1000);
    assert!(r.final_residual().unwrap().max() <= 1e-4);
    assert_eq!(r.residuals.len(), r.iterations);
    assert_eq!(r.links.len(), r.iterations);
}

#[test]
fn short_budget_is_flagged_not_converged_but_still_complete() {
    let c = community("community4");
    let r = run_distributed(&c, &algo(3), &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 3);
    assert_eq!(r.schedules.len(), 4);
    // Cleaned trades are antisymmetric even before convergence.
    let ev = evaluate_solution(&r, &c);
    assert!(ev.violation(energy_coop::evaluate::ConstraintFamily::TradeAntisymmetry) < 1e-12);
}

#[test]
fn scripted_links_follow_the_script() {
    let c = community("line3");
    let script = LinkPolicy::Scripted(vec![vec![0], vec![1], vec![0, 1]]);
    let r = run_distributed(&c, &algo(6), &script, DEFAULT_CONVERGENCE_TOL).unwrap();
    let pattern: Vec<Vec<bool>> = r.links.iter().map(|l| l.active.clone()).collect();
    assert_eq!(
        pattern,
        vec![
            vec![true, false],
            vec![false, true],
            vec![true, true],
            vec![true, false],
            vec![false, true],
            vec![true, true],
        ]
    );
}

#[test]
fn unreachable_comfort_band_is_diagnosed() {
    let mut c = community("duo");
    c.buildings[1].hvac.power_max = 1.0;
    let err = solve_p1(&c).unwrap_err();
    assert!(matches!(err, OracleError::Model(_)), "{err}");
    assert!(err.to_string().contains("B2"), "{err}");
    let err = run_distributed(&c, &algo(5), &lossy(&c, 0.0, 0), DEFAULT_CONVERGENCE_TOL).unwrap_err();
    assert!(err.to_string().contains("B2"), "{err}");
}

#[test]
fn conflicting_limits_name_the_binding_family() {
    // Line limit too small to cover the load without neighbors' help: the
    // static checks pass but the assembled problem is infeasible.
    let mut c = community("duo");
    for b in &mut c.buildings {
        b.grid.line_limit = 1.0;
        b.grid.p2p_limit = 1.0;
    }
    let err = solve_p1(&c).unwrap_err();
    match &err {
        OracleError::Infeasible { status, family, .. } => {
            assert_eq!(*status, energy_coop::qp::QpStatus::Infeasible);
            assert!(
                ["balance", "line", "coupling", "bound"].iter().any(|f| family.contains(f)),
                "{err}"
            );
        }
        other => panic!("unexpected {other}"),
    }
}
