//! Centralized reference solutions: the full social-cost QP with explicit
//! trade-balance constraints, and the no-cooperation baseline.

use std::time::Instant;

use thiserror::Error;

use crate::building::{add_building, build_feasible_set, ModelError};
use crate::community::Community;
use crate::orchestrator::{settle_costs, Method, RunResult};
use crate::qp::{self, QpBuilder, QpError, QpProblem, QpSettings, QpStatus};

const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("problem {status}; most violated constraint family: {family} (row {row})")]
    Infeasible {
        status: QpStatus,
        family: String,
        row: String,
    },
}

/// The assembled social-cost QP and where each building's block lives.
pub struct SocialProblem {
    pub problem: QpProblem,
    pub layouts: Vec<crate::building::BuildingLayout>,
    /// `coupling_rows[edge][t]`: equality row index of the trade balance.
    pub coupling_rows: Vec<Vec<usize>>,
}

pub fn assemble_p1(community: &Community) -> Result<SocialProblem, ModelError> {
    let topo = &community.topology;
    let mut builder = QpBuilder::new();
    let layouts = community
        .buildings
        .iter()
        .zip(&community.profiles)
        .enumerate()
        .map(|(i, (b, p))| add_building(&mut builder, b, p, topo.degree(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let horizon = community.horizon();
    let mut coupling_rows = Vec::with_capacity(topo.num_edges());
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        let ka = topo.neighbor_slot(a, b).expect("edge endpoint");
        let kb = topo.neighbor_slot(b, a).expect("edge endpoint");
        let rows = (0..horizon)
            .map(|t| {
                builder.add_eq(
                    format!("{}.coupling[{t}]", topo.edge_label(e)),
                    &[(layouts[a].trade(t, ka), 1.0), (layouts[b].trade(t, kb), 1.0)],
                    0.0,
                )
            })
            .collect();
        coupling_rows.push(rows);
    }
    Ok(SocialProblem {
        problem: builder.build(),
        layouts,
        coupling_rows,
    })
}

fn infeasible(problem: &QpProblem, sol: &qp::QpSolution) -> OracleError {
    let mut worst = (0.0, String::from("none"));
    if problem.num_eq() > 0 {
        let r = &problem.eq_matrix * &sol.x - &problem.eq_rhs;
        for (k, v) in r.iter().enumerate() {
            if v.abs() > worst.0 {
                worst = (v.abs(), problem.eq_names[k].clone());
            }
        }
    }
    if problem.num_ineq() > 0 {
        let gx = &problem.ineq_matrix * &sol.x;
        for k in 0..problem.num_ineq() {
            let v = (problem.ineq_lower[k] - gx[k]).max(gx[k] - problem.ineq_upper[k]);
            if v > worst.0 {
                worst = (v, problem.ineq_names[k].clone());
            }
        }
    }
    let row = worst.1;
    // "B1.balance[3]" -> "balance", "bound[B1.trade[1][0]]" -> "trade bound"
    let (inner, suffix) = match row.strip_prefix("bound[") {
        Some(rest) => (rest, " bound"),
        None => (row.as_str(), ""),
    };
    let family = inner
        .split_once('.')
        .map(|(_, rest)| rest.split('[').next().unwrap_or(rest))
        .unwrap_or(inner);
    let family = format!("{family}{suffix}");
    OracleError::Infeasible {
        status: sol.status,
        family,
        row,
    }
}

/// Solves the social-cost problem in one piece. Edge prices are the
/// multipliers of the trade-balance rows; a positive price means the
/// importing building pays.
pub fn solve_p1(community: &Community) -> Result<RunResult, OracleError> {
    let start = Instant::now();
    let topo = &community.topology;
    let social = assemble_p1(community)?;
    let sol = qp::solve(&social.problem, &QpSettings::with_tolerance(ORACLE_TOL))?;
    if !sol.is_optimal() {
        return Err(infeasible(&social.problem, &sol));
    }
    let schedules: Vec<_> = social
        .layouts
        .iter()
        .enumerate()
        .map(|(i, layout)| layout.extract(topo.id(i), &topo.neighbor_ids(i), sol.x.as_slice()))
        .collect();
    let horizon = community.horizon();
    let mut edge_trades = vec![vec![0.0; horizon]; topo.num_edges()];
    let mut edge_prices = vec![vec![None; horizon]; topo.num_edges()];
    let mut asymmetry = 0.0_f64;
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        let ka = topo.neighbor_slot(a, b).expect("edge endpoint");
        let kb = topo.neighbor_slot(b, a).expect("edge endpoint");
        for t in 0..horizon {
            let ea = schedules[a].trades[ka][t];
            let eb = schedules[b].trades[kb][t];
            asymmetry = asymmetry.max((ea + eb).abs());
            edge_trades[e][t] = 0.5 * (ea - eb);
            edge_prices[e][t] = Some(sol.eq_duals[social.coupling_rows[e][t]]);
        }
    }
    let costs = settle_costs(community, &schedules, &edge_trades, &edge_prices);
    let social_cost = costs.iter().map(|c| c.internal.total()).sum();
    Ok(RunResult {
        method: Method::Centralized,
        building_ids: topo.ids().to_vec(),
        edge_labels: (0..topo.num_edges()).map(|e| topo.edge_label(e)).collect(),
        schedules,
        edge_trades,
        edge_prices,
        costs,
        social_cost,
        residuals: Vec::new(),
        links: Vec::new(),
        iterations: sol.iterations,
        seed: None,
        converged: true,
        pre_clean_asymmetry: asymmetry,
        settled: true,
        wall_time: start.elapsed(),
    })
}

/// Every building optimizes alone with all P2P trades fixed to zero.
pub fn solve_baseline(community: &Community) -> Result<RunResult, OracleError> {
    let start = Instant::now();
    let topo = &community.topology;
    let isolated = community.without_p2p();
    let mut schedules = Vec::with_capacity(community.len());
    let mut iterations = 0;
    for (i, (b, p)) in isolated.buildings.iter().zip(&isolated.profiles).enumerate() {
        let (problem, layout) = build_feasible_set(b, p, topo.degree(i))?;
        let sol = qp::solve(&problem, &QpSettings::with_tolerance(ORACLE_TOL))?;
        if !sol.is_optimal() {
            return Err(infeasible(&problem, &sol));
        }
        iterations = iterations.max(sol.iterations);
        let mut sched = layout.extract(&b.id, &topo.neighbor_ids(i), sol.x.as_slice());
        for row in &mut sched.trades {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        schedules.push(sched);
    }
    let horizon = community.horizon();
    let edge_trades = vec![vec![0.0; horizon]; topo.num_edges()];
    let edge_prices = vec![vec![None; horizon]; topo.num_edges()];
    let costs = settle_costs(community, &schedules, &edge_trades, &edge_prices);
    let social_cost = costs.iter().map(|c| c.internal.total()).sum();
    Ok(RunResult {
        method: Method::Baseline,
        building_ids: topo.ids().to_vec(),
        edge_labels: (0..topo.num_edges()).map(|e| topo.edge_label(e)).collect(),
        schedules,
        edge_trades,
        edge_prices,
        costs,
        social_cost,
        residuals: Vec::new(),
        links: Vec::new(),
        iterations,
        seed: None,
        converged: true,
        pre_clean_asymmetry: 0.0,
        settled: true,
        wall_time: start.elapsed(),
    })
}
