//! Per-building iteration logic of the dual-consensus ADMM.
//!
//! Every agent keeps, for each slot, a local estimate `π⁽ⁱ⁾` of the full edge
//! price vector, an accumulated dual `z_i` and one consensus auxiliary `v_ij`
//! per neighbor, all of length `|ℰ|`. Entries of edges not incident to `i`
//! never enter the local QP, but they are averaged with neighbors like any
//! other entry, so the full vectors are kept.
//!
//! One iteration is
//!
//! ```text
//!   (x, e)  ← argmin over 𝒳ᵢ of  Σₜ C_int + c/(4n) ‖(1/c) Mᵢeₜ − (1/c) zₜ + 2 Σⱼ vᵢⱼ,ₜ‖²
//!   π⁽ⁱ⁾    ← 1/(2n) (2 Σⱼ vᵢⱼ − (1/c) z + (1/c) Mᵢe)
//!   vᵢⱼ     ← (π⁽ⁱ⁾ + π⁽ʲ⁾)/2                    on active links only
//!   z       ← z + 2c Σ_{active j} (π⁽ⁱ⁾ − vᵢⱼ)
//! ```
//!
//! with `n = |𝒩ᵢ|`.

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::building::{
    build_feasible_set, BuildingLayout, BuildingParams, BuildingProfile, BuildingSchedule,
    ModelError,
};
use crate::qp::{self, QpError, QpProblem, QpSettings, QpSolution, QpStatus, WarmStart};
use crate::topology::Topology;

/// Edge-space vectors for every slot: `[t][edge]`.
pub type EdgeSeries = Vec<Vec<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("building {building}: {source}")]
    Qp { building: String, source: QpError },
    #[error("building {building}: local problem {status} (largest violation in {row})")]
    Unsolved {
        building: String,
        status: QpStatus,
        row: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Run exactly `max_iterations`.
    Fixed,
    /// Stop once both residuals fall to the threshold, or at `max_iterations`.
    Residual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgoParams {
    /// Penalty `c`.
    pub penalty: f64,
    pub max_iterations: usize,
    pub stopping: StoppingRule,
}

impl AlgoParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            errs.push("algo.penalty must be positive".into());
        }
        if self.max_iterations < 1 {
            errs.push("algo.max_iterations must be at least 1".into());
        }
        if let StoppingRule::Residual(eps) = self.stopping {
            if !(eps > 0.0) {
                errs.push("algo residual threshold must be positive".into());
            }
        }
        errs
    }
}

impl Default for AlgoParams {
    fn default() -> Self {
        Self {
            penalty: 4.5,
            max_iterations: 100,
            stopping: StoppingRule::Fixed,
        }
    }
}

/// Iterates owned by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub iteration: usize,
    pub schedule: Option<BuildingSchedule>,
    /// `trades[t][k]`, import from the `k`-th neighbor.
    pub trades: Vec<Vec<f64>>,
    pub price: EdgeSeries,
    pub z: EdgeSeries,
    /// `v[k][t][edge]` for the `k`-th neighbor.
    pub v: Vec<EdgeSeries>,
}

impl AgentState {
    pub fn zeros(horizon: usize, degree: usize, edges: usize) -> Self {
        let series = vec![vec![0.0; edges]; horizon];
        Self {
            iteration: 0,
            schedule: None,
            trades: vec![vec![0.0; degree]; horizon],
            price: series.clone(),
            z: series.clone(),
            v: vec![series; degree],
        }
    }

    /// `Σⱼ vᵢⱼ` at slot `t`.
    pub fn v_sum(&self, t: usize) -> Vec<f64> {
        let edges = self.z[t].len();
        let mut sum = vec![0.0; edges];
        for vk in &self.v {
            for (s, x) in sum.iter_mut().zip(&vk[t]) {
                *s += x;
            }
        }
        sum
    }
}

/// `π⁽ⁱ⁾ = (2 Σⱼ vᵢⱼ − z/c + Mᵢe/c) / (2n)` for one slot.
pub fn price_estimate(v_sum: &[f64], z: &[f64], mapped_trades: &[f64], degree: usize, penalty: f64) -> Vec<f64> {
    let scale = 1.0 / (2.0 * degree.max(1) as f64);
    v_sum
        .iter()
        .zip(z)
        .zip(mapped_trades)
        .map(|((v, z), me)| scale * (2.0 * v - z / penalty + me / penalty))
        .collect()
}

/// Elementwise mean of two price estimates.
pub fn consensus_update(own: &[f64], neighbor: &[f64]) -> Vec<f64> {
    own.iter().zip(neighbor).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// Adds `2c Σ (π − v)` over the given (active-link) auxiliaries to `z`.
pub fn dual_update(z: &mut [f64], own: &[f64], active_v: &[&[f64]], penalty: f64) {
    for v in active_v {
        for ((zk, p), vk) in z.iter_mut().zip(own).zip(v.iter()) {
            *zk += 2.0 * penalty * (p - vk);
        }
    }
}

/// One building agent: immutable local data plus its iterates.
#[derive(Debug, Clone)]
pub struct Agent {
    pub index: usize,
    pub params: BuildingParams,
    pub profile: BuildingProfile,
    topology: Arc<Topology>,
    base: QpProblem,
    layout: BuildingLayout,
    neighbor_ids: Vec<String>,
    pub state: AgentState,
    qp_settings: QpSettings,
    last_x: Option<DVector<f64>>,
}

impl Agent {
    pub fn new(
        index: usize,
        params: BuildingParams,
        profile: BuildingProfile,
        topology: Arc<Topology>,
    ) -> Result<Self, AgentError> {
        let degree = topology.degree(index);
        let (base, layout) = build_feasible_set(&params, &profile, degree)?;
        let state = AgentState::zeros(layout.horizon, degree, topology.num_edges());
        Ok(Self {
            index,
            neighbor_ids: topology.neighbor_ids(index),
            params,
            profile,
            topology,
            base,
            layout,
            state,
            qp_settings: QpSettings::with_tolerance(1e-8),
            last_x: None,
        })
    }

    pub fn degree(&self) -> usize {
        self.topology.degree(self.index)
    }

    pub fn layout(&self) -> &BuildingLayout {
        &self.layout
    }

    pub fn id(&self) -> &str {
        &self.params.id
    }

    /// The local QP of the primal update for the current auxiliaries.
    pub fn primal_problem(&self, penalty: f64) -> QpProblem {
        let mut p = self.base.clone();
        let n = self.degree();
        if n == 0 {
            return p;
        }
        let weight = penalty / (4.0 * n as f64);
        let incident = self.topology.incident_edges(self.index);
        for t in 0..self.layout.horizon {
            let v_sum = self.state.v_sum(t);
            for (edge, (&z, &vs)) in self.state.z[t].iter().zip(&v_sum).enumerate() {
                // ‖(1/c)Me − w‖² with w = z/c − 2Σv
                let target = z / penalty - 2.0 * vs;
                match incident.iter().position(|&e| e == edge) {
                    Some(k) => {
                        let idx = self.layout.trade(t, k);
                        let coef = 1.0 / penalty;
                        p.quad[(idx, idx)] += 2.0 * weight * coef * coef;
                        p.lin[idx] -= 2.0 * weight * target * coef;
                        p.offset += weight * target * target;
                    }
                    None => p.offset += weight * target * target,
                }
            }
        }
        p
    }

    fn solve_local(&mut self, problem: &QpProblem) -> Result<QpSolution, AgentError> {
        let mut settings = self.qp_settings.clone();
        settings.warm_start = self.last_x.clone().map(|x| WarmStart { x });
        let sol = qp::solve(problem, &settings).map_err(|source| AgentError::Qp {
            building: self.params.id.clone(),
            source,
        })?;
        if !sol.is_optimal() {
            return Err(AgentError::Unsolved {
                building: self.params.id.clone(),
                status: sol.status,
                row: worst_row(problem, &sol.x),
            });
        }
        self.last_x = Some(sol.x.clone());
        Ok(sol)
    }

    /// Primal update: new schedule and trades.
    pub fn local_primal_update(&mut self, penalty: f64) -> Result<(), AgentError> {
        let problem = self.primal_problem(penalty);
        let sol = self.solve_local(&problem)?;
        let sched = self
            .layout
            .extract(&self.params.id, &self.neighbor_ids, sol.x.as_slice());
        self.state.trades = (0..self.layout.horizon)
            .map(|t| sched.trades.iter().map(|row| row[t]).collect())
            .collect();
        self.state.schedule = Some(sched);
        self.state.iteration += 1;
        Ok(())
    }

    /// Price update from the fresh trades and the previous auxiliaries.
    pub fn price_update(&mut self, penalty: f64) {
        let n = self.degree();
        self.state.price = (0..self.layout.horizon)
            .map(|t| {
                let mapped = self.topology.map_trades(self.index, &self.state.trades[t]);
                price_estimate(&self.state.v_sum(t), &self.state.z[t], &mapped, n, penalty)
            })
            .collect();
    }

    /// Consensus and dual updates given the prices received over active links.
    /// Auxiliaries of silent neighbors are carried over unchanged.
    pub fn consensus_dual_update(&mut self, inbox: &[(usize, Arc<EdgeSeries>)], penalty: f64) {
        let mut active_slots = Vec::with_capacity(inbox.len());
        for (j, msg) in inbox {
            let k = self
                .topology
                .neighbor_slot(self.index, *j)
                .expect("message from a non-neighbor");
            for t in 0..self.layout.horizon {
                self.state.v[k][t] = consensus_update(&self.state.price[t], &msg[t]);
            }
            active_slots.push(k);
        }
        for t in 0..self.layout.horizon {
            let vs: Vec<&[f64]> = active_slots
                .iter()
                .map(|&k| self.state.v[k][t].as_slice())
                .collect();
            dual_update(&mut self.state.z[t], &self.state.price[t], &vs, penalty);
        }
    }

    /// Re-solves the local problem with trades pinned to `trades[t][k]`.
    pub fn settle(&self, trades: &[Vec<f64>]) -> Result<BuildingSchedule, AgentError> {
        let mut p = self.base.clone();
        for (t, row) in trades.iter().enumerate() {
            for (k, &e) in row.iter().enumerate() {
                let idx = self.layout.trade(t, k);
                let r = p
                    .ineq_names
                    .iter()
                    .position(|name| name == &format!("bound[{}]", p.var_names[idx]))
                    .expect("trade bound row");
                p.ineq_lower[r] = e;
                p.ineq_upper[r] = e;
            }
        }
        let sol = qp::solve(&p, &self.qp_settings).map_err(|source| AgentError::Qp {
            building: self.params.id.clone(),
            source,
        })?;
        if !sol.is_optimal() {
            return Err(AgentError::Unsolved {
                building: self.params.id.clone(),
                status: sol.status,
                row: worst_row(&p, &sol.x),
            });
        }
        Ok(self
            .layout
            .extract(&self.params.id, &self.neighbor_ids, sol.x.as_slice()))
    }
}

/// Name of the constraint row with the largest violation at `x`.
fn worst_row(problem: &QpProblem, x: &DVector<f64>) -> String {
    let mut worst = (0.0, String::from("none"));
    if problem.num_eq() > 0 {
        let r = &problem.eq_matrix * x - &problem.eq_rhs;
        for (k, v) in r.iter().enumerate() {
            if v.abs() > worst.0 {
                worst = (v.abs(), problem.eq_names[k].clone());
            }
        }
    }
    if problem.num_ineq() > 0 {
        let gx = &problem.ineq_matrix * x;
        for k in 0..problem.num_ineq() {
            let v = (problem.ineq_lower[k] - gx[k]).max(gx[k] - problem.ineq_upper[k]);
            if v > worst.0 {
                worst = (v, problem.ineq_names[k].clone());
            }
        }
    }
    worst.1
}
