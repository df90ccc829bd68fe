//! Drives the communication-failure-robust DC-ADMM across all agents.
//!
//! One worker thread per agent. Each iteration has two barriers:
//!
//! 1. every agent has run its primal and price updates and posted `π⁽ⁱ⁾`;
//! 2. every agent has run its consensus and dual updates over the active
//!    links of this iteration and posted its trades and price.
//!
//! After the second barrier each worker computes the residuals from the same
//! posted snapshot, so all workers reach the same stopping decision without a
//! coordinator round-trip. The active link set is a pure function of the
//! iteration number, so it is drawn independently (and identically) by each
//! worker.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::agent::{Agent, AgentError, AlgoParams, EdgeSeries, StoppingRule};
use crate::building::{internal_cost, BuildingSchedule, CostBreakdown};
use crate::community::Community;
use crate::network::{ActiveLinkSet, LinkPolicy, MessageBus, NetworkError};
use crate::topology::Topology;

/// Default primal/consensus residual threshold for the convergence flag.
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Distributed,
    Centralized,
    Baseline,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Distributed => "distributed",
            Method::Centralized => "centralized",
            Method::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    pub iteration: usize,
    /// `maxₜ ‖Σᵢ Mᵢeᵢ,ₜ‖∞`, kW
    pub primal: f64,
    /// `maxₜ max_(i,j)∈ℰ ‖π⁽ⁱ⁾ₜ − π⁽ʲ⁾ₜ‖∞`, $/kWh
    pub consensus: f64,
    pub active_links: usize,
}

impl ResidualRecord {
    pub fn max(&self) -> f64 {
        self.primal.max(self.consensus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingCost {
    pub id: String,
    pub internal: CostBreakdown,
    /// Net P2P payment, positive when the building pays.
    pub payment: f64,
}

impl BuildingCost {
    pub fn total(&self) -> f64 {
        self.internal.total() + self.payment
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub building_ids: Vec<String>,
    pub edge_labels: Vec<String>,
    pub schedules: Vec<BuildingSchedule>,
    /// `[edge][t]`: import of the lower-index endpoint from the other one.
    pub edge_trades: Vec<Vec<f64>>,
    /// `[edge][t]` settlement price; `None` where no price is defined.
    pub edge_prices: Vec<Vec<Option<f64>>>,
    pub costs: Vec<BuildingCost>,
    pub social_cost: f64,
    pub residuals: Vec<ResidualRecord>,
    pub links: Vec<ActiveLinkSet>,
    pub iterations: usize,
    pub seed: Option<u64>,
    pub converged: bool,
    /// `max |eᵢʲ + eⱼⁱ|` at the last iteration, before cleaning.
    pub pre_clean_asymmetry: f64,
    /// Whether schedules were re-solved against the cleaned trades.
    pub settled: bool,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn payment_sum(&self) -> f64 {
        self.costs.iter().map(|c| c.payment).sum()
    }

    /// First iteration at which both residuals are at or below `threshold`.
    pub fn iterations_to_reach(&self, threshold: f64) -> Option<usize> {
        self.residuals
            .iter()
            .find(|r| r.max() <= threshold)
            .map(|r| r.iteration)
    }

    pub fn final_residual(&self) -> Option<ResidualRecord> {
        self.residuals.last().copied()
    }
}

/// Per-building cost split with payments settled at the given edge prices.
pub fn settle_costs(
    community: &Community,
    schedules: &[BuildingSchedule],
    edge_trades: &[Vec<f64>],
    edge_prices: &[Vec<Option<f64>>],
) -> Vec<BuildingCost> {
    let topo = &community.topology;
    let mut payments = vec![0.0; community.len()];
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        for (t, &trade) in edge_trades[e].iter().enumerate() {
            if let Some(price) = edge_prices[e][t] {
                payments[a] += price * trade;
                payments[b] -= price * trade;
            }
        }
    }
    community
        .buildings
        .iter()
        .zip(schedules)
        .zip(payments)
        .map(|((params, sched), payment)| BuildingCost {
            id: params.id.clone(),
            internal: internal_cost(params, sched),
            payment,
        })
        .collect()
}

#[derive(Debug)]
struct Report {
    /// `[t][k]`
    trades: Vec<Vec<f64>>,
    price: EdgeSeries,
}

fn residuals(topo: &Topology, reports: &[Arc<Report>], horizon: usize) -> (f64, f64) {
    let mut primal = 0.0_f64;
    let mut consensus = 0.0_f64;
    for t in 0..horizon {
        let mut sum = vec![0.0; topo.num_edges()];
        for (i, rep) in reports.iter().enumerate() {
            for (s, v) in sum.iter_mut().zip(topo.map_trades(i, &rep.trades[t])) {
                *s += v;
            }
        }
        primal = sum.iter().fold(primal, |m, v| m.max(v.abs()));
        for &(a, b) in topo.edges() {
            for (pa, pb) in reports[a].price[t].iter().zip(&reports[b].price[t]) {
                consensus = consensus.max((pa - pb).abs());
            }
        }
    }
    (primal, consensus)
}

struct Shared {
    prices: MessageBus<EdgeSeries>,
    reports: MessageBus<Report>,
    barrier: Barrier,
    /// First phase in which a worker failed, `usize::MAX` while none has.
    abort: AtomicUsize,
    errors: Mutex<Vec<(usize, RunError)>>,
    log: Mutex<Vec<(ResidualRecord, ActiveLinkSet)>>,
}

fn worker(
    mut agent: Agent,
    shared: &Shared,
    topo: &Topology,
    algo: &AlgoParams,
    policy: &LinkPolicy,
) -> Agent {
    let i = agent.index;
    let c = algo.penalty;
    let horizon = agent.layout().horizon;
    // A fast worker may fail in phase p+1 before a slow one has checked for
    // failures after barrier p, so each check only looks at its own phase.
    let fail = |phase: usize, err: RunError| {
        shared.errors.lock().expect("error log").push((i, err));
        shared.abort.fetch_min(phase, Ordering::SeqCst);
    };
    let aborted = |phase: usize| shared.abort.load(Ordering::SeqCst) <= phase;
    for k in 1..=algo.max_iterations {
        let (first, second) = (2 * k, 2 * k + 1);
        match agent.local_primal_update(c) {
            Ok(()) => {
                agent.price_update(c);
                if let Err(e) = shared.prices.post(i, k, agent.state.price.clone()) {
                    fail(first, e.into());
                }
            }
            Err(e) => fail(first, e.into()),
        }
        shared.barrier.wait();
        if aborted(first) {
            break;
        }

        let phi = policy.active_links(k, topo.num_edges());
        match shared.prices.receive(topo, &phi, i) {
            Ok(inbox) => agent.consensus_dual_update(&inbox, c),
            Err(e) => fail(second, e.into()),
        }
        let report = Report {
            trades: agent.state.trades.clone(),
            price: agent.state.price.clone(),
        };
        if let Err(e) = shared.reports.post(i, k, report) {
            fail(second, e.into());
        }
        shared.barrier.wait();
        if aborted(second) {
            break;
        }

        let snapshot = match shared.reports.snapshot(k) {
            Ok(s) => s,
            Err(e) => {
                // Every worker sees the same snapshot, so all of them stop here.
                fail(second, e.into());
                break;
            }
        };
        let (primal, consensus) = residuals(topo, &snapshot, horizon);
        let record = ResidualRecord {
            iteration: k,
            primal,
            consensus,
            active_links: phi.count(),
        };
        if i == 0 {
            shared.log.lock().expect("residual log").push((record, phi));
        }
        if let StoppingRule::Residual(eps) = algo.stopping {
            if record.max() <= eps {
                break;
            }
        }
    }
    agent
}

/// Runs the distributed algorithm to its stopping rule and assembles the
/// community result with cleaned (antisymmetric) trades.
pub fn run_distributed(
    community: &Community,
    algo: &AlgoParams,
    policy: &LinkPolicy,
    converge_tol: f64,
) -> Result<RunResult, RunError> {
    let start = Instant::now();
    let topo = Arc::new(community.topology.clone());
    let n = community.len();
    let agents = community
        .buildings
        .iter()
        .zip(&community.profiles)
        .enumerate()
        .map(|(i, (b, p))| Agent::new(i, b.clone(), p.clone(), Arc::clone(&topo)))
        .collect::<Result<Vec<_>, _>>()?;

    let shared = Shared {
        prices: MessageBus::new(n),
        reports: MessageBus::new(n),
        barrier: Barrier::new(n),
        abort: AtomicUsize::new(usize::MAX),
        errors: Mutex::new(Vec::new()),
        log: Mutex::new(Vec::new()),
    };
    let agents: Vec<Agent> = std::thread::scope(|scope| {
        let handles: Vec<_> = agents
            .into_iter()
            .map(|agent| {
                let (shared, topo) = (&shared, &*topo);
                scope.spawn(move || worker(agent, shared, topo, algo, policy))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("agent worker panicked"))
            .collect()
    });

    let mut errors = shared.errors.into_inner().expect("error log");
    if !errors.is_empty() {
        errors.sort_by_key(|(i, _)| *i);
        return Err(errors.swap_remove(0).1);
    }
    let (residuals, links): (Vec<_>, Vec<_>) =
        shared.log.into_inner().expect("residual log").into_iter().unzip();
    let converged = residuals
        .last()
        .is_some_and(|r| r.primal <= converge_tol && r.consensus <= converge_tol);

    // Clean: each edge gets the antisymmetric part of its two trades and the
    // mean of its two endpoint price estimates.
    let horizon = community.horizon();
    let mut edge_trades = vec![vec![0.0; horizon]; topo.num_edges()];
    let mut edge_prices = vec![vec![None; horizon]; topo.num_edges()];
    let mut asymmetry = 0.0_f64;
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        let ka = topo.neighbor_slot(a, b).expect("edge endpoint");
        let kb = topo.neighbor_slot(b, a).expect("edge endpoint");
        for t in 0..horizon {
            let ea = agents[a].state.trades[t][ka];
            let eb = agents[b].state.trades[t][kb];
            asymmetry = asymmetry.max((ea + eb).abs());
            edge_trades[e][t] = 0.5 * (ea - eb);
            edge_prices[e][t] =
                Some(0.5 * (agents[a].state.price[t][e] + agents[b].state.price[t][e]));
        }
    }

    let mut settled = true;
    let mut schedules = Vec::with_capacity(n);
    for agent in &agents {
        let i = agent.index;
        let pinned: Vec<Vec<f64>> = (0..horizon)
            .map(|t| {
                topo.neighbors(i)
                    .iter()
                    .zip(topo.incident_edges(i))
                    .map(|(&j, &e)| if i < j { edge_trades[e][t] } else { -edge_trades[e][t] })
                    .collect()
            })
            .collect();
        match agent.settle(&pinned) {
            Ok(s) => schedules.push(s),
            Err(_) => {
                settled = false;
                schedules.push(agent.state.schedule.clone().unwrap_or_default());
            }
        }
    }

    let costs = settle_costs(community, &schedules, &edge_trades, &edge_prices);
    let social_cost = costs.iter().map(|c| c.internal.total()).sum();
    Ok(RunResult {
        method: Method::Distributed,
        building_ids: topo.ids().to_vec(),
        edge_labels: (0..topo.num_edges()).map(|e| topo.edge_label(e)).collect(),
        schedules,
        edge_trades,
        edge_prices,
        costs,
        social_cost,
        iterations: residuals.len(),
        residuals,
        links,
        seed: policy.seed(),
        converged,
        pre_clean_asymmetry: asymmetry,
        settled,
        wall_time: start.elapsed(),
    })
}
