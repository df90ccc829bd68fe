//! Simulated lossy message bus between neighboring agents.
//!
//! A link is the failing unit: in every iteration each edge is either active
//! (both endpoints receive each other's message) or inactive (neither does).
//! The active set is drawn once per iteration from a ChaCha8 stream selected
//! by the iteration number, with one uniform draw per edge in canonical edge
//! order, so the sequence depends only on the seed and never on the order in
//! which agents run.

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::topology::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("failure probability {0} outside [0, 1)")]
    Probability(f64),
    #[error("per-link probabilities given for {got} links, topology has {expected}")]
    LinkCount { expected: usize, got: usize },
    #[error("agent {agent} posted twice in iteration {iteration}")]
    DuplicatePost { agent: usize, iteration: usize },
    #[error("agent {agent} has no message for iteration {iteration}")]
    MissingPost { agent: usize, iteration: usize },
    #[error("scripted link schedule is empty")]
    EmptyScript,
}

/// Bernoulli link failures with per-link probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    /// Failure probability per edge, canonical order.
    probs: Vec<f64>,
    seed: u64,
}

impl LossModel {
    pub fn uniform(num_edges: usize, prob: f64, seed: u64) -> Result<Self, NetworkError> {
        Self::per_link(vec![prob; num_edges], seed)
    }

    pub fn per_link(probs: Vec<f64>, seed: u64) -> Result<Self, NetworkError> {
        if let Some(&p) = probs.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(NetworkError::Probability(p));
        }
        Ok(Self { probs, seed })
    }

    pub fn ideal(num_edges: usize) -> Self {
        Self {
            probs: vec![0.0; num_edges],
            seed: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn draw_active_links(&self, iteration: usize) -> ActiveLinkSet {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(iteration as u64);
        let active = self
            .probs
            .iter()
            .map(|&p| rng.random::<f64>() >= p)
            .collect();
        ActiveLinkSet { iteration, active }
    }
}

/// The links whose exchange succeeds in one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveLinkSet {
    pub iteration: usize,
    /// One flag per edge in canonical order.
    pub active: Vec<bool>,
}

impl ActiveLinkSet {
    pub fn all(iteration: usize, num_edges: usize) -> Self {
        Self {
            iteration,
            active: vec![true; num_edges],
        }
    }

    pub fn is_active(&self, edge: usize) -> bool {
        self.active[edge]
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

/// Source of the per-iteration active link sets.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkPolicy {
    Lossy(LossModel),
    /// Exactly one link active per iteration, cycling through canonical order.
    RoundRobin,
    /// Explicit edge lists, repeated cyclically.
    Scripted(Vec<Vec<usize>>),
}

impl LinkPolicy {
    pub fn active_links(&self, iteration: usize, num_edges: usize) -> ActiveLinkSet {
        match self {
            LinkPolicy::Lossy(model) => model.draw_active_links(iteration),
            LinkPolicy::RoundRobin => {
                let mut active = vec![false; num_edges];
                if num_edges > 0 {
                    // iterations are 1-based
                    active[(iteration + num_edges - 1) % num_edges] = true;
                }
                ActiveLinkSet { iteration, active }
            }
            LinkPolicy::Scripted(script) => {
                let mut active = vec![false; num_edges];
                if !script.is_empty() {
                    for &e in &script[(iteration + script.len() - 1) % script.len()] {
                        active[e] = true;
                    }
                }
                ActiveLinkSet { iteration, active }
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            LinkPolicy::Lossy(m) => Some(m.seed()),
            _ => None,
        }
    }
}

/// Delivers `messages[j]` to every neighbor `i` of `j` whose link is active.
/// Inboxes list `(neighbor, message)` in sorted neighbor order.
pub fn exchange<T: Clone>(
    topology: &Topology,
    active: &ActiveLinkSet,
    messages: &[T],
) -> Vec<Vec<(usize, T)>> {
    (0..topology.num_nodes())
        .map(|i| {
            topology
                .neighbors(i)
                .iter()
                .zip(topology.incident_edges(i))
                .filter(|(_, &e)| active.is_active(e))
                .map(|(&j, _)| (j, messages[j].clone()))
                .collect()
        })
        .collect()
}

/// Shared mailbox, one slot per agent, safe to post to from worker threads.
/// Latest `(iteration, message)` posted by one agent.
type Slot<T> = Mutex<Option<(usize, Arc<T>)>>;

#[derive(Debug)]
pub struct MessageBus<T> {
    slots: Vec<Slot<T>>,
}

impl<T> MessageBus<T> {
    pub fn new(agents: usize) -> Self {
        Self {
            slots: (0..agents).map(|_| Mutex::new(None)).collect(),
        }
    }

    pub fn post(&self, agent: usize, iteration: usize, message: T) -> Result<(), NetworkError> {
        let mut slot = self.slots[agent].lock().expect("bus slot poisoned");
        if matches!(*slot, Some((k, _)) if k == iteration) {
            return Err(NetworkError::DuplicatePost { agent, iteration });
        }
        *slot = Some((iteration, Arc::new(message)));
        Ok(())
    }

    fn fetch(&self, agent: usize, iteration: usize) -> Result<Arc<T>, NetworkError> {
        match &*self.slots[agent].lock().expect("bus slot poisoned") {
            Some((k, msg)) if *k == iteration => Ok(Arc::clone(msg)),
            _ => Err(NetworkError::MissingPost { agent, iteration }),
        }
    }

    /// Messages of iteration `iteration` from `agent`'s neighbors over active links.
    pub fn receive(
        &self,
        topology: &Topology,
        active: &ActiveLinkSet,
        agent: usize,
    ) -> Result<Vec<(usize, Arc<T>)>, NetworkError> {
        topology
            .neighbors(agent)
            .iter()
            .zip(topology.incident_edges(agent))
            .filter(|(_, &e)| active.is_active(e))
            .map(|(&j, _)| Ok((j, self.fetch(j, active.iteration)?)))
            .collect()
    }

    /// Every agent's message of `iteration`, for monitoring.
    pub fn snapshot(&self, iteration: usize) -> Result<Vec<Arc<T>>, NetworkError> {
        (0..self.slots.len())
            .map(|a| self.fetch(a, iteration))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k4() -> Topology {
        Topology::complete((1..=4).map(|k| format!("B{k}")).collect()).unwrap()
    }

    #[test]
    fn ideal_network_is_fully_active() {
        let m = LossModel::uniform(6, 0.0, 99).unwrap();
        for k in 1..50 {
            assert_eq!(m.draw_active_links(k).count(), 6);
        }
    }

    #[test]
    fn probability_bounds() {
        assert!(LossModel::uniform(6, 1.0, 1).is_err());
        assert!(LossModel::uniform(6, -0.1, 1).is_err());
        let m = LossModel::uniform(6, 0.999, 1).unwrap();
        let total: usize = (1..=200).map(|k| m.draw_active_links(k).count()).sum();
        assert!(total < 20, "{total} active draws");
    }

    #[test]
    fn active_fraction_near_nominal() {
        let m = LossModel::uniform(6, 0.2, 2024).unwrap();
        let total: usize = (1..=100).map(|k| m.draw_active_links(k).count()).sum();
        let frac = total as f64 / 600.0;
        assert!((frac - 0.8).abs() <= 0.05, "active fraction {frac}");
    }

    #[test]
    fn per_link_counts_pass_chi_square() {
        // 6 links × 2000 iterations at ξ = 0.3; chi-square with 6 degrees of
        // freedom, 99.9% critical value 22.46.
        let (iters, xi) = (2000usize, 0.3);
        let m = LossModel::uniform(6, xi, 7).unwrap();
        let mut counts = [0usize; 6];
        for k in 1..=iters {
            for (c, a) in counts.iter_mut().zip(m.draw_active_links(k).active) {
                *c += a as usize;
            }
        }
        let expected = iters as f64 * (1.0 - xi);
        let var = iters as f64 * xi * (1.0 - xi);
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / var)
            .sum();
        assert!(chi2 < 22.46, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn draws_are_reproducible() {
        let a = LossModel::uniform(6, 0.4, 5).unwrap();
        let b = LossModel::uniform(6, 0.4, 5).unwrap();
        let seq_a: Vec<_> = (1..100).map(|k| a.draw_active_links(k)).collect();
        // Draw out of order: the result must not depend on call order.
        let mut seq_b: Vec<_> = (1..100).rev().map(|k| b.draw_active_links(k)).collect();
        seq_b.reverse();
        assert_eq!(seq_a, seq_b);
        let c = LossModel::uniform(6, 0.4, 6).unwrap();
        assert_ne!(seq_a, (1..100).map(|k| c.draw_active_links(k)).collect::<Vec<_>>());
    }

    #[test]
    fn exchange_delivery_is_symmetric() {
        let t = k4();
        let m = LossModel::uniform(6, 0.5, 11).unwrap();
        let msgs: Vec<usize> = (0..4).collect();
        for k in 1..30 {
            let phi = m.draw_active_links(k);
            let inbox = exchange(&t, &phi, &msgs);
            for i in 0..4 {
                for &j in t.neighbors(i) {
                    let i_hears_j = inbox[i].iter().any(|(from, _)| *from == j);
                    let j_hears_i = inbox[j].iter().any(|(from, _)| *from == i);
                    assert_eq!(i_hears_j, j_hears_i);
                    assert_eq!(i_hears_j, phi.is_active(t.edge_index(i, j).unwrap()));
                }
            }
        }
    }

    #[test]
    fn exchange_degenerate_sets() {
        let t = k4();
        let msgs = vec!["a", "b", "c", "d"];
        let full = exchange(&t, &ActiveLinkSet::all(1, 6), &msgs);
        assert!(full.iter().all(|inbox| inbox.len() == 3));
        let none = exchange(
            &t,
            &ActiveLinkSet {
                iteration: 1,
                active: vec![false; 6],
            },
            &msgs,
        );
        assert!(none.iter().all(Vec::is_empty));
        let one = LinkPolicy::Scripted(vec![vec![t.edge_index(1, 3).unwrap()]]).active_links(1, 6);
        let inbox = exchange(&t, &one, &msgs);
        assert_eq!(inbox[1], vec![(3, "d")]);
        assert_eq!(inbox[3], vec![(1, "b")]);
        assert!(inbox[0].is_empty() && inbox[2].is_empty());
    }

    #[test]
    fn round_robin_cycles_single_links() {
        for k in 1..=12 {
            let set = LinkPolicy::RoundRobin.active_links(k, 6);
            assert_eq!(set.count(), 1);
            assert!(set.is_active((k - 1) % 6));
        }
    }

    #[test]
    fn bus_rejects_double_post() {
        let bus = MessageBus::new(2);
        bus.post(0, 1, 5).unwrap();
        assert_eq!(
            bus.post(0, 1, 6).unwrap_err(),
            NetworkError::DuplicatePost {
                agent: 0,
                iteration: 1
            }
        );
        bus.post(0, 2, 7).unwrap();
    }

    #[test]
    fn bus_receive_requires_current_posts() {
        let t = Topology::complete(vec!["A".into(), "B".into()]).unwrap();
        let bus = MessageBus::new(2);
        bus.post(0, 1, "from A").unwrap();
        let all = ActiveLinkSet::all(1, 1);
        assert!(matches!(
            bus.receive(&t, &all, 0),
            Err(NetworkError::MissingPost { agent: 1, .. })
        ));
        bus.post(1, 1, "from B").unwrap();
        let got = bus.receive(&t, &all, 0).unwrap();
        assert_eq!(*got[0].1, "from B");
        let off = ActiveLinkSet {
            iteration: 1,
            active: vec![false],
        };
        assert!(bus.receive(&t, &off, 0).unwrap().is_empty());
    }
}
