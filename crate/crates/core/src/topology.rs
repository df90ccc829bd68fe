//! Trading graph, canonical edge order and node-to-edge mapping matrices.
//!
//! Nodes are numbered by their position in the community list. Edges are
//! stored as `(i, j)` with `i < j` and sorted lexicographically, which is the
//! canonical order used by every edge-indexed vector and every output file.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("topology has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("edge references unknown node {0}")]
    UnknownNode(String),
    #[error("self-loop on node {0}")]
    SelfLoop(String),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(String, String),
    #[error("graph is disconnected: {0} unreachable from {1}")]
    Disconnected(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    ids: Vec<String>,
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor indices per node.
    neighbors: Vec<Vec<usize>>,
    /// `incident[i][k]` is the edge joining `i` and `neighbors[i][k]`.
    incident: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from node ids and an edge list given by id.
    pub fn new<S: AsRef<str>>(ids: Vec<String>, edges: &[(S, S)]) -> Result<Self, TopologyError> {
        let index = |name: &str| {
            ids.iter()
                .position(|id| id == name)
                .ok_or_else(|| TopologyError::UnknownNode(name.to_string()))
        };
        let pairs = edges
            .iter()
            .map(|(a, b)| Ok((index(a.as_ref())?, index(b.as_ref())?)))
            .collect::<Result<Vec<_>, TopologyError>>()?;
        Self::from_indices(ids, &pairs)
    }

    pub fn from_indices(ids: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if ids.is_empty() {
            return Err(TopologyError::Empty);
        }
        for (k, id) in ids.iter().enumerate() {
            if ids[..k].contains(id) {
                return Err(TopologyError::DuplicateNode(id.clone()));
            }
        }
        let n = ids.len();
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(TopologyError::UnknownNode(format!("#{}", a.max(b))));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(ids[a].clone()));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            let (a, b) = w[0];
            return Err(TopologyError::DuplicateEdge(ids[a].clone(), ids[b].clone()));
        }

        let mut neighbors = vec![Vec::new(); n];
        let mut incident = vec![Vec::new(); n];
        for (e, &(a, b)) in edges.iter().enumerate() {
            neighbors[a].push((b, e));
            neighbors[b].push((a, e));
        }
        let mut nbr_lists = Vec::with_capacity(n);
        for (i, mut list) in neighbors.into_iter().enumerate() {
            list.sort_unstable();
            incident[i] = list.iter().map(|&(_, e)| e).collect();
            nbr_lists.push(list.into_iter().map(|(j, _)| j).collect::<Vec<_>>());
        }

        let topo = Self {
            ids,
            edges,
            neighbors: nbr_lists,
            incident,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    /// Every pair of nodes connected.
    pub fn complete(ids: Vec<String>) -> Result<Self, TopologyError> {
        let n = ids.len();
        let pairs: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::from_indices(ids, &pairs)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let n = self.ids.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(TopologyError::Disconnected(
                self.ids[k].clone(),
                self.ids[0].clone(),
            )),
            None => Ok(()),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `"B1-B2"` style label of an edge.
    pub fn edge_label(&self, e: usize) -> String {
        let (a, b) = self.edges[e];
        format!("{}-{}", self.ids[a], self.ids[b])
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn neighbor_ids(&self, i: usize) -> Vec<String> {
        self.neighbors[i].iter().map(|&j| self.ids[j].clone()).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Edge indices incident to `i`, aligned with [`Self::neighbors`].
    pub fn incident_edges(&self, i: usize) -> &[usize] {
        &self.incident[i]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    /// Position of `j` in `i`'s sorted neighbor list.
    pub fn neighbor_slot(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors[i].binary_search(&j).ok()
    }

    /// The `|ℰ| × |𝒩ᵢ|` 0/1 matrix sending `i`'s trade vector to edge space.
    pub fn mapping_matrix(&self, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.num_edges(), self.degree(i));
        for (k, &e) in self.incident[i].iter().enumerate() {
            m[(e, k)] = 1.0;
        }
        m
    }

    /// `M_i e` without forming the matrix.
    pub fn map_trades(&self, i: usize, trades: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_edges()];
        for (k, &e) in self.incident[i].iter().enumerate() {
            out[e] += trades[k];
        }
        out
    }

    /// `M_iᵀ π`: the prices of the edges incident to `i`, in neighbor order.
    pub fn edge_price_slice(&self, i: usize, prices: &[f64]) -> Vec<f64> {
        assert_eq!(prices.len(), self.num_edges(), "price vector length");
        self.incident[i].iter().map(|&e| prices[e]).collect()
    }
}

/// Builds all mapping matrices at once.
pub fn build_mapping(topology: &Topology) -> Vec<DMatrix<f64>> {
    (0..topology.num_nodes())
        .map(|i| topology.mapping_matrix(i))
        .collect()
}
