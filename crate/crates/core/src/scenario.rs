//! Self-contained scenario files: buildings, tariffs, trading graph, inline
//! profiles, algorithm settings and the link-loss model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AlgoParams, StoppingRule};
use crate::building::{BuildingParams, BuildingProfile, EssParams, GridParams, HvacParams};
use crate::community::Community;
use crate::network::{LinkPolicy, LossModel};
use crate::orchestrator::DEFAULT_CONVERGENCE_TOL;
use crate::topology::Topology;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tariffs {
    /// μ_b[t], $/kWh
    pub buy_price: Vec<f64>,
    /// μ_s[t], $/kWh
    pub sell_price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSpec {
    pub id: String,
    #[serde(default = "yes")]
    pub has_solar: bool,
    /// kW
    pub line_limit: f64,
    /// kW, per neighbor
    pub p2p_limit: f64,
    pub hvac: HvacParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<EssParams>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    /// Undirected links between building ids.
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    /// kW
    pub solar: Vec<f64>,
    /// Non-HVAC load, kW
    pub load: Vec<f64>,
    /// °C
    pub outdoor_temp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoSpec {
    /// c
    pub penalty: f64,
    /// K
    pub max_iterations: usize,
    /// Stop early once both residuals reach this value. Absent: run all K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_residual: Option<f64>,
    /// Residual level at which a run is reported as converged.
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
}

fn default_convergence_tol() -> f64 {
    DEFAULT_CONVERGENCE_TOL
}

impl AlgoSpec {
    pub fn params(&self) -> AlgoParams {
        AlgoParams {
            penalty: self.penalty,
            max_iterations: self.max_iterations,
            stopping: self.stop_residual.map_or(StoppingRule::Fixed, StoppingRule::Residual),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    /// ξ, failure probability of every link without an override.
    #[serde(default)]
    pub prob: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-link overrides keyed by "A-B".
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_link: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub horizon: usize,
    pub tariffs: Tariffs,
    pub community: Vec<BuildingSpec>,
    pub topology: TopologySpec,
    pub profiles: BTreeMap<String, ProfileSpec>,
    pub algo: AlgoSpec,
    pub loss: LossSpec,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFile::from_json(&text)
}

impl ScenarioFile {
    /// Parses and validates; reports every validation error at once.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let horizon = self.horizon;
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if horizon == 0 {
            errs.push("horizon must be at least 1".into());
        }
        if self.community.is_empty() {
            errs.push("community has no buildings".into());
        }
        for (name, series) in [
            ("buy_price", &self.tariffs.buy_price),
            ("sell_price", &self.tariffs.sell_price),
        ] {
            if series.len() != horizon {
                errs.push(format!(
                    "length mismatch: tariffs.{name} has {} entries, horizon is {horizon}",
                    series.len()
                ));
            }
        }
        errs.extend(self.grid(0.0, 0.0).validate().into_iter().filter(|e| !e.contains("limit")));

        let mut seen = BTreeMap::new();
        for b in &self.community {
            if b.id.is_empty() {
                errs.push("building with empty id".into());
            }
            if seen.insert(b.id.as_str(), ()).is_some() {
                errs.push(format!("duplicate building id {}", b.id));
            }
            let grid = GridParams {
                buy_price: Vec::new(),
                sell_price: Vec::new(),
                line_limit: b.line_limit,
                p2p_limit: b.p2p_limit,
            };
            let own = b
                .hvac
                .validate()
                .into_iter()
                .chain(b.ess.iter().flat_map(EssParams::validate))
                .chain(grid.validate());
            errs.extend(own.map(|e| format!("building {}: {e}", b.id)));

            match self.profiles.get(&b.id) {
                None => errs.push(format!("missing profile for building {}", b.id)),
                Some(p) => {
                    for (name, series) in [
                        ("solar", &p.solar),
                        ("load", &p.load),
                        ("outdoor_temp", &p.outdoor_temp),
                    ] {
                        if series.len() != horizon {
                            errs.push(format!(
                                "length mismatch: building {} series {name} has {} entries, horizon is {horizon}",
                                b.id,
                                series.len()
                            ));
                        } else if series.iter().any(|v| !v.is_finite()) {
                            errs.push(format!("building {} series {name} is not finite", b.id));
                        } else if name != "outdoor_temp" && series.iter().any(|v| *v < 0.0) {
                            errs.push(format!("building {} series {name} is negative", b.id));
                        }
                    }
                }
            }
        }
        for id in self.profiles.keys() {
            if !seen.contains_key(id.as_str()) {
                errs.push(format!("profile for unknown building {id}"));
            }
        }

        match self.topology() {
            Err(e) => errs.push(format!("topology: {e}")),
            Ok(topo) => {
                for link in self.loss.per_link.keys() {
                    if !(0..topo.num_edges()).any(|e| topo.edge_label(e) == *link) {
                        errs.push(format!("loss override for unknown link {link}"));
                    }
                }
            }
        }
        for (what, p) in std::iter::once(("loss.prob".to_string(), self.loss.prob)).chain(
            self.loss
                .per_link
                .iter()
                .map(|(k, v)| (format!("loss.per_link.{k}"), *v)),
        ) {
            if !(0.0..1.0).contains(&p) {
                errs.push(format!("{what} must lie in [0, 1)"));
            }
        }
        errs.extend(self.algo.params().validate());
        if !(self.algo.convergence_tol > 0.0) {
            errs.push("algo.convergence_tol must be positive".into());
        }
        errs
    }

    fn grid(&self, line_limit: f64, p2p_limit: f64) -> GridParams {
        GridParams {
            buy_price: self.tariffs.buy_price.clone(),
            sell_price: self.tariffs.sell_price.clone(),
            line_limit,
            p2p_limit,
        }
    }

    pub fn topology(&self) -> Result<Topology, crate::topology::TopologyError> {
        let ids = self.community.iter().map(|b| b.id.clone()).collect();
        Topology::new(ids, &self.topology.edges)
    }

    /// The validated in-memory community, ordered as listed in the file.
    pub fn community(&self) -> Result<Community, ScenarioError> {
        self.check()?;
        let topology = self
            .topology()
            .map_err(|e| ScenarioError::Invalid(vec![format!("topology: {e}")]))?;
        let buildings = self
            .community
            .iter()
            .map(|b| BuildingParams {
                id: b.id.clone(),
                hvac: b.hvac.clone(),
                ess: b.ess.clone(),
                grid: self.grid(b.line_limit, b.p2p_limit),
                has_solar: b.has_solar,
            })
            .collect();
        let profiles = self
            .community
            .iter()
            .map(|b| {
                let p = &self.profiles[&b.id];
                BuildingProfile {
                    solar: p.solar.clone(),
                    load: p.load.clone(),
                    outdoor_temp: p.outdoor_temp.clone(),
                }
            })
            .collect();
        Ok(Community {
            buildings,
            profiles,
            topology,
        })
    }

    pub fn loss_model(&self, topology: &Topology) -> LossModel {
        let probs = (0..topology.num_edges())
            .map(|e| {
                self.loss
                    .per_link
                    .get(&topology.edge_label(e))
                    .copied()
                    .unwrap_or(self.loss.prob)
            })
            .collect();
        LossModel::per_link(probs, self.loss.seed).expect("probabilities validated")
    }

    pub fn link_policy(&self, topology: &Topology) -> LinkPolicy {
        LinkPolicy::Lossy(self.loss_model(topology))
    }
}
