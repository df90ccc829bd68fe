#![allow(dead_code)]

use std::path::PathBuf;

use energy_coop::agent::{AlgoParams, StoppingRule};
use energy_coop::building::{BuildingParams, BuildingProfile, GridParams, HvacParams};
use energy_coop::community::Community;
use energy_coop::network::{LinkPolicy, LossModel};
use energy_coop::scenario::{load_scenario, ScenarioFile};
use energy_coop::topology::Topology;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn bundled_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            if p.extension()? != "json" {
                return None;
            }
            Some(p.file_stem()?.to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

pub fn scenario(name: &str) -> ScenarioFile {
    load_scenario(scenario_dir().join(format!("{name}.json"))).expect("bundled scenario")
}

pub fn community(name: &str) -> Community {
    scenario(name).community().expect("bundled community")
}

pub fn fixed(file: &ScenarioFile, iterations: usize) -> AlgoParams {
    AlgoParams {
        penalty: file.algo.penalty,
        max_iterations: iterations,
        stopping: StoppingRule::Fixed,
    }
}

pub fn lossy(c: &Community, prob: f64, seed: u64) -> LinkPolicy {
    LinkPolicy::Lossy(LossModel::uniform(c.topology.num_edges(), prob, seed).unwrap())
}

/// HVAC that sits at the desired temperature with zero power when the
/// outdoor temperature equals it.
pub fn idle_hvac() -> HvacParams {
    HvacParams {
        thermal_capacity: 1.5,
        envelope_resistance: 1.33,
        efficiency: 0.15,
        discomfort_weight: 2.0,
        temp_min: 20.0,
        temp_max: 27.0,
        temp_desired: 23.5,
        temp_initial: None,
        power_max: 100.0,
    }
}

/// Two buildings, one slot: A has `surplus` kW of spare solar, B needs
/// `need` kW, no storage, idle HVAC.
pub fn exchange_toy(surplus: f64, need: f64, p2p_limit: f64) -> Community {
    let grid = GridParams {
        buy_price: vec![1.0],
        sell_price: vec![0.5],
        line_limit: 100.0,
        p2p_limit,
    };
    let building = |id: &str, has_solar| BuildingParams {
        id: id.into(),
        hvac: idle_hvac(),
        ess: None,
        grid: grid.clone(),
        has_solar,
    };
    Community {
        buildings: vec![building("A", true), building("B", false)],
        profiles: vec![
            BuildingProfile {
                solar: vec![10.0 + surplus],
                load: vec![10.0],
                outdoor_temp: vec![23.5],
            },
            BuildingProfile {
                solar: vec![0.0],
                load: vec![need],
                outdoor_temp: vec![23.5],
            },
        ],
        topology: Topology::new(vec!["A".into(), "B".into()], &[("A", "B")]).unwrap(),
    }
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
