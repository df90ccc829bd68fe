//! Building physics, cost functions and the per-building feasible set.
//!
//! Time slots last one hour, so kW and kWh are numerically interchangeable
//! per slot. Slots are indexed `0..T`; the initial state (indoor temperature,
//! state of charge) belongs to the instant before slot 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{QpBuilder, QpProblem};

/// Default HVAC power cap in kW. Large enough to never bind in practice.
pub const DEFAULT_HVAC_POWER_MAX: f64 = 1e4;

fn default_hvac_power_max() -> f64 {
    DEFAULT_HVAC_POWER_MAX
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("building {building}: profile has {got} slots, expected {expected}")]
    Horizon {
        building: String,
        expected: usize,
        got: usize,
    },
    #[error("building {building}: statically infeasible: {reason}")]
    Infeasible { building: String, reason: String },
}

/// First-order thermal model of a building with a cooling HVAC unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HvacParams {
    /// J, kWh/°C
    pub thermal_capacity: f64,
    /// R, °C/kWh
    pub envelope_resistance: f64,
    /// η
    pub efficiency: f64,
    /// β, $/°C²
    pub discomfort_weight: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub temp_desired: f64,
    /// Indoor temperature before the first slot. Defaults to `temp_desired`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_initial: Option<f64>,
    #[serde(default = "default_hvac_power_max")]
    pub power_max: f64,
}

impl HvacParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let finite = [
            ("thermal_capacity", self.thermal_capacity),
            ("envelope_resistance", self.envelope_resistance),
            ("efficiency", self.efficiency),
            ("discomfort_weight", self.discomfort_weight),
            ("temp_min", self.temp_min),
            ("temp_max", self.temp_max),
            ("temp_desired", self.temp_desired),
            ("power_max", self.power_max),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                errs.push(format!("hvac.{name} must be finite"));
            }
        }
        if !(self.thermal_capacity > 0.0) {
            errs.push("hvac.thermal_capacity must be positive".into());
        }
        if !(self.envelope_resistance > 0.0) {
            errs.push("hvac.envelope_resistance must be positive".into());
        }
        if !(self.efficiency > 0.0) {
            errs.push("hvac.efficiency must be positive".into());
        }
        if self.discomfort_weight < 0.0 {
            errs.push("hvac.discomfort_weight must be nonnegative".into());
        }
        if !(self.thermal_capacity * self.envelope_resistance > 1.0) {
            errs.push("hvac.thermal_capacity * envelope_resistance must exceed 1".into());
        }
        if !(self.temp_min <= self.temp_desired && self.temp_desired <= self.temp_max) {
            errs.push("hvac temperatures must satisfy temp_min <= temp_desired <= temp_max".into());
        }
        if !(self.power_max >= 0.0) {
            errs.push("hvac.power_max must be nonnegative".into());
        }
        if let Some(t0) = self.temp_initial {
            if !t0.is_finite() {
                errs.push("hvac.temp_initial must be finite".into());
            }
        }
        errs
    }

    pub fn initial_temperature(&self) -> f64 {
        self.temp_initial.unwrap_or(self.temp_desired)
    }

    /// Weight `1 − 1/(J·R)` carried over from the previous indoor temperature.
    pub fn retention(&self) -> f64 {
        1.0 - 1.0 / (self.thermal_capacity * self.envelope_resistance)
    }

    /// Indoor temperature drop per kW of HVAC power, `η/J`.
    pub fn cooling_gain(&self) -> f64 {
        self.efficiency / self.thermal_capacity
    }

    /// Indoor temperature after one slot.
    pub fn step_temperature(&self, t_prev: f64, t_out: f64, p_hvac: f64) -> f64 {
        let jr = self.thermal_capacity * self.envelope_resistance;
        (1.0 - 1.0 / jr) * t_prev + t_out / jr - self.efficiency * p_hvac / self.thermal_capacity
    }

    pub fn discomfort_cost(&self, t_in: f64) -> f64 {
        let dev = t_in - self.temp_desired;
        self.discomfort_weight * dev * dev
    }
}

/// Battery energy storage system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssParams {
    /// B, kWh
    pub capacity: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_initial: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    pub charge_power_max: f64,
    pub discharge_power_max: f64,
    /// λ_c, $/kWh
    pub charge_cost: f64,
    /// λ_d, $/kWh
    pub discharge_cost: f64,
}

impl EssParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            errs.push("ess.capacity must be positive".into());
        }
        if !(0.0 <= self.soc_min
            && self.soc_min <= self.soc_initial
            && self.soc_initial <= self.soc_max
            && self.soc_max <= 1.0)
        {
            errs.push("ess state of charge must satisfy 0 <= soc_min <= soc_initial <= soc_max <= 1".into());
        }
        for (name, v) in [
            ("charge_efficiency", self.charge_efficiency),
            ("discharge_efficiency", self.discharge_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                errs.push(format!("ess.{name} must lie in (0, 1]"));
            }
        }
        for (name, v) in [
            ("charge_power_max", self.charge_power_max),
            ("discharge_power_max", self.discharge_power_max),
            ("charge_cost", self.charge_cost),
            ("discharge_cost", self.discharge_cost),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("ess.{name} must be nonnegative"));
            }
        }
        errs
    }

    /// State of charge after one slot of charging `p_c` and discharging `p_d`.
    pub fn step_soc(&self, soc_prev: f64, p_c: f64, p_d: f64) -> f64 {
        soc_prev + self.charge_efficiency * p_c / self.capacity
            - p_d / (self.discharge_efficiency * self.capacity)
    }

    pub fn cost(&self, p_c: f64, p_d: f64) -> f64 {
        self.charge_cost * p_c + self.discharge_cost * p_d
    }
}

/// Utility tariffs and line limits seen by one building.
#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub buy_price: Vec<f64>,
    pub sell_price: Vec<f64>,
    pub line_limit: f64,
    pub p2p_limit: f64,
}

impl GridParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.buy_price.len() != self.sell_price.len() {
            errs.push("buy and sell price series differ in length".into());
        }
        for (t, (b, s)) in self.buy_price.iter().zip(&self.sell_price).enumerate() {
            if !(b.is_finite() && s.is_finite()) {
                errs.push(format!("tariff at slot {t} is not finite"));
            } else if s > b {
                errs.push(format!("sell price exceeds buy price at slot {t}"));
            } else if *s < 0.0 {
                errs.push(format!("sell price is negative at slot {t}"));
            }
        }
        if !(self.line_limit > 0.0 && self.line_limit.is_finite()) {
            errs.push("line_limit must be positive".into());
        }
        if !(self.p2p_limit >= 0.0 && self.p2p_limit.is_finite()) {
            errs.push("p2p_limit must be nonnegative".into());
        }
        errs
    }

    pub fn cost(&self, t: usize, p_b: f64, p_s: f64) -> f64 {
        self.buy_price[t] * p_b - self.sell_price[t] * p_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingParams {
    pub id: String,
    pub hvac: HvacParams,
    pub ess: Option<EssParams>,
    pub grid: GridParams,
    pub has_solar: bool,
}

/// Exogenous time series of one building.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildingProfile {
    pub solar: Vec<f64>,
    pub load: Vec<f64>,
    pub outdoor_temp: Vec<f64>,
}

impl BuildingProfile {
    pub fn horizon(&self) -> usize {
        self.load.len()
    }
}

/// Index map of one building's variables inside a QP.
///
/// Variables are laid out in blocks of `T` entries, in this order:
/// `p_hvac`, `p_charge`, `p_discharge`, `p_buy`, `p_sell`, trades (slot-major,
/// one entry per neighbor), `t_in`, `soc`. The two ESS power blocks and the
/// SOC block are omitted for buildings without storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildingLayout {
    pub offset: usize,
    pub horizon: usize,
    pub neighbors: usize,
    pub has_ess: bool,
}

impl BuildingLayout {
    fn ess_blocks(&self) -> usize {
        if self.has_ess {
            2
        } else {
            0
        }
    }

    pub fn num_vars(&self) -> usize {
        let t = self.horizon;
        let power_blocks = 3 + self.ess_blocks();
        let states = if self.has_ess { 2 } else { 1 };
        t * (power_blocks + self.neighbors + states)
    }

    pub fn p_hvac(&self, t: usize) -> usize {
        self.offset + t
    }

    pub fn p_charge(&self, t: usize) -> Option<usize> {
        self.has_ess.then(|| self.offset + self.horizon + t)
    }

    pub fn p_discharge(&self, t: usize) -> Option<usize> {
        self.has_ess.then(|| self.offset + 2 * self.horizon + t)
    }

    pub fn p_buy(&self, t: usize) -> usize {
        self.offset + (1 + self.ess_blocks()) * self.horizon + t
    }

    pub fn p_sell(&self, t: usize) -> usize {
        self.offset + (2 + self.ess_blocks()) * self.horizon + t
    }

    /// Trade with the `j`-th neighbor (sorted neighbor order) in slot `t`.
    pub fn trade(&self, t: usize, j: usize) -> usize {
        debug_assert!(j < self.neighbors);
        self.offset + (3 + self.ess_blocks()) * self.horizon + t * self.neighbors + j
    }

    pub fn t_in(&self, t: usize) -> usize {
        self.offset + (3 + self.ess_blocks() + self.neighbors) * self.horizon + t
    }

    pub fn soc(&self, t: usize) -> Option<usize> {
        self.has_ess
            .then(|| self.offset + (4 + self.ess_blocks() + self.neighbors) * self.horizon + t)
    }
}

/// Decision variables and derived states of one building over the horizon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildingSchedule {
    pub id: String,
    pub p_hvac: Vec<f64>,
    pub p_charge: Vec<f64>,
    pub p_discharge: Vec<f64>,
    pub p_buy: Vec<f64>,
    pub p_sell: Vec<f64>,
    pub t_in: Vec<f64>,
    /// Empty for buildings without storage.
    pub soc: Vec<f64>,
    /// Neighbor ids in sorted order, aligned with `trades`.
    pub neighbors: Vec<String>,
    /// `trades[j][t]`: energy imported from neighbor `j` in slot `t` (kW).
    pub trades: Vec<Vec<f64>>,
}

impl BuildingSchedule {
    pub fn horizon(&self) -> usize {
        self.p_hvac.len()
    }

    pub fn trade_sum(&self, t: usize) -> f64 {
        self.trades.iter().map(|row| row[t]).sum()
    }
}

impl BuildingLayout {
    pub fn extract(&self, id: &str, neighbors: &[String], x: &[f64]) -> BuildingSchedule {
        let t_range = 0..self.horizon;
        let pick = |f: &dyn Fn(usize) -> usize| t_range.clone().map(|t| x[f(t)]).collect::<Vec<_>>();
        let pick_opt = |f: &dyn Fn(usize) -> Option<usize>| {
            t_range
                .clone()
                .map(|t| f(t).map_or(0.0, |i| x[i]))
                .collect::<Vec<_>>()
        };
        BuildingSchedule {
            id: id.to_string(),
            p_hvac: pick(&|t| self.p_hvac(t)),
            p_charge: pick_opt(&|t| self.p_charge(t)),
            p_discharge: pick_opt(&|t| self.p_discharge(t)),
            p_buy: pick(&|t| self.p_buy(t)),
            p_sell: pick(&|t| self.p_sell(t)),
            t_in: pick(&|t| self.t_in(t)),
            soc: if self.has_ess {
                pick_opt(&|t| self.soc(t))
            } else {
                Vec::new()
            },
            neighbors: neighbors.to_vec(),
            trades: (0..self.neighbors)
                .map(|j| t_range.clone().map(|t| x[self.trade(t, j)]).collect())
                .collect(),
        }
    }
}

/// Interval propagation of the indoor temperature under the HVAC power range.
/// Returns the first slot whose reachable interval misses the comfort band.
fn unreachable_temperature_slot(hvac: &HvacParams, outdoor: &[f64]) -> Option<(usize, f64, f64)> {
    let (mut lo, mut hi) = (hvac.initial_temperature(), hvac.initial_temperature());
    for (t, &out) in outdoor.iter().enumerate() {
        let next_lo = hvac.step_temperature(lo, out, hvac.power_max);
        let next_hi = hvac.step_temperature(hi, out, 0.0);
        lo = next_lo.max(hvac.temp_min);
        hi = next_hi.min(hvac.temp_max);
        if lo > hi {
            return Some((t, next_lo, next_hi));
        }
    }
    None
}

/// Appends one building's variables, constraints and internal cost to
/// `builder`.
///
/// Emits the temperature, SOC and power-balance equalities, the comfort band,
/// SOC range, terminal SOC, power limits, utility line limit and per-neighbor
/// P2P limits, plus the discomfort, ESS and grid cost terms. Trades use
/// `neighbor_count` slots per time step.
pub fn add_building(
    builder: &mut QpBuilder,
    params: &BuildingParams,
    profile: &BuildingProfile,
    neighbor_count: usize,
) -> Result<BuildingLayout, ModelError> {
    let horizon = params.grid.buy_price.len();
    for got in [
        profile.solar.len(),
        profile.load.len(),
        profile.outdoor_temp.len(),
        params.grid.sell_price.len(),
    ] {
        if got != horizon {
            return Err(ModelError::Horizon {
                building: params.id.clone(),
                expected: horizon,
                got,
            });
        }
    }
    static_checks(params, profile)?;

    let layout = BuildingLayout {
        offset: builder.num_vars(),
        horizon,
        neighbors: neighbor_count,
        has_ess: params.ess.is_some(),
    };
    let id = &params.id;
    let hvac = &params.hvac;
    let grid = &params.grid;
    let inf = f64::INFINITY;

    for t in 0..horizon {
        builder.add_bounded_var(format!("{id}.p_hvac[{t}]"), 0.0, hvac.power_max);
    }
    if let Some(ess) = &params.ess {
        for t in 0..horizon {
            builder.add_bounded_var(format!("{id}.p_charge[{t}]"), 0.0, ess.charge_power_max);
        }
        for t in 0..horizon {
            builder.add_bounded_var(format!("{id}.p_discharge[{t}]"), 0.0, ess.discharge_power_max);
        }
    }
    for t in 0..horizon {
        builder.add_bounded_var(format!("{id}.p_buy[{t}]"), 0.0, inf);
    }
    for t in 0..horizon {
        builder.add_bounded_var(format!("{id}.p_sell[{t}]"), 0.0, inf);
    }
    let solar_enabled = if params.has_solar { 1.0 } else { 0.0 };
    for t in 0..horizon {
        for j in 0..neighbor_count {
            builder.add_bounded_var(format!("{id}.trade[{t}][{j}]"), -grid.p2p_limit, grid.p2p_limit);
        }
    }
    for t in 0..horizon {
        builder.add_bounded_var(format!("{id}.t_in[{t}]"), hvac.temp_min, hvac.temp_max);
    }
    if let Some(ess) = &params.ess {
        for t in 0..horizon {
            builder.add_bounded_var(format!("{id}.soc[{t}]"), ess.soc_min, ess.soc_max);
        }
    }
    debug_assert_eq!(builder.num_vars(), layout.offset + layout.num_vars());

    // Indoor temperature recursion.
    for t in 0..horizon {
        let out_term = profile.outdoor_temp[t] / (hvac.thermal_capacity * hvac.envelope_resistance);
        let mut terms = vec![(layout.t_in(t), 1.0), (layout.p_hvac(t), hvac.cooling_gain())];
        let rhs = if t == 0 {
            hvac.retention() * hvac.initial_temperature() + out_term
        } else {
            terms.push((layout.t_in(t - 1), -hvac.retention()));
            out_term
        };
        builder.add_eq(format!("{id}.temperature[{t}]"), &terms, rhs);
    }

    if let Some(ess) = &params.ess {
        for t in 0..horizon {
            let soc = layout.soc(t).unwrap();
            let mut terms = vec![
                (soc, 1.0),
                (layout.p_charge(t).unwrap(), -ess.charge_efficiency / ess.capacity),
                (
                    layout.p_discharge(t).unwrap(),
                    1.0 / (ess.discharge_efficiency * ess.capacity),
                ),
            ];
            let rhs = if t == 0 {
                ess.soc_initial
            } else {
                terms.push((layout.soc(t - 1).unwrap(), -1.0));
                0.0
            };
            builder.add_eq(format!("{id}.soc[{t}]"), &terms, rhs);
        }
        if horizon > 0 {
            builder.add_ineq(
                format!("{id}.terminal_soc"),
                &[(layout.soc(horizon - 1).unwrap(), 1.0)],
                ess.soc_initial,
                inf,
            );
        }
    }

    // Power balance: p_b − p_s + p_r + Σ e = p_load + p_hvac + p_c − p_d.
    for t in 0..horizon {
        let mut terms = vec![
            (layout.p_buy(t), 1.0),
            (layout.p_sell(t), -1.0),
            (layout.p_hvac(t), -1.0),
        ];
        if params.ess.is_some() {
            terms.push((layout.p_charge(t).unwrap(), -1.0));
            terms.push((layout.p_discharge(t).unwrap(), 1.0));
        }
        for j in 0..neighbor_count {
            terms.push((layout.trade(t, j), 1.0));
        }
        let rhs = profile.load[t] - solar_enabled * profile.solar[t];
        builder.add_eq(format!("{id}.balance[{t}]"), &terms, rhs);
    }

    for t in 0..horizon {
        builder.add_ineq(
            format!("{id}.line[{t}]"),
            &[(layout.p_buy(t), 1.0), (layout.p_sell(t), -1.0)],
            -grid.line_limit,
            grid.line_limit,
        );
    }

    // Costs.
    for t in 0..horizon {
        builder.add_squared_residual(
            &[(layout.t_in(t), 1.0)],
            hvac.temp_desired,
            hvac.discomfort_weight,
        );
        builder.add_lin(layout.p_buy(t), grid.buy_price[t]);
        builder.add_lin(layout.p_sell(t), -grid.sell_price[t]);
        if let Some(ess) = &params.ess {
            builder.add_lin(layout.p_charge(t).unwrap(), ess.charge_cost);
            builder.add_lin(layout.p_discharge(t).unwrap(), ess.discharge_cost);
        }
    }
    Ok(layout)
}

fn static_checks(params: &BuildingParams, profile: &BuildingProfile) -> Result<(), ModelError> {
    let fail = |reason: String| ModelError::Infeasible {
        building: params.id.clone(),
        reason,
    };
    let hvac = &params.hvac;
    if hvac.temp_min > hvac.temp_max {
        return Err(fail(format!(
            "temp_min {} exceeds temp_max {}",
            hvac.temp_min, hvac.temp_max
        )));
    }
    if let Some(ess) = &params.ess {
        if ess.soc_min > ess.soc_max {
            return Err(fail(format!("soc_min {} exceeds soc_max {}", ess.soc_min, ess.soc_max)));
        }
        if ess.soc_initial > ess.soc_max {
            return Err(fail(format!(
                "terminal SOC requirement {} exceeds soc_max {}",
                ess.soc_initial, ess.soc_max
            )));
        }
    }
    if let Some((t, lo, hi)) = unreachable_temperature_slot(hvac, &profile.outdoor_temp) {
        return Err(fail(format!(
            "indoor temperature band [{}, {}] unreachable at slot {t} (reachable [{lo:.3}, {hi:.3}])",
            hvac.temp_min, hvac.temp_max
        )));
    }
    Ok(())
}

/// Assembles the stand-alone feasible set and internal cost of one building.
pub fn build_feasible_set(
    params: &BuildingParams,
    profile: &BuildingProfile,
    neighbor_count: usize,
) -> Result<(QpProblem, BuildingLayout), ModelError> {
    let mut builder = QpBuilder::new();
    let layout = add_building(&mut builder, params, profile, neighbor_count)?;
    Ok((builder.build(), layout))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub discomfort: f64,
    pub ess: f64,
    pub grid: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.discomfort + self.ess + self.grid
    }
}

/// Internal cost of a schedule, evaluated term by term.
pub fn internal_cost(params: &BuildingParams, schedule: &BuildingSchedule) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    for t in 0..schedule.horizon() {
        c.discomfort += params.hvac.discomfort_cost(schedule.t_in[t]);
        if let Some(ess) = &params.ess {
            c.ess += ess.cost(schedule.p_charge[t], schedule.p_discharge[t]);
        }
        c.grid += params.grid.cost(t, schedule.p_buy[t], schedule.p_sell[t]);
    }
    c
}
