//! Independent re-check of a community solution against the building model.
//!
//! Every constraint is recomputed from the reported schedules with the model's
//! step functions, not read back from solver residuals.

use std::fmt;

use crate::community::Community;
use crate::orchestrator::{settle_costs, BuildingCost, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintFamily {
    TemperatureDynamics,
    ComfortBand,
    HvacPower,
    SocDynamics,
    SocRange,
    TerminalSoc,
    EssPower,
    GridExchange,
    P2pLimit,
    PowerBalance,
    TradeAntisymmetry,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 11] = [
        Self::TemperatureDynamics,
        Self::ComfortBand,
        Self::HvacPower,
        Self::SocDynamics,
        Self::SocRange,
        Self::TerminalSoc,
        Self::EssPower,
        Self::GridExchange,
        Self::P2pLimit,
        Self::PowerBalance,
        Self::TradeAntisymmetry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TemperatureDynamics => "temperature_dynamics",
            Self::ComfortBand => "comfort_band",
            Self::HvacPower => "hvac_power",
            Self::SocDynamics => "soc_dynamics",
            Self::SocRange => "soc_range",
            Self::TerminalSoc => "terminal_soc",
            Self::EssPower => "ess_power",
            Self::GridExchange => "grid_exchange",
            Self::P2pLimit => "p2p_limit",
            Self::PowerBalance => "power_balance",
            Self::TradeAntisymmetry => "trade_antisymmetry",
        }
    }
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Max violation per family, in `ConstraintFamily::ALL` order.
    pub violations: Vec<(ConstraintFamily, f64)>,
    pub costs: Vec<BuildingCost>,
    pub social_cost: f64,
    pub payment_sum: f64,
    /// Largest distance of a settlement price outside `[μ_s, μ_b]`.
    pub price_band_excess: f64,
    /// `(building, slot)` pairs with both charging and discharging above 1e-6 kW.
    pub simultaneous_charge_discharge: Vec<(String, usize)>,
    /// `(building, slot)` pairs with both buying and selling above 1e-6 kW.
    pub simultaneous_buy_sell: Vec<(String, usize)>,
}

impl Evaluation {
    pub fn violation(&self, family: ConstraintFamily) -> f64 {
        self.violations
            .iter()
            .find(|(f, _)| *f == family)
            .map_or(0.0, |(_, v)| *v)
    }

    /// Worst violation over every family except trade antisymmetry, which
    /// the reported edge trades satisfy by construction.
    pub fn max_violation(&self) -> f64 {
        self.violations
            .iter()
            .filter(|(f, _)| *f != ConstraintFamily::TradeAntisymmetry)
            .fold(0.0, |m, (_, v)| m.max(*v))
    }
}

const ACTIVITY_EPS: f64 = 1e-6;

fn below(v: f64, lo: f64) -> f64 {
    (lo - v).max(0.0)
}

fn above(v: f64, hi: f64) -> f64 {
    (v - hi).max(0.0)
}

pub fn evaluate_solution(result: &RunResult, community: &Community) -> Evaluation {
    let mut worst = [0.0_f64; ConstraintFamily::ALL.len()];
    let mut bump = |f: ConstraintFamily, v: f64| {
        let slot = &mut worst[f as usize];
        *slot = slot.max(v.abs());
    };
    let mut both_ess = Vec::new();
    let mut both_grid = Vec::new();

    for ((params, profile), s) in community
        .buildings
        .iter()
        .zip(&community.profiles)
        .zip(&result.schedules)
    {
        let hvac = &params.hvac;
        let grid = &params.grid;
        let solar = if params.has_solar { 1.0 } else { 0.0 };
        let mut t_prev = hvac.initial_temperature();
        let mut soc_prev = params.ess.as_ref().map(|e| e.soc_initial);
        for t in 0..s.horizon() {
            let out = profile.outdoor_temp[t];
            bump(
                ConstraintFamily::TemperatureDynamics,
                s.t_in[t] - hvac.step_temperature(t_prev, out, s.p_hvac[t]),
            );
            t_prev = s.t_in[t];
            bump(
                ConstraintFamily::ComfortBand,
                below(s.t_in[t], hvac.temp_min).max(above(s.t_in[t], hvac.temp_max)),
            );
            bump(
                ConstraintFamily::HvacPower,
                below(s.p_hvac[t], 0.0).max(above(s.p_hvac[t], hvac.power_max)),
            );

            let (pc, pd) = (s.p_charge[t], s.p_discharge[t]);
            match (&params.ess, soc_prev) {
                (Some(ess), Some(prev)) => {
                    let soc = s.soc[t];
                    bump(ConstraintFamily::SocDynamics, soc - ess.step_soc(prev, pc, pd));
                    soc_prev = Some(soc);
                    bump(
                        ConstraintFamily::SocRange,
                        below(soc, ess.soc_min).max(above(soc, ess.soc_max)),
                    );
                    bump(
                        ConstraintFamily::EssPower,
                        below(pc, 0.0)
                            .max(below(pd, 0.0))
                            .max(above(pc, ess.charge_power_max))
                            .max(above(pd, ess.discharge_power_max)),
                    );
                    if t + 1 == s.horizon() {
                        bump(ConstraintFamily::TerminalSoc, below(soc, ess.soc_initial));
                    }
                    if pc > ACTIVITY_EPS && pd > ACTIVITY_EPS {
                        both_ess.push((s.id.clone(), t));
                    }
                }
                _ => bump(ConstraintFamily::EssPower, pc.abs().max(pd.abs())),
            }

            let (pb, ps) = (s.p_buy[t], s.p_sell[t]);
            bump(
                ConstraintFamily::GridExchange,
                below(pb, 0.0)
                    .max(below(ps, 0.0))
                    .max(above((pb - ps).abs(), grid.line_limit)),
            );
            if pb > ACTIVITY_EPS && ps > ACTIVITY_EPS {
                both_grid.push((s.id.clone(), t));
            }
            for row in &s.trades {
                bump(ConstraintFamily::P2pLimit, above(row[t].abs(), grid.p2p_limit));
            }
            let supply = pb - ps + solar * profile.solar[t] + s.trade_sum(t) + pd;
            let demand = profile.load[t] + s.p_hvac[t] + pc;
            bump(ConstraintFamily::PowerBalance, supply - demand);
        }
    }

    let topo = &community.topology;
    let mut band = 0.0_f64;
    let tariff = &community.buildings[0].grid;
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        let ka = topo.neighbor_slot(a, b).expect("edge endpoint");
        let kb = topo.neighbor_slot(b, a).expect("edge endpoint");
        for t in 0..community.horizon() {
            bump(
                ConstraintFamily::TradeAntisymmetry,
                result.schedules[a].trades[ka][t] + result.schedules[b].trades[kb][t],
            );
            if let Some(p) = result.edge_prices[e][t] {
                band = band
                    .max(below(p, tariff.sell_price[t]))
                    .max(above(p, tariff.buy_price[t]));
            }
        }
    }

    let costs = settle_costs(community, &result.schedules, &result.edge_trades, &result.edge_prices);
    Evaluation {
        violations: ConstraintFamily::ALL.iter().map(|&f| (f, worst[f as usize])).collect(),
        social_cost: costs.iter().map(|c| c.internal.total()).sum(),
        payment_sum: costs.iter().map(|c| c.payment).sum(),
        costs,
        price_band_excess: band,
        simultaneous_charge_discharge: both_ess,
        simultaneous_buy_sell: both_grid,
    }
}

/// One row of a before/after cost table.
#[derive(Debug, Clone, PartialEq)]
pub struct CostComparison {
    pub id: String,
    pub before: f64,
    pub after: f64,
}

impl CostComparison {
    pub fn reduction(&self) -> f64 {
        self.before - self.after
    }

    pub fn reduction_pct(&self) -> f64 {
        if self.before.abs() > 0.0 {
            100.0 * self.reduction() / self.before.abs()
        } else {
            0.0
        }
    }
}

/// Per-building total cost (internal plus payments) before and after
/// cooperation, followed by a community row.
pub fn compare_costs(before: &[BuildingCost], after: &[BuildingCost]) -> Vec<CostComparison> {
    let mut rows: Vec<CostComparison> = before
        .iter()
        .filter_map(|b| {
            after.iter().find(|a| a.id == b.id).map(|a| CostComparison {
                id: b.id.clone(),
                before: b.total(),
                after: a.total(),
            })
        })
        .collect();
    rows.push(CostComparison {
        id: "community".into(),
        before: rows.iter().map(|r| r.before).sum(),
        after: rows.iter().map(|r| r.after).sum(),
    });
    rows
}
