//! CSV result directories.
//!
//! Numbers are written in plain decimal with the shortest representation that
//! parses back to the identical `f64`. Edges appear in canonical order and are
//! labelled `A-B`; the trade on `A-B` is the import of `A` from `B`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::building::CostBreakdown;
use crate::orchestrator::{BuildingCost, RunResult};

pub const SCHEDULES: &str = "schedules.csv";
pub const TRADES: &str = "trades.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const SUMMARY: &str = "summary.csv";
pub const LINKS: &str = "links.csv";
pub const RUN: &str = "run.csv";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

fn num(v: f64) -> String {
    // `0.0` and `-0.0` must print identically for byte-stable output.
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes every result file into `dir`, creating it if needed.
pub fn write_results(result: &RunResult, dir: impl AsRef<Path>) -> Result<(), OutputError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut rows = Vec::new();
    for s in &result.schedules {
        for t in 0..s.horizon() {
            rows.push(vec![
                s.id.clone(),
                t.to_string(),
                num(s.p_hvac[t]),
                num(s.p_charge[t]),
                num(s.p_discharge[t]),
                num(s.p_buy[t]),
                num(s.p_sell[t]),
                num(s.t_in[t]),
                s.soc.get(t).map_or_else(String::new, |v| num(*v)),
            ]);
        }
    }
    write_csv(
        &dir.join(SCHEDULES),
        &["building", "t", "p_hvac", "p_c", "p_d", "p_b", "p_s", "T_in", "SOC"],
        rows,
    )?;

    let mut rows = Vec::new();
    for (e, label) in result.edge_labels.iter().enumerate() {
        for (t, &trade) in result.edge_trades[e].iter().enumerate() {
            rows.push(vec![
                label.clone(),
                t.to_string(),
                num(trade),
                result.edge_prices[e][t].map_or_else(String::new, num),
            ]);
        }
    }
    write_csv(&dir.join(TRADES), &["edge", "t", "e", "price"], rows)?;

    let rows = result
        .residuals
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                num(r.primal),
                num(r.consensus),
                r.active_links.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join(RESIDUALS),
        &["k", "primal", "consensus", "active_links"],
        rows,
    )?;

    let mut rows = Vec::new();
    for set in &result.links {
        for (e, label) in result.edge_labels.iter().enumerate() {
            rows.push(vec![
                set.iteration.to_string(),
                label.clone(),
                u8::from(set.is_active(e)).to_string(),
            ]);
        }
    }
    write_csv(&dir.join(LINKS), &["k", "edge", "active"], rows)?;

    let cost_row = |id: &str, c: &CostBreakdown, payment: f64| {
        vec![
            id.to_string(),
            num(c.discomfort),
            num(c.ess),
            num(c.grid),
            num(c.total()),
            num(payment),
            num(c.total() + payment),
        ]
    };
    let mut rows: Vec<_> = result
        .costs
        .iter()
        .map(|c| cost_row(&c.id, &c.internal, c.payment))
        .collect();
    let total = result.costs.iter().fold(CostBreakdown::default(), |acc, c| CostBreakdown {
        discomfort: acc.discomfort + c.internal.discomfort,
        ess: acc.ess + c.internal.ess,
        grid: acc.grid + c.internal.grid,
    });
    rows.push(cost_row("community", &total, result.payment_sum()));
    write_csv(
        &dir.join(SUMMARY),
        &["building", "discomfort", "ess", "grid", "internal", "payment", "total"],
        rows,
    )?;

    let rows = [
        ("method", result.method.to_string()),
        ("social_cost", num(result.social_cost)),
        ("iterations", result.iterations.to_string()),
        ("seed", result.seed.map_or_else(String::new, |s| s.to_string())),
        ("converged", result.converged.to_string()),
        ("pre_clean_asymmetry", num(result.pre_clean_asymmetry)),
        ("settled", result.settled.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| vec![k.to_string(), v])
    .collect();
    write_csv(&dir.join(RUN), &["key", "value"], rows)?;
    Ok(())
}

/// Per-building costs from a result directory's `summary.csv`, without the
/// community row.
pub fn read_summary(dir: impl AsRef<Path>) -> Result<Vec<BuildingCost>, OutputError> {
    let path = dir.as_ref().join(SUMMARY);
    let shown = path.display().to_string();
    let mut r = csv::Reader::from_path(&path).map_err(|source| OutputError::Csv {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| OutputError::Csv {
            path: shown.clone(),
            source,
        })?;
        let field = |k: usize| -> Result<f64, OutputError> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| OutputError::Format {
                    path: shown.clone(),
                    reason: format!("row {}: column {k} is not a number", line + 2),
                })
        };
        let id = rec.get(0).unwrap_or_default();
        if id == "community" {
            continue;
        }
        out.push(BuildingCost {
            id: id.to_string(),
            internal: CostBreakdown {
                discomfort: field(1)?,
                ess: field(2)?,
                grid: field(3)?,
            },
            payment: field(5)?,
        });
    }
    Ok(out)
}

/// The method recorded in a result directory.
pub fn read_method(dir: impl AsRef<Path>) -> Result<String, OutputError> {
    let path = dir.as_ref().join(RUN);
    let shown = path.display().to_string();
    let mut r = csv::Reader::from_path(&path).map_err(|source| OutputError::Csv {
        path: shown.clone(),
        source,
    })?;
    for rec in r.records() {
        let rec = rec.map_err(|source| OutputError::Csv {
            path: shown.clone(),
            source,
        })?;
        if rec.get(0) == Some("method") {
            return Ok(rec.get(1).unwrap_or_default().to_string());
        }
    }
    Err(OutputError::Format {
        path: shown,
        reason: "no method entry".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_p1;
    use crate::scenario::ScenarioFile;

    #[test]
    fn numbers_round_trip_exactly() {
        for v in [1.0, -0.0, 1e-23, 0.1 + 0.2, f64::MAX, -7.5e-300] {
            let back: f64 = num(v).parse().unwrap();
            assert_eq!(back, v);
            assert!(!num(v).contains('e'));
        }
    }

    #[test]
    fn summary_round_trips_through_disk() {
        let c = ScenarioFile::from_json(include_str!("../scenarios/community4.json"))
            .unwrap()
            .community()
            .unwrap();
        let r = solve_p1(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_results(&r, dir.path()).unwrap();
        let back = read_summary(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in back.iter().zip(&r.costs) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.payment, b.payment);
            assert!((a.total() - b.total()).abs() < 1e-9);
        }
        assert_eq!(read_method(dir.path()).unwrap(), "centralized");
        let trades = fs::read_to_string(dir.path().join(TRADES)).unwrap();
        assert_eq!(trades.lines().count(), 1 + 6 * 10);
        assert!(trades.lines().nth(1).unwrap().starts_with("B1-B2,0,"));
    }
}
