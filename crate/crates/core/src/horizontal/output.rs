use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::horizontal::sim::SimulationReport;

#[derive(Serialize)]
struct EpochRow {
    t: f64,
    n_participants: usize,
    epsilon: f64,
    mean_cost: f64,
    stable_flag: u8,
}

/// Writes `epochs.csv`, `vehicles.csv` and `summary.json` into `dir`.
pub fn write_report(report: &SimulationReport, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Output {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let csv_err = |e: csv::Error| Error::Output {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(io)?;

    let mut w = csv::Writer::from_path(dir.join("epochs.csv")).map_err(csv_err)?;
    for e in &report.epochs {
        w.serialize(EpochRow {
            t: e.t,
            n_participants: e.participants.len(),
            epsilon: e.epsilon,
            mean_cost: e.mean_cost,
            stable_flag: e.stable() as u8,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)?;

    let mut w = csv::Writer::from_path(dir.join("vehicles.csv")).map_err(csv_err)?;
    for v in &report.vehicles {
        w.serialize(v).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;

    let summary = serde_json::json!({
        "config": report.config,
        "summary": report.summary,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(dir.join("summary.json"), text + "\n").map_err(io)?;
    Ok(())
}
