//! Output files: forecast CSVs, fit JSON, and the run manifest.

use std::path::Path;

use nalgebra::DMatrix;
use serde_json::json;
use sha2::{Digest, Sha256};

use gnarx_core::design;
use gnarx_core::error::{Error, Result};
use gnarx_core::estimator::FitResult;
use gnarx_core::panel::{fmt_full, CalendarStamp};

/// Forecast CSV schema `node,date,point,lo95,hi95,realized`; interval and
/// realized columns are empty when absent.
pub struct ForecastTable<'a> {
    pub nodes: &'a [String],
    pub dates: Vec<CalendarStamp>,
    /// N×H points.
    pub point: DMatrix<f64>,
    pub lower: Option<DMatrix<f64>>,
    pub upper: Option<DMatrix<f64>>,
    pub realized: Option<DMatrix<Option<f64>>>,
}

pub fn write_forecast_csv(table: &ForecastTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_record(["node", "date", "point", "lo95", "hi95", "realized"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (i, node) in table.nodes.iter().enumerate() {
        for (k, date) in table.dates.iter().enumerate() {
            let lo = table.lower.as_ref().map(|m| fmt_full(m[(i, k)])).unwrap_or_default();
            let hi = table.upper.as_ref().map(|m| fmt_full(m[(i, k)])).unwrap_or_default();
            let realized = table
                .realized
                .as_ref()
                .and_then(|m| m[(i, k)].map(fmt_full))
                .unwrap_or_default();
            w.write_record([
                node.as_str(),
                &date.to_string(),
                &fmt_full(table.point[(i, k)]),
                &lo,
                &hi,
                &realized,
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Serialize a fit as JSON: the named parameter table plus
/// the innovation covariance and the stationarity certificate.
pub fn fit_to_json(fit: &FitResult) -> serde_json::Value {
    let stationarity =
        design::check_stationarity(&fit.order, &fit.params, fit.node_names.len());
    let sigma: Vec<Vec<f64>> = (0..fit.sigma_u.nrows())
        .map(|i| (0..fit.sigma_u.ncols()).map(|j| fit.sigma_u[(i, j)]).collect())
        .collect();
    json!({
        "order": fit.order,
        "nodes": fit.node_names,
        "effective_t": fit.effective_t,
        "parameters": fit.parameter_table(),
        "sigma_u": sigma,
        "bic": fit.bic,
        "loglik_proxy": fit.loglik_proxy,
        "stationarity": {
            "sufficient": stationarity.stationary_sufficient,
            "margins": stationarity.margins,
        },
        "hc2_dropped_rows": fit.hc2_dropped_rows,
    })
}

pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Run manifest: everything needed to re-execute the run byte-identically.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: u64,
    threads: usize,
    config: &serde_json::Value,
) -> Result<()> {
    let config_bytes =
        serde_json::to_vec(config).map_err(|e| Error::Format(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&config_bytes);
    let hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "format_version": 1,
        "command": command,
        "seed": seed,
        "threads": threads,
        "config_hash": hash,
        "config": config,
    });
    write_json(&manifest, &out_dir.join("manifest.json"))
}
