#![allow(dead_code)]

//! Shared fixture builders for the CLI integration tests.

use std::path::{Path, PathBuf};
use std::process::Command;

use gnarx_core::design::{AlphaMode, ModelOrder};
use gnarx_core::panel::{save_panel_csv, CalendarStamp, Panel};
use gnarx_core::stochastic::{self, RngSpec, SimulationOptions};
use nalgebra::DMatrix;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gnarx")
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub panel_csv: PathBuf,
    pub exog_csv: PathBuf,
    /// Last stringency level per node (levels are 50 + cumulative sum of the
    /// model-space regressor).
    pub last_levels: Vec<f64>,
    pub panel: Panel,
}

/// Simulate the five-node study process, write the endogenous panel and a
/// level-space exogenous regressor CSV (so configs exercise the differencing
/// pipeline), and return the pieces tests compare against.
///
/// The panel calendar is arranged to end at Oct-2020.
pub fn build_fixture(t: usize, seed: u64, lambda: Vec<f64>) -> Fixture {
    let (order, mut params, net) = stochastic::study_process();
    params.lambdas[0] = lambda;
    let mut rng = RngSpec::new(seed).rng();
    let start = CalendarStamp::new(2020, 10).unwrap().add_months(-(t as i32 - 1));
    let opts = SimulationOptions { start, ..Default::default() };
    let (panel, exog) = stochastic::simulate(&order, &params, &net, t, None, &opts, &mut rng)
        .expect("simulation");

    let dir = tempfile::tempdir().unwrap();
    let panel_csv = dir.path().join("panel.csv");
    save_panel_csv(&panel, &panel_csv).unwrap();

    // Levels integrate the model-space regressor so that `difference: true`
    // recovers it exactly (up to the lost first month).
    let x = &exog[0];
    let n = x.n_nodes();
    let mut levels = DMatrix::zeros(n, t);
    for i in 0..n {
        let mut level = 50.0;
        for k in 0..t {
            level += x.value(i, k);
            levels[(i, k)] = level;
        }
    }
    let last_levels: Vec<f64> = (0..n).map(|i| levels[(i, t - 1)]).collect();
    let level_panel = Panel::fully_observed(x.nodes().to_vec(), start, levels).unwrap();
    let exog_csv = dir.path().join("stringency.csv");
    save_panel_csv(&level_panel, &exog_csv).unwrap();

    Fixture { dir, panel_csv, exog_csv, last_levels, panel }
}

pub fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

pub fn run_ok(args: &[&str]) -> String {
    let output = Command::new(bin()).args(args).output().expect("spawn gnarx");
    assert!(
        output.status.success(),
        "gnarx {args:?} failed ({:?}):\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn run_expect_code(args: &[&str], code: i32) -> String {
    let output = Command::new(bin()).args(args).output().expect("spawn gnarx");
    assert_eq!(
        output.status.code(),
        Some(code),
        "gnarx {args:?}: expected exit {code}\nstderr: {}",
        String::from_utf8_lossy(&output.stderr),
    );
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Basic GNARX order used in fixed-order configs: the study process truth.
pub fn study_order() -> ModelOrder {
    ModelOrder::new(1, vec![1], vec![1], AlphaMode::Local).unwrap()
}

/// Read a CSV into header + records.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}
