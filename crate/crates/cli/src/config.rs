//! Run configuration: one JSON file drives every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gnarx_core::design::{AlphaMode, ModelOrder};
use gnarx_core::error::{Error, Result};
use gnarx_core::midas::{MidasSpec, Quarter};
use gnarx_core::panel::{CalendarStamp, CsvSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Wide CSV with the endogenous panel.
    #[serde(default)]
    pub panel: Option<PathBuf>,
    #[serde(default)]
    pub panel_columns: Option<CsvSpec>,
    /// Subtract per-node means before fitting; outputs are mapped back.
    #[serde(default)]
    pub demean: bool,
    #[serde(default)]
    pub exogenous: Vec<ExogConfig>,
    #[serde(default)]
    pub network: Option<NetworkConfig>,
    /// Fixed model order (fit/evaluate/forecast/bootstrap/midas).
    #[serde(default)]
    pub order: Option<ModelOrder>,
    /// Order search bounds (select; evaluate falls back to it when no fixed
    /// order is given).
    #[serde(default)]
    pub search: Option<SearchConfig>,
    /// First forecasted month of the evaluation window.
    #[serde(default)]
    pub split: Option<CalendarStamp>,
    #[serde(default)]
    pub eval_end: Option<CalendarStamp>,
    /// Re-estimate parameters every step of the rolling evaluation.
    #[serde(default)]
    pub refit: bool,
    /// Estimate on the whole series and roll forecasts in-sample.
    #[serde(default)]
    pub in_sample_eval: bool,
    #[serde(default)]
    pub comparators: Vec<Comparator>,
    #[serde(default = "default_var_order")]
    pub var_order: usize,
    #[serde(default)]
    pub var_intercept: bool,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Scenario JSON files for conditional forecasting.
    #[serde(default)]
    pub scenarios: Vec<PathBuf>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    /// Quarterly growth CSV for the mixed-frequency bridge.
    #[serde(default)]
    pub quarterly: Option<PathBuf>,
    #[serde(default)]
    pub midas: Option<MidasConfig>,
    #[serde(default)]
    pub simstudy: Option<SimStudyConfig>,
}

fn default_var_order() -> usize {
    2
}

fn default_horizon() -> usize {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogConfig {
    pub name: String,
    pub path: PathBuf,
    /// First-difference the series before fitting.
    #[serde(default)]
    pub difference: bool,
    /// Set values before this month to zero (observed) instead of missing.
    #[serde(default)]
    pub zero_fill_before: Option<CalendarStamp>,
    /// Standardize (after differencing) to zero mean, unit variance.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    FullyConnected { exports: PathBuf },
    NearestNeighbour {
        exports: PathBuf,
        #[serde(default)]
        tie_break_lowest: bool,
    },
    EdgeList { path: PathBuf },
    /// The built-in five-node demonstration network.
    DemoFive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Var,
    Ar,
    Naive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_method")]
    pub method: SearchMethod,
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    #[serde(default = "default_s_max")]
    pub s_max: usize,
    #[serde(default = "default_pp_max")]
    pub p_prime_max: usize,
    pub alpha: AlphaMode,
    /// MSFE selection: months in the fit window.
    #[serde(default = "default_msfe_fit")]
    pub msfe_fit_months: usize,
    /// MSFE selection: months in the held-out window.
    #[serde(default = "default_msfe_eval")]
    pub msfe_eval_months: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Stagewise,
    Global,
    Msfe,
}

fn default_method() -> SearchMethod {
    SearchMethod::Stagewise
}
fn default_p_max() -> usize {
    12
}
fn default_s_max() -> usize {
    3
}
fn default_pp_max() -> usize {
    3
}
fn default_msfe_fit() -> usize {
    180
}
fn default_msfe_eval() -> usize {
    60
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

// No deny_unknown_fields here: the flattened MidasSpec captures the rest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidasConfig {
    /// Node whose monthly forecasts feed the bridge.
    pub node: String,
    pub quarters: Vec<Quarter>,
    #[serde(flatten)]
    pub spec: MidasSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimStudyConfig {
    #[serde(default = "default_sim_t")]
    pub t: usize,
    #[serde(default = "default_sim_reps")]
    pub replicates: usize,
    #[serde(default = "default_sim_method")]
    pub method: SearchMethod,
    #[serde(default = "default_sim_p_max")]
    pub p_max: usize,
    #[serde(default = "default_s_max")]
    pub s_max: usize,
    #[serde(default = "default_pp_max")]
    pub p_prime_max: usize,
}

fn default_sim_t() -> usize {
    128
}
fn default_sim_reps() -> usize {
    1000
}
fn default_sim_method() -> SearchMethod {
    SearchMethod::Global
}
fn default_sim_p_max() -> usize {
    3
}

/// Scenario file: level paths per regressor name per node name. Nodes not
/// listed hold their last observed level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub label: String,
    #[serde(default)]
    pub paths: std::collections::BTreeMap<String, std::collections::BTreeMap<String, Vec<f64>>>,
    /// "levels" (default): paths are in the raw units of the regressor CSVs
    /// and are differenced/standardized exactly like the history.
    /// "model": paths are already in model space.
    #[serde(default = "default_scenario_space")]
    pub space: ScenarioSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSpace {
    Levels,
    Model,
}

fn default_scenario_space() -> ScenarioSpace {
    ScenarioSpace::Levels
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Paths inside the config resolve relative to the config file.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        if let Some(p) = self.panel.as_mut() {
            fix(p);
        }
        for e in &mut self.exogenous {
            fix(&mut e.path);
        }
        match self.network.as_mut() {
            Some(NetworkConfig::FullyConnected { exports })
            | Some(NetworkConfig::NearestNeighbour { exports, .. }) => fix(exports),
            Some(NetworkConfig::EdgeList { path }) => fix(path),
            _ => {}
        }
        for s in &mut self.scenarios {
            fix(s);
        }
        if let Some(q) = self.quarterly.as_mut() {
            fix(q);
        }
    }

    pub fn require_panel(&self) -> Result<&PathBuf> {
        self.panel
            .as_ref()
            .ok_or_else(|| Error::Config("config field 'panel' is required".into()))
    }

    pub fn require_network(&self) -> Result<&NetworkConfig> {
        self.network
            .as_ref()
            .ok_or_else(|| Error::Config("config field 'network' is required".into()))
    }

    pub fn require_order(&self) -> Result<&ModelOrder> {
        self.order
            .as_ref()
            .ok_or_else(|| Error::Config("config field 'order' is required".into()))
    }
}
