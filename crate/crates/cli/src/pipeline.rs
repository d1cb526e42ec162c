//! Shared data preparation: load the panel, build the network, transform the
//! exogenous regressors, and resolve scenario files into model space.

use nalgebra::{DMatrix, DVector};

use gnarx_core::error::{Error, Result};
use gnarx_core::forecaster::{difference_scenario_levels, ScenarioPath};
use gnarx_core::network::{self, Network};
use gnarx_core::panel::{load_panel_csv, CsvSpec, Panel};

use crate::config::{NetworkConfig, RunConfig, ScenarioFile, ScenarioSpace};

/// One prepared exogenous regressor: the model-space panel plus everything
/// needed to map scenario level paths into the same space.
pub struct PreparedExog {
    pub name: String,
    pub differenced: bool,
    /// Per-node (mean, sd) when the regressor was standardized.
    pub standardize: Option<Vec<(f64, f64)>>,
    /// Last observed level per node, after zero-filling.
    pub last_levels: Vec<f64>,
    pub model: Panel,
}

/// Fully prepared inputs for a run.
pub struct Prepared {
    /// Endogenous panel in original units.
    pub levels: Panel,
    /// Endogenous panel in model space (demeaned when configured).
    pub model: Panel,
    /// Per-node mean subtracted from the endogenous panel (zero without
    /// demeaning).
    pub node_means: Vec<f64>,
    pub exog: Vec<PreparedExog>,
    pub network: Network,
}

impl Prepared {
    pub fn exog_panels(&self) -> Vec<Panel> {
        self.exog.iter().map(|e| e.model.clone()).collect()
    }

    /// Map a model-space value back to original units for a node.
    pub fn to_level(&self, node: usize, v: f64) -> f64 {
        v + self.node_means[node]
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let panel_path = config.require_panel()?;
    let spec = config.panel_columns.clone().unwrap_or_default();
    let levels = load_panel_csv(panel_path, &spec)?;
    let network = build_network(config.require_network()?, levels.nodes())?;

    let (model, node_means) = if config.demean {
        let (p, means) = levels.demean()?;
        (p, means)
    } else {
        (levels.clone(), vec![0.0; levels.n_nodes()])
    };

    let mut exog = Vec::with_capacity(config.exogenous.len());
    for e in &config.exogenous {
        let raw = load_panel_csv(
            &e.path,
            &CsvSpec { date_column: None, nodes: Some(levels.nodes().to_vec()) },
        )?;
        let mut level_panel = raw.reindex(levels.times())?;
        if let Some(cutoff) = e.zero_fill_before {
            level_panel = level_panel.zero_fill_before(cutoff);
        }
        let last_levels: Vec<f64> = (0..level_panel.n_nodes())
            .map(|i| {
                (0..level_panel.n_times())
                    .rev()
                    .find(|&t| level_panel.is_observed(i, t))
                    .map(|t| level_panel.value(i, t))
                    .unwrap_or_else(|| {
                        log::warn!(
                            "regressor '{}' has no observed level for node '{}'; holding 0",
                            e.name,
                            level_panel.nodes()[i]
                        );
                        0.0
                    })
            })
            .collect();
        let mut model_panel = if e.difference {
            level_panel.difference()?.reindex(levels.times())?
        } else {
            level_panel
        };
        let standardize = if e.standardize {
            let (p, params) = model_panel.standardize()?;
            model_panel = p;
            Some(params)
        } else {
            None
        };
        exog.push(PreparedExog {
            name: e.name.clone(),
            differenced: e.difference,
            standardize,
            last_levels,
            model: model_panel,
        });
    }

    Ok(Prepared { levels, model, node_means, exog, network })
}

fn build_network(config: &NetworkConfig, nodes: &[String]) -> Result<Network> {
    match config {
        NetworkConfig::FullyConnected { exports } => {
            let (names, matrix) = network::load_export_matrix_csv(exports)?;
            let reordered = reorder_exports(&names, &matrix, nodes)?;
            Network::fully_connected(nodes.to_vec(), &reordered)
        }
        NetworkConfig::NearestNeighbour { exports, tie_break_lowest } => {
            let (names, matrix) = network::load_export_matrix_csv(exports)?;
            let reordered = reorder_exports(&names, &matrix, nodes)?;
            Network::nearest_neighbour(nodes.to_vec(), &reordered, *tie_break_lowest)
        }
        NetworkConfig::EdgeList { path } => network::load_edge_list_csv(path, nodes),
        NetworkConfig::DemoFive => {
            let demo = Network::demo_five();
            if demo.nodes() != nodes {
                return Err(Error::Validation(
                    "demo_five network requires panel nodes n1..n5".into(),
                ));
            }
            Ok(demo)
        }
    }
}

/// Reorder an export matrix from its own node order onto the panel's.
fn reorder_exports(
    names: &[String],
    matrix: &DMatrix<f64>,
    nodes: &[String],
) -> Result<DMatrix<f64>> {
    if names.len() != nodes.len() {
        return Err(Error::Validation(format!(
            "export matrix covers {} nodes, panel has {}",
            names.len(),
            nodes.len()
        )));
    }
    let index: Vec<usize> = nodes
        .iter()
        .map(|n| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::UnknownNode(n.clone()))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| matrix[(index[i], index[j])]))
}

/// Load a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioFile> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Resolve a scenario file into model space: nodes without an explicit path
/// hold their last observed level, level paths are differenced and
/// standardized exactly like the fitted history.
pub fn resolve_scenario(
    file: &ScenarioFile,
    prepared: &Prepared,
    horizon: usize,
) -> Result<ScenarioPath> {
    let n = prepared.levels.n_nodes();
    let nodes = prepared.levels.nodes();
    for name in file.paths.keys() {
        if !prepared.exog.iter().any(|e| &e.name == name) {
            return Err(Error::Config(format!(
                "scenario '{}' references unknown regressor '{name}'",
                file.label
            )));
        }
    }
    let mut paths = Vec::with_capacity(prepared.exog.len());
    for exog in &prepared.exog {
        let node_paths = file.paths.get(&exog.name);
        if let Some(np) = node_paths {
            for node in np.keys() {
                if !nodes.contains(node) {
                    return Err(Error::Config(format!(
                        "scenario '{}' references unknown node '{node}'",
                        file.label
                    )));
                }
            }
        }
        let mut levels = DMatrix::zeros(n, horizon);
        for i in 0..n {
            let given = node_paths.and_then(|np| np.get(&nodes[i]));
            match given {
                Some(values) => {
                    if values.len() < horizon {
                        return Err(Error::Config(format!(
                            "scenario '{}': path for '{}' in '{}' has {} steps, horizon is {horizon}",
                            file.label,
                            nodes[i],
                            exog.name,
                            values.len()
                        )));
                    }
                    for k in 0..horizon {
                        levels[(i, k)] = values[k];
                    }
                }
                None => {
                    let hold = if file.space == ScenarioSpace::Model {
                        0.0
                    } else {
                        exog.last_levels[i]
                    };
                    for k in 0..horizon {
                        levels[(i, k)] = hold;
                    }
                }
            }
        }
        let model = match file.space {
            ScenarioSpace::Model => levels,
            ScenarioSpace::Levels => {
                let mut m = if exog.differenced {
                    let last = DVector::from_fn(n, |i, _| exog.last_levels[i]);
                    difference_scenario_levels(&levels, &last)
                } else {
                    levels
                };
                if let Some(params) = &exog.standardize {
                    for i in 0..n {
                        let (mean, sd) = params[i];
                        for k in 0..horizon {
                            m[(i, k)] = (m[(i, k)] - mean) / sd;
                        }
                    }
                }
                m
            }
        };
        paths.push(model);
    }
    Ok(ScenarioPath { label: file.label.clone(), paths })
}

/// The all-hold scenario: every regressor of every node keeps its last
/// observed level.
pub fn hold_scenario(prepared: &Prepared, horizon: usize) -> Result<ScenarioPath> {
    let file = ScenarioFile {
        label: "hold".to_string(),
        paths: Default::default(),
        space: ScenarioSpace::Levels,
    };
    resolve_scenario(&file, prepared, horizon)
}
