//! Subcommand implementations.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use gnarx_core::design::{AlphaMode, ModelOrder};
use gnarx_core::error::{Error, Result};
use gnarx_core::estimator;
use gnarx_core::forecaster::{self, EvalOptions};
use gnarx_core::midas::{self, MonthlySeries};
use gnarx_core::panel::{fmt_full, save_panel_csv, CalendarStamp, Panel};
use gnarx_core::selector::{self, NetworkCandidate, SearchSpace, SelectionTrace};
use gnarx_core::stochastic::{self, BootstrapOptions, RngSpec, SimulationOptions};

use crate::config::{Comparator, RunConfig, SearchConfig, SearchMethod};
use crate::outputs::{self, ForecastTable};
use crate::pipeline::{self, Prepared};

fn network_label(config: &RunConfig) -> String {
    match config.network {
        Some(crate::config::NetworkConfig::FullyConnected { .. }) => "fully_connected",
        Some(crate::config::NetworkConfig::NearestNeighbour { .. }) => "nearest_neighbour",
        Some(crate::config::NetworkConfig::EdgeList { .. }) => "edge_list",
        Some(crate::config::NetworkConfig::DemoFive) => "demo_five",
        None => "none",
    }
    .to_string()
}

fn search_space(
    search: &SearchConfig,
    prepared: &Prepared,
    label: String,
) -> SearchSpace {
    SearchSpace {
        p_max: search.p_max,
        s_max: search.s_max,
        p_prime_max: search.p_prime_max,
        n_exog: prepared.exog.len(),
        alpha: search.alpha,
        networks: vec![NetworkCandidate { label, network: prepared.network.clone() }],
    }
}

fn run_search(
    search: &SearchConfig,
    space: &SearchSpace,
    panel: &Panel,
    exog: &[Panel],
) -> Result<SelectionTrace> {
    match search.method {
        SearchMethod::Global => selector::select_global(space, panel, exog),
        SearchMethod::Stagewise => selector::select_stagewise(space, panel, exog),
        SearchMethod::Msfe => selector::select_msfe(
            space,
            panel,
            exog,
            search.msfe_fit_months,
            search.msfe_eval_months,
        ),
    }
}

pub fn cmd_select(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    let search = config
        .search
        .as_ref()
        .ok_or_else(|| Error::Config("config field 'search' is required for select".into()))?;
    let exog = prepared.exog_panels();
    let space = search_space(search, &prepared, network_label(config));
    let trace = run_search(search, &space, &prepared.model, &exog)?;
    trace.write_csv(&out.join("selection_trace.csv"))?;
    outputs::write_json(
        &serde_json::to_value(&trace.winner().order).map_err(|e| Error::Format(e.to_string()))?,
        &out.join("selected_order.json"),
    )?;
    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "select", seed, threads, &config_value)?;
    println!(
        "selected {} on {} (BIC {:.3}, {} candidates)",
        trace.winner().order,
        trace.winner().network,
        trace.winner().bic,
        trace.entries.len()
    );
    Ok(())
}

pub fn cmd_fit(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    let order = config.require_order()?;
    let exog = prepared.exog_panels();
    let fit = estimator::fit_gnarx(order, &prepared.model, &exog, &prepared.network)?;
    outputs::write_json(&outputs::fit_to_json(&fit), &out.join("fit.json"))?;

    // Residual panel aligned to the estimation sample's calendar.
    let p_star = order.p_star();
    let times = prepared.model.times()[p_star..].to_vec();
    let residual_panel = Panel::new(
        prepared.model.nodes().to_vec(),
        times,
        fit.residuals.clone(),
        fit.residual_mask.clone(),
    )?;
    save_panel_csv(&residual_panel, &out.join("residuals.csv"))?;

    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "fit", seed, threads, &config_value)?;
    println!("fitted {} ({} parameters, BIC {:.3})", order, fit.gamma.len(), fit.bic);
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    let split = config
        .split
        .ok_or_else(|| Error::Config("config field 'split' is required for evaluate".into()))?;
    let exog = prepared.exog_panels();

    // Fixed order, or BIC selection on the pre-split window.
    let order: ModelOrder = match (&config.order, &config.search) {
        (Some(o), _) => o.clone(),
        (None, Some(search)) => {
            let fit_end = split.add_months(-1);
            let in_panel = prepared.model.slice_time(None, Some(fit_end))?;
            let in_exog: Vec<Panel> = exog
                .iter()
                .map(|x| x.slice_time(None, Some(fit_end)))
                .collect::<Result<_>>()?;
            let space = search_space(search, &prepared, network_label(config));
            let trace = run_search(search, &space, &in_panel, &in_exog)?;
            trace.write_csv(&out.join("selection_trace.csv"))?;
            trace.winner().order.clone()
        }
        (None, None) => {
            return Err(Error::Config("evaluate needs either 'order' or 'search'".into()))
        }
    };

    let opts = EvalOptions {
        split,
        end: config.eval_end,
        refit: config.refit,
        fit_on_full: config.in_sample_eval,
    };
    let n = prepared.model.n_nodes();

    let mut table_rows: Vec<(String, String, usize, f64, f64)> = Vec::new();
    let mut forecast_rows: Vec<(String, usize, usize, f64, Option<f64>)> = Vec::new();

    let (gnarx_fit, gnarx_report) =
        forecaster::rolling_evaluation(&order, &prepared.model, &exog, &prepared.network, &opts)?;
    table_rows.push((
        format!("gnarx_{}_{}", alpha_str(order.alpha), network_label(config)),
        order.to_string(),
        gnarx_fit.gamma.len(),
        gnarx_report.msfe,
        gnarx_report.se,
    ));
    for r in &gnarx_report.records {
        forecast_rows.push(("gnarx".into(), r.node, r.time, r.point, r.realized));
    }

    for comparator in &config.comparators {
        match comparator {
            Comparator::Var => {
                let (var_fit, report) = forecaster::rolling_evaluation_var(
                    &prepared.model,
                    config.var_order,
                    config.var_intercept,
                    &opts,
                )?;
                table_rows.push((
                    "var".into(),
                    format!("({})", config.var_order),
                    var_fit.n_parameters(),
                    report.msfe,
                    report.se,
                ));
                for r in &report.records {
                    forecast_rows.push(("var".into(), r.node, r.time, r.point, r.realized));
                }
            }
            Comparator::Ar => {
                let report = forecaster::rolling_evaluation_ar1(&prepared.model, &opts)?;
                table_rows.push(("ar".into(), "(1)".into(), n, report.msfe, report.se));
                for r in &report.records {
                    forecast_rows.push(("ar".into(), r.node, r.time, r.point, r.realized));
                }
            }
            Comparator::Naive => {
                let report = forecaster::rolling_evaluation_naive(&prepared.model, &opts)?;
                table_rows.push(("naive".into(), "-".into(), 0, report.msfe, report.se));
                for r in &report.records {
                    forecast_rows.push(("naive".into(), r.node, r.time, r.point, r.realized));
                }
            }
        }
    }

    let mut w = csv::Writer::from_path(out.join("evaluation.csv"))
        .map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["model", "order", "parameters", "msfe", "se"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (model, order_s, params, msfe, se) in &table_rows {
        w.write_record([
            model.as_str(),
            order_s,
            &params.to_string(),
            &fmt_full(*msfe),
            &fmt_full(*se),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("forecasts.csv"))
        .map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["model", "node", "date", "point", "realized"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (model, node, time, point, realized) in &forecast_rows {
        let level_point = prepared.to_level(*node, *point);
        let level_real = realized.map(|v| prepared.to_level(*node, v));
        w.write_record([
            model.as_str(),
            prepared.model.nodes()[*node].as_str(),
            &prepared.model.times()[*time].to_string(),
            &fmt_full(level_point),
            &level_real.map(fmt_full).unwrap_or_default(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;

    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "evaluate", seed, threads, &config_value)?;
    for (model, order_s, params, msfe, se) in &table_rows {
        println!("{model:<28} {order_s:<18} {params:>5}  MSFE {msfe:.4} ({se:.4})");
    }
    Ok(())
}

fn alpha_str(alpha: AlphaMode) -> &'static str {
    match alpha {
        AlphaMode::Global => "global",
        AlphaMode::Local => "local",
    }
}

/// Shared by `forecast` and `bootstrap`: fit on the full sample, then produce
/// per-scenario forecast tables (with intervals when B > 0).
fn scenario_forecasts<'a>(
    config: &RunConfig,
    prepared: &'a Prepared,
    seed: u64,
    with_intervals: bool,
) -> Result<Vec<(String, ForecastTable<'a>, Option<stochastic::IntervalReport>)>> {
    let order = config.require_order()?;
    let exog = prepared.exog_panels();
    let horizon = config.horizon;
    let fit = estimator::fit_gnarx(order, &prepared.model, &exog, &prepared.network)?;

    let scenarios = if config.scenarios.is_empty() {
        vec![pipeline::hold_scenario(prepared, horizon)?]
    } else {
        config
            .scenarios
            .iter()
            .map(|path| {
                let file = pipeline::load_scenario(path)?;
                pipeline::resolve_scenario(&file, prepared, horizon)
            })
            .collect::<Result<Vec<_>>>()?
    };

    let last = *prepared.model.times().last().unwrap();
    let dates: Vec<CalendarStamp> =
        (1..=horizon as i32).map(|k| last.add_months(k)).collect();
    let n = prepared.model.n_nodes();

    let mut out = Vec::new();
    for scenario in scenarios {
        let label = scenario.label.clone();
        let (point, intervals) = if with_intervals {
            let b = config
                .bootstrap
                .as_ref()
                .ok_or_else(|| Error::Config("bootstrap settings required".into()))?;
            let report = stochastic::bootstrap_intervals(
                order,
                &prepared.model,
                &exog,
                &prepared.network,
                &scenario,
                horizon,
                &BootstrapOptions { b: b.b, alpha: b.alpha, rng: RngSpec::new(seed) },
            )?;
            (report.point.clone(), Some(report))
        } else {
            let point = forecaster::forecast_scenario(
                &fit,
                &prepared.model,
                &exog,
                &prepared.network,
                &scenario,
                horizon,
            )?;
            (point, None)
        };

        let to_levels = |m: &DMatrix<f64>| {
            DMatrix::from_fn(n, horizon, |i, k| prepared.to_level(i, m[(i, k)]))
        };
        let table = ForecastTable {
            nodes: prepared.levels.nodes(),
            dates: dates.clone(),
            point: to_levels(&point),
            lower: intervals.as_ref().map(|r| to_levels(&r.lower)),
            upper: intervals.as_ref().map(|r| to_levels(&r.upper)),
            realized: None,
        };
        out.push((label, table, intervals));
    }
    Ok(out)
}

pub fn cmd_forecast(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    let with_intervals = config.bootstrap.as_ref().is_some_and(|b| b.b > 0);
    let results = scenario_forecasts(config, &prepared, seed, with_intervals)?;
    for (label, table, _) in &results {
        outputs::write_forecast_csv(table, &out.join(format!("forecast_{label}.csv")))?;
        println!("scenario '{label}': {} steps written", table.dates.len());
    }
    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "forecast", seed, threads, &config_value)?;
    Ok(())
}

pub fn cmd_bootstrap(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    if config.bootstrap.is_none() {
        return Err(Error::Config("config field 'bootstrap' is required".into()));
    }
    let results = scenario_forecasts(config, &prepared, seed, true)?;
    for (label, table, report) in &results {
        let report = report.as_ref().expect("intervals requested");
        outputs::write_forecast_csv(table, &out.join(format!("intervals_{label}.csv")))?;
        println!(
            "scenario '{label}': B = {} used, {} dropped",
            report.b_used, report.b_dropped
        );
    }
    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "bootstrap", seed, threads, &config_value)?;
    Ok(())
}

pub fn cmd_simstudy(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let study = config
        .simstudy
        .as_ref()
        .ok_or_else(|| Error::Config("config field 'simstudy' is required".into()))?;
    let (order, params, net) = stochastic::study_process();
    let true_label = order.to_string();

    let selections: Vec<Result<String>> = (0..study.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngSpec::new(seed).stream(rep as u64 + 1);
            let (panel, exog) = stochastic::simulate(
                &order,
                &params,
                &net,
                study.t,
                None,
                &SimulationOptions::default(),
                &mut rng,
            )?;
            let space = SearchSpace {
                p_max: study.p_max,
                s_max: study.s_max,
                p_prime_max: study.p_prime_max,
                n_exog: 1,
                alpha: AlphaMode::Local,
                networks: vec![NetworkCandidate { label: "demo".into(), network: net.clone() }],
            };
            let trace = match study.method {
                SearchMethod::Global => selector::select_global(&space, &panel, &exog)?,
                SearchMethod::Stagewise => selector::select_stagewise(&space, &panel, &exog)?,
                SearchMethod::Msfe => {
                    return Err(Error::Config(
                        "simstudy supports global or stagewise selection".into(),
                    ))
                }
            };
            Ok(trace.winner().order.to_string())
        })
        .collect();

    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    let mut failures = 0usize;
    for s in selections {
        match s {
            Ok(label) => *counts.entry(label).or_insert(0) += 1,
            Err(e) => {
                failures += 1;
                log::warn!("simstudy replicate failed: {e}");
            }
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::Singular("every simulation replicate failed".into()));
    }

    // Most-selected orders first; ties by notation.
    let mut rows: Vec<(&String, &usize)> = counts.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    let mut w = csv::Writer::from_path(out.join("simstudy.csv"))
        .map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["order", "count", "share", "is_true"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (label, count) in &rows {
        w.write_record([
            label.as_str(),
            &count.to_string(),
            &fmt_full(**count as f64 / total as f64),
            if *label == &true_label { "1" } else { "" },
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;

    let true_share = *counts.get(&true_label).unwrap_or(&0) as f64 / total as f64;
    outputs::write_json(
        &json!({
            "t": study.t,
            "replicates": study.replicates,
            "completed": total,
            "failed": failures,
            "true_order": true_label,
            "true_order_share": true_share,
        }),
        &out.join("simstudy_summary.json"),
    )?;
    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "simstudy", seed, threads, &config_value)?;
    println!(
        "T = {}: true order {true_label} selected {:.1}% ({} of {total})",
        study.t,
        100.0 * true_share,
        counts.get(&true_label).unwrap_or(&0)
    );
    Ok(())
}

pub fn cmd_midas(config: &RunConfig, out: &Path, seed: u64, threads: usize) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    let midas_cfg = config
        .midas
        .as_ref()
        .ok_or_else(|| Error::Config("config field 'midas' is required".into()))?;
    let quarterly_path = config
        .quarterly
        .as_ref()
        .ok_or_else(|| Error::Config("config field 'quarterly' is required".into()))?;
    if config.bootstrap.is_none() {
        return Err(Error::Config("midas needs 'bootstrap' for interval propagation".into()));
    }
    let node = prepared.levels.node_index(&midas_cfg.node)?;

    // Bridge regression on observed history (original units).
    let quarterly = midas::load_quarterly_csv(quarterly_path)?;
    let history = MonthlySeries::from_panel_node(&prepared.levels, node);
    let rows = midas::align_midas(&history, &quarterly, &midas_cfg.spec)?;
    let bridge = midas::fit_midas(&rows, midas_cfg.spec.intercept)?;
    outputs::write_json(
        &serde_json::to_value(&bridge).map_err(|e| Error::Format(e.to_string()))?,
        &out.join("bridge_fit.json"),
    )?;

    let results = scenario_forecasts(config, &prepared, seed, true)?;
    let forecast_start = prepared.levels.times().last().unwrap().add_months(1);
    let horizon = config.horizon;

    let mut projections = Vec::new();
    for (label, table, report) in results.iter() {
        let report = report.as_ref().expect("intervals requested");
        let point_path: Vec<f64> = (0..horizon).map(|k| table.point[(node, k)]).collect();
        // Level-space replicate paths: the per-node mean shift cancels in the
        // bootstrap errors, so levels are point + error.
        let replicate_paths: Vec<Vec<f64>> = report
            .errors
            .iter()
            .map(|e| (0..horizon).map(|k| point_path[k] + e[(node, k)]).collect())
            .collect();
        // Common random numbers across scenarios: quarters whose mapped month
        // predates the scenario divergence project identically.
        let mut rng = RngSpec::new(seed).stream(1_000_000);
        let proj = midas::project_gdp(
            &bridge,
            &midas_cfg.spec,
            &history,
            forecast_start,
            &point_path,
            &replicate_paths,
            &midas_cfg.quarters,
            config.bootstrap.as_ref().map(|b| b.alpha).unwrap_or(0.05),
            &mut rng,
        )?;
        projections.push((label.clone(), proj));
    }
    midas::write_projection_csv(&projections, &out.join("gdp_projection.csv"))?;

    let config_value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    outputs::write_manifest(out, "midas", seed, threads, &config_value)?;
    for (label, proj) in &projections {
        for p in proj {
            println!(
                "{} {label}: {:.2} ({:.2}, {:.2})",
                p.quarter, p.point, p.lower, p.upper
            );
        }
    }
    Ok(())
}
