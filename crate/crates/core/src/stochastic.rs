//! Process simulation and forward-bootstrap prediction intervals.
//!
//! Simulation runs the model recursion generatively with iid innovations
//! (standard normal by default) and a discarded burn-in. Replicate RNG
//! streams are independent and indexed, so parallel and serial execution
//! produce identical output for a fixed seed.
//!
//! Prediction intervals use a forward residual bootstrap. Each replicate
//! resamples whole residual time-slices with replacement (preserving
//! cross-sectional correlation), draws a contiguous length-p* starting block
//! from the observed series, re-simulates the in-sample path under the fitted
//! parameters and the observed exogenous history, refits, and records the
//! difference between an h-step simulated future (fitted parameters, fresh
//! resampled residuals) and the refitted model's h-step forecast. Interval
//! endpoints add the empirical error quantiles to the point forecast, per
//! node and horizon.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::design::{self, ModelOrder, ParameterVector};
use crate::error::{Error, Result};
use crate::estimator;
use crate::forecaster::{self, ScenarioPath};
use crate::network::Network;
use crate::panel::{CalendarStamp, Panel};

/// Values beyond this magnitude terminate a simulation as diverged.
const DIVERGENCE_LIMIT: f64 = 1e50;

fn draw_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Seed plus per-replicate stream indexing: the same (seed, stream) pair
/// always yields the same draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec { seed }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Innovation distribution for simulation.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// Innovations are iid Gaussian with this standard deviation.
    pub sd: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sd: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    /// Leading steps discarded before the returned sample.
    pub burn_in: usize,
    pub noise: NoiseSpec,
    /// Calendar origin of the returned panel.
    pub start: CalendarStamp,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            burn_in: 50,
            noise: NoiseSpec::default(),
            start: CalendarStamp { year: 2000, month: 1 },
        }
    }
}

/// Deterministic simulation core: run the recursion from a fixed starting
/// block with explicit innovations and exogenous values.
///
/// `start_block` is N×p*; `exog_vals` are N×T_total (aligned with the output
/// index); `innovations` is N×(T_total − p*), column k driving time p*+k.
/// Fails with a diverged error if any value exceeds the overflow guard.
pub fn simulate_path(
    order: &ModelOrder,
    params: &ParameterVector,
    net: &Network,
    start_block: &DMatrix<f64>,
    exog_vals: &[&DMatrix<f64>],
    innovations: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    order.validate_for_network(net)?;
    let n = net.n_nodes();
    let p_star = order.p_star();
    let t_total = p_star + innovations.ncols();
    if start_block.nrows() != n || start_block.ncols() != p_star {
        return Err(Error::Dimension(format!(
            "starting block is {}x{}, expected {}x{}",
            start_block.nrows(),
            start_block.ncols(),
            n,
            p_star
        )));
    }
    if exog_vals.len() != order.n_exog() {
        return Err(Error::Dimension("exogenous matrix count != H".into()));
    }
    for x in exog_vals {
        if x.nrows() != n || x.ncols() < t_total {
            return Err(Error::Dimension("exogenous matrix does not cover the path".into()));
        }
    }

    // Stage weights are fixed over the simulation; cache them per (node, r).
    let max_s = order.s.iter().copied().max().unwrap_or(0);
    let mut weights: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(max_s);
    for r in 1..=max_s {
        weights.push((0..n).map(|i| net.stage_weights(i, r).unwrap()).collect());
    }

    let mut y = DMatrix::zeros(n, t_total);
    y.view_mut((0, 0), (n, p_star)).copy_from(start_block);
    for u in p_star..t_total {
        for i in 0..n {
            let mut v = innovations[(i, u - p_star)];
            for j in 1..=order.p {
                v += params.alpha(i, j) * y[(i, u - j)];
                for r in 1..=order.s[j - 1] {
                    let agg: f64 =
                        weights[r - 1][i].iter().map(|&(q, w)| w * y[(q, u - j)]).sum();
                    v += params.betas[j - 1][r - 1] * agg;
                }
            }
            for (h, lags) in params.lambdas.iter().enumerate() {
                for (lag, &lam) in lags.iter().enumerate() {
                    v += lam * exog_vals[h][(i, u - lag)];
                }
            }
            if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Diverged { step: u });
            }
            y[(i, u)] = v;
        }
    }
    Ok(y)
}

/// Simulate `t` steps of the process generatively.
///
/// When `exog` is `None` and the order has exogenous regressors, those are
/// drawn iid standard normal per node (including the burn-in) and returned.
/// Supplied exogenous panels must have exactly `t` columns; the burn-in then
/// runs with pre-sample regressor values of zero. Missing cells in supplied
/// exogenous panels contribute zero.
pub fn simulate(
    order: &ModelOrder,
    params: &ParameterVector,
    net: &Network,
    t: usize,
    exog: Option<&[Panel]>,
    opts: &SimulationOptions,
    rng: &mut impl Rng,
) -> Result<(Panel, Vec<Panel>)> {
    let n = net.n_nodes();
    let h = order.n_exog();
    let p_star = order.p_star();
    let total = opts.burn_in + p_star + t;

    let exog_mats: Vec<DMatrix<f64>> = match exog {
        Some(panels) => {
            if panels.len() != h {
                return Err(Error::Dimension(format!(
                    "{} exogenous panels supplied, order expects {h}",
                    panels.len()
                )));
            }
            panels
                .iter()
                .map(|pnl| {
                    if pnl.n_times() != t {
                        return Err(Error::Dimension(format!(
                            "exogenous panel has {} columns, expected {t}",
                            pnl.n_times()
                        )));
                    }
                    let mut m = DMatrix::zeros(n, total);
                    for i in 0..n {
                        for k in 0..t {
                            if pnl.is_observed(i, k) {
                                m[(i, total - t + k)] = pnl.value(i, k);
                            }
                        }
                    }
                    Ok(m)
                })
                .collect::<Result<_>>()?
        }
        None => (0..h)
            .map(|_| DMatrix::from_fn(n, total, |_, _| draw_normal(rng)))
            .collect(),
    };

    let innovations =
        DMatrix::from_fn(n, total - p_star, |_, _| opts.noise.sd * draw_normal(rng));
    let start_block = DMatrix::zeros(n, p_star);
    let refs: Vec<&DMatrix<f64>> = exog_mats.iter().collect();
    let path = simulate_path(order, params, net, &start_block, &refs, &innovations)?;

    let keep = total - t;
    let panel = Panel::fully_observed(
        net.nodes().to_vec(),
        opts.start,
        path.columns(keep, t).into_owned(),
    )?;
    let exog_out = exog_mats
        .iter()
        .map(|m| {
            Panel::fully_observed(net.nodes().to_vec(), opts.start, m.columns(keep, t).into_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((panel, exog_out))
}

/// Per-node, per-horizon bootstrap prediction intervals.
#[derive(Debug, Clone)]
pub struct IntervalReport {
    pub nodes: Vec<String>,
    pub label: String,
    pub alpha: f64,
    /// N×h point forecasts.
    pub point: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// Replicates that survived refitting.
    pub b_used: usize,
    pub b_dropped: usize,
    /// Per surviving replicate: N×h forecast-error draws (simulated minus
    /// predicted), kept for downstream uncertainty propagation.
    pub errors: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub b: usize,
    pub alpha: f64,
    pub rng: RngSpec,
}

/// Forward-bootstrap prediction intervals for an h-step scenario forecast.
///
/// Replicates whose refit fails are dropped and counted; more than 10%
/// dropped is an error.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_intervals(
    order: &ModelOrder,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
    scenario: &ScenarioPath,
    horizon: usize,
    opts: &BootstrapOptions,
) -> Result<IntervalReport> {
    if opts.b == 0 {
        return Err(Error::Validation("bootstrap needs B >= 1".into()));
    }
    if !(0.0 < opts.alpha && opts.alpha < 1.0) {
        return Err(Error::Validation("alpha must be in (0,1)".into()));
    }
    let n = panel.n_nodes();
    scenario.validate(n, order.n_exog(), horizon)?;

    let data = design::build_regression_data(order, panel, exog, net)?;
    let fit = estimator::fit(&data)?;
    let p_star = order.p_star();
    let t = panel.n_times();
    let t_eff = data.effective_t;

    // Pool of residual time-slices (masked cells are zero).
    let residual_pool: Vec<DVector<f64>> =
        (0..t_eff).map(|k| fit.residuals.column(k).into_owned()).collect();

    // Observed history with missing cells zero-filled: bootstrap paths are
    // fully observed by construction.
    let mut hist = panel.values().clone();
    for i in 0..n {
        for k in 0..t {
            if !panel.is_observed(i, k) {
                hist[(i, k)] = 0.0;
            }
        }
    }
    let exog_hist: Vec<DMatrix<f64>> = exog
        .iter()
        .map(|x| {
            let mut m = x.values().clone();
            for i in 0..n {
                for k in 0..t {
                    if !x.is_observed(i, k) {
                        m[(i, k)] = 0.0;
                    }
                }
            }
            m
        })
        .collect();

    let point = forecaster::forecast_scenario(&fit, panel, exog, net, scenario, horizon)?;

    let replicate = |b: usize| -> Result<DMatrix<f64>> {
        let mut rng = opts.rng.stream(b as u64 + 1);
        // (a) residual resample, whole cross-sections.
        let mut innovations = DMatrix::zeros(n, t - p_star);
        for k in 0..t - p_star {
            let pick = rng.random_range(0..t_eff);
            innovations.set_column(k, &residual_pool[pick]);
        }
        // (b) contiguous starting block.
        let k0 = rng.random_range(0..=(t - p_star));
        let start_block = hist.columns(k0, p_star).into_owned();
        // (c) in-sample path under the fitted parameters and the observed
        // exogenous ordering.
        let exog_refs: Vec<&DMatrix<f64>> = exog_hist.iter().collect();
        let path =
            simulate_path(order, &fit.params, net, &start_block, &exog_refs, &innovations)?;
        let boot_panel =
            Panel::fully_observed(panel.nodes().to_vec(), panel.times()[0], path)?;
        // (d) refit on the bootstrap path.
        let boot_data = design::build_regression_data(order, &boot_panel, exog, net)?;
        let lean = estimator::fit_lean(&boot_data)?;
        let boot_params = ParameterVector::unpack(order, n, &lean.gamma)?;
        // (e) refitted model's forecast from the real data.
        let predicted = forecast_with_params(
            order,
            &boot_params,
            panel,
            exog,
            net,
            scenario,
            horizon,
            None,
        )?;
        // (f) simulated future under the original fit plus fresh residual
        // draws.
        let mut future_innov = DMatrix::zeros(n, horizon);
        for k in 0..horizon {
            let pick = rng.random_range(0..t_eff);
            future_innov.set_column(k, &residual_pool[pick]);
        }
        let simulated = forecast_with_params(
            order,
            &fit.params,
            panel,
            exog,
            net,
            scenario,
            horizon,
            Some(&future_innov),
        )?;
        Ok(simulated - predicted)
    };

    let results: Vec<Result<DMatrix<f64>>> =
        (0..opts.b).into_par_iter().map(replicate).collect();
    let mut errors = Vec::with_capacity(opts.b);
    let mut dropped = 0usize;
    for r in results {
        match r {
            Ok(e) => errors.push(e),
            Err(err) => {
                dropped += 1;
                log::warn!("bootstrap replicate dropped: {err}");
            }
        }
    }
    if dropped * 10 > opts.b {
        return Err(Error::Singular(format!(
            "{dropped} of {} bootstrap replicates failed to refit",
            opts.b
        )));
    }
    if errors.is_empty() {
        return Err(Error::Singular("no surviving bootstrap replicates".into()));
    }

    let mut lower = DMatrix::zeros(n, horizon);
    let mut upper = DMatrix::zeros(n, horizon);
    for i in 0..n {
        for k in 0..horizon {
            let mut draws: Vec<f64> = errors.iter().map(|e| e[(i, k)]).collect();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            lower[(i, k)] = point[(i, k)] + quantile_sorted(&draws, opts.alpha / 2.0);
            upper[(i, k)] = point[(i, k)] + quantile_sorted(&draws, 1.0 - opts.alpha / 2.0);
        }
    }
    Ok(IntervalReport {
        nodes: panel.nodes().to_vec(),
        label: scenario.label.clone(),
        alpha: opts.alpha,
        point,
        lower,
        upper,
        b_used: errors.len(),
        b_dropped: dropped,
        errors,
    })
}

/// Iterate the recursion `horizon` steps past the panel end under the given
/// parameters and scenario exogenous paths, optionally adding innovation
/// columns (`None` = pure point forecast).
#[allow(clippy::too_many_arguments)]
fn forecast_with_params(
    order: &ModelOrder,
    params: &ParameterVector,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
    scenario: &ScenarioPath,
    horizon: usize,
    innovations: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let n = panel.n_nodes();
    let t = panel.n_times();
    let mut endo_vals = DMatrix::zeros(n, t + horizon);
    let mut endo_obs = DMatrix::from_element(n, t + horizon, false);
    endo_vals.view_mut((0, 0), (n, t)).copy_from(panel.values());
    endo_obs.view_mut((0, 0), (n, t)).copy_from(panel.observed());

    let mut exog_ext: Vec<DMatrix<f64>> = Vec::with_capacity(exog.len());
    let mut exog_obs_ext: Vec<DMatrix<bool>> = Vec::with_capacity(exog.len());
    for (h, x) in exog.iter().enumerate() {
        let mut vals = DMatrix::zeros(n, t + horizon);
        let mut obs = DMatrix::from_element(n, t + horizon, false);
        vals.view_mut((0, 0), (n, t)).copy_from(x.values());
        obs.view_mut((0, 0), (n, t)).copy_from(x.observed());
        for k in 0..horizon {
            for i in 0..n {
                vals[(i, t + k)] = scenario.paths[h][(i, k)];
                obs[(i, t + k)] = true;
            }
        }
        exog_ext.push(vals);
        exog_obs_ext.push(obs);
    }

    let mut out = DMatrix::zeros(n, horizon);
    for k in 0..horizon {
        let u = t + k;
        let vals_refs: Vec<&DMatrix<f64>> = exog_ext.iter().collect();
        let obs_refs: Vec<&DMatrix<bool>> = exog_obs_ext.iter().collect();
        let mut pred = forecaster::forecast_one_step(
            order, params, net, &endo_vals, &endo_obs, &vals_refs, &obs_refs, u,
        )?;
        if let Some(innov) = innovations {
            pred += innov.column(k);
        }
        for i in 0..n {
            endo_vals[(i, u)] = pred[i];
            endo_obs[(i, u)] = true;
            out[(i, k)] = pred[i];
        }
    }
    Ok(out)
}

/// Linear-interpolation empirical quantile of pre-sorted draws.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// The simulation-study process: local-α GNARX(1,[1],1) on the five-node
/// demo network with α = (0.4, 0.2, 0.4, 0.2, 0.2), β[1,1] = 0.5 and
/// exogenous coefficients 0.4 (lag 0) and 0.2 (lag 1).
pub fn study_process() -> (ModelOrder, ParameterVector, Network) {
    let net = Network::demo_five();
    let order = ModelOrder {
        p: 1,
        s: vec![1],
        p_prime: vec![1],
        alpha: crate::design::AlphaMode::Local,
    };
    let mut params = ParameterVector::zeros(&order, 5);
    params.alphas[0] = vec![0.4, 0.2, 0.4, 0.2, 0.2];
    params.betas[0][0] = 0.5;
    params.lambdas[0] = vec![0.4, 0.2];
    (order, params, net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::AlphaMode;
    use approx::assert_relative_eq;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn uniform_net(n: usize) -> Network {
        let mut exports = DMatrix::from_element(n, n, 1.0);
        exports.fill_diagonal(0.0);
        Network::fully_connected(names(n), &exports).unwrap()
    }

    #[test]
    fn pure_noise_has_unit_variance() {
        let net = uniform_net(3);
        let order = ModelOrder::new(1, vec![1], vec![], AlphaMode::Global).unwrap();
        let params = ParameterVector::zeros(&order, 3);
        let mut rng = RngSpec::new(7).rng();
        let (panel, _) =
            simulate(&order, &params, &net, 5000, None, &SimulationOptions::default(), &mut rng)
                .unwrap();
        for i in 0..3 {
            let xs: Vec<f64> = (0..5000).map(|k| panel.value(i, k)).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var =
                xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (xs.len() - 1) as f64;
            assert_relative_eq!(var, 1.0, epsilon = 0.1);
        }
    }

    #[test]
    fn simulation_is_bit_reproducible() {
        let (order, params, net) = study_process();
        let run = |stream: u64| {
            let mut rng = RngSpec::new(99).stream(stream);
            simulate(&order, &params, &net, 64, None, &SimulationOptions::default(), &mut rng)
                .unwrap()
                .0
        };
        let a = run(3);
        let b = run(3);
        let c = run(4);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn study_process_paths_are_stationary() {
        let (order, params, net) = study_process();
        let report = design::check_stationarity(&order, &params, 5);
        assert!(report.stationary_sufficient);
        assert_relative_eq!(
            report.margins.iter().cloned().fold(f64::INFINITY, f64::min),
            0.1,
            epsilon = 1e-12
        );
        let mut rng = RngSpec::new(123).rng();
        let (panel, _) =
            simulate(&order, &params, &net, 2000, None, &SimulationOptions::default(), &mut rng)
                .unwrap();
        for i in 0..5 {
            let xs: Vec<f64> = (0..2000).map(|k| panel.value(i, k)).collect();
            let var = xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64;
            assert!(var.is_finite() && var < 50.0, "node {i} variance {var}");
        }
    }

    #[test]
    fn explosive_parameters_report_divergence_step() {
        let net = uniform_net(2);
        let order = ModelOrder::new(1, vec![0], vec![], AlphaMode::Global).unwrap();
        let mut params = ParameterVector::zeros(&order, 2);
        params.alphas[0][0] = 3.0;
        let start = DMatrix::from_element(2, 1, 1.0);
        let innovations = DMatrix::zeros(2, 500);
        let err =
            simulate_path(&order, &params, &net, &start, &[], &innovations).unwrap_err();
        assert!(matches!(err, Error::Diverged { step } if step > 0));
    }

    #[test]
    fn long_sample_refit_recovers_parameters() {
        let (order, params, net) = study_process();
        let mut rng = RngSpec::new(17).rng();
        let (panel, exog) =
            simulate(&order, &params, &net, 4096, None, &SimulationOptions::default(), &mut rng)
                .unwrap();
        let fit = estimator::fit_gnarx(&order, &panel, &exog, &net).unwrap();
        let truth = params.pack();
        for k in 0..truth.len() {
            let dev = (fit.gamma[k] - truth[k]).abs();
            assert!(
                dev <= 3.0 * fit.se_asymptotic[k],
                "param {k}: dev {dev} > 3·SE {}",
                fit.se_asymptotic[k]
            );
        }
    }

    #[test]
    fn noiseless_bootstrap_collapses() {
        // Deterministic exogenous-driven data: residuals are exactly zero,
        // every replicate refit reproduces the same parameters, and the
        // interval width is (numerically) zero.
        let net = uniform_net(3);
        let order = ModelOrder::new(1, vec![1], vec![0], AlphaMode::Global).unwrap();
        let mut params = ParameterVector::zeros(&order, 3);
        params.alphas[0][0] = 0.5;
        params.betas[0][0] = 0.2;
        params.lambdas[0] = vec![0.8];
        let t = 60;
        let exog_vals =
            DMatrix::from_fn(3, t, |i, k| (0.4 * k as f64 + i as f64).cos());
        let start_block = DMatrix::from_fn(3, 1, |i, _| 1.0 + i as f64);
        let innovations = DMatrix::zeros(3, t - 1);
        let path =
            simulate_path(&order, &params, &net, &start_block, &[&exog_vals], &innovations)
                .unwrap();
        let origin = CalendarStamp::new(2000, 1).unwrap();
        let panel = Panel::fully_observed(names(3), origin, path).unwrap();
        let exog = vec![Panel::fully_observed(names(3), origin, exog_vals).unwrap()];
        let scenario = ScenarioPath {
            label: "hold".into(),
            paths: vec![DMatrix::from_fn(3, 2, |i, k| (0.4 * (t + k) as f64 + i as f64).cos())],
        };
        let opts = BootstrapOptions { b: 50, alpha: 0.05, rng: RngSpec::new(5) };
        let report =
            bootstrap_intervals(&order, &panel, &exog, &net, &scenario, 2, &opts).unwrap();
        assert_eq!(report.b_dropped, 0);
        for i in 0..3 {
            for k in 0..2 {
                let width = report.upper[(i, k)] - report.lower[(i, k)];
                assert!(width.abs() < 1e-6, "width {width}");
            }
        }
    }

    #[test]
    fn bootstrap_quantiles_bracket_zero_when_median_near_zero() {
        let (order, params, net) = study_process();
        let mut rng = RngSpec::new(31).rng();
        let (panel, exog) =
            simulate(&order, &params, &net, 120, None, &SimulationOptions::default(), &mut rng)
                .unwrap();
        let scenario = ScenarioPath::zero("z", 5, 1, 3);
        let opts = BootstrapOptions { b: 200, alpha: 0.05, rng: RngSpec::new(6) };
        let report =
            bootstrap_intervals(&order, &panel, &exog, &net, &scenario, 3, &opts).unwrap();
        assert_eq!(report.b_used + report.b_dropped, 200);
        for i in 0..5 {
            for k in 0..3 {
                let mut draws: Vec<f64> =
                    report.errors.iter().map(|e| e[(i, k)]).collect();
                draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = quantile_sorted(&draws, 0.5);
                let lo = quantile_sorted(&draws, 0.025);
                let hi = quantile_sorted(&draws, 0.975);
                if median.abs() < (hi - lo) / 10.0 {
                    assert!(lo <= 0.0 && 0.0 <= hi);
                }
                assert!(report.lower[(i, k)] <= report.upper[(i, k)]);
            }
        }
    }

    #[test]
    fn interval_width_grows_with_horizon_on_average() {
        let (order, params, net) = study_process();
        let mut widths = vec![0.0_f64; 3];
        let seeds = 50;
        for seed in 0..seeds {
            let mut rng = RngSpec::new(1000 + seed).rng();
            let (panel, exog) =
                simulate(&order, &params, &net, 80, None, &SimulationOptions::default(), &mut rng)
                    .unwrap();
            let scenario = ScenarioPath::zero("z", 5, 1, 3);
            let opts =
                BootstrapOptions { b: 60, alpha: 0.05, rng: RngSpec::new(2000 + seed) };
            let report =
                bootstrap_intervals(&order, &panel, &exog, &net, &scenario, 3, &opts).unwrap();
            for (k, w) in widths.iter_mut().enumerate() {
                let mean_width: f64 = (0..5)
                    .map(|i| report.upper[(i, k)] - report.lower[(i, k)])
                    .sum::<f64>()
                    / 5.0;
                *w += mean_width / seeds as f64;
            }
        }
        assert!(widths[0] <= widths[1] && widths[1] <= widths[2], "widths {widths:?}");
    }

    #[test]
    fn easing_scenario_separates_from_tightening() {
        // Strongly exogenous-driven synthetic model: with a negative
        // contemporaneous coefficient, an easing (falling) regressor path
        // must push the mean forecast above the tightening path's upper
        // band within a few steps.
        let net = uniform_net(4);
        let order = ModelOrder::new(1, vec![1], vec![1], AlphaMode::Global).unwrap();
        let mut params = ParameterVector::zeros(&order, 4);
        params.alphas[0][0] = 0.4;
        params.betas[0][0] = 0.1;
        params.lambdas[0] = vec![-0.9, -0.2];
        let mut rng = RngSpec::new(77).rng();
        let sim_opts = SimulationOptions { noise: NoiseSpec { sd: 0.3 }, ..Default::default() };
        let (panel, exog) = simulate(&order, &params, &net, 150, None, &sim_opts, &mut rng).unwrap();

        let h = 6;
        let easing = ScenarioPath {
            label: "easing".into(),
            paths: vec![DMatrix::from_fn(4, h, |_, _| -2.0)],
        };
        let tightening = ScenarioPath {
            label: "tightening".into(),
            paths: vec![DMatrix::from_fn(4, h, |_, _| 2.0)],
        };
        let opts = BootstrapOptions { b: 150, alpha: 0.05, rng: RngSpec::new(8) };
        let rep_e =
            bootstrap_intervals(&order, &panel, &exog, &net, &easing, h, &opts).unwrap();
        let rep_t =
            bootstrap_intervals(&order, &panel, &exog, &net, &tightening, h, &opts).unwrap();
        // Within three steps the easing mean exceeds the tightening 97.5th
        // percentile for every node.
        let k = 2;
        for i in 0..4 {
            assert!(
                rep_e.point[(i, k)] > rep_t.upper[(i, k)],
                "node {i}: easing {} vs tightening upper {}",
                rep_e.point[(i, k)],
                rep_t.upper[(i, k)]
            );
        }
    }

    #[test]
    fn quantile_interpolation_matches_hand_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_relative_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert_relative_eq!(quantile_sorted(&xs, 0.5), 2.5);
        assert_relative_eq!(quantile_sorted(&xs, 0.25), 1.75);
    }
}
