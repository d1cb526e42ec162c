//! Point forecasting and forecast evaluation.
//!
//! One-step forecasts apply the fitted recursion
//! `Ŷ_{t+1} = Σ_k φ̂_k Y_{t+1−k} + Σ_h Σ_{j'} Λ̂_{h,j'} X_{h,t+1−j'}`
//! directly through the same design-row construction used in estimation, so
//! missing lagged values are handled identically: neighbour weights are
//! re-normalized over observed nodes and a missing value contributes zero.
//!
//! Rolling evaluation fixes the parameters at an in-sample fit (refitting
//! every step is available but off by default), rolls one-step forecasts
//! across the evaluation window, and pools squared errors across nodes and
//! months: MSFE is their mean and its standard error is
//! `sd(squared errors)/√count`.
//!
//! Scenario-conditioned forecasts iterate the one-step map, feeding each
//! prediction back as history while exogenous regressors follow caller-chosen
//! future paths.

use nalgebra::{DMatrix, DVector};

use crate::design::{self, MissingLagPolicy, ModelOrder, ParameterVector};
use crate::error::{Error, Result};
use crate::estimator::{self, FitResult};
use crate::network::Network;
use crate::panel::{CalendarStamp, Panel};

/// Future exogenous-regressor paths for conditional forecasting, already in
/// the same (model) space as the regressors the model was fit on.
#[derive(Debug, Clone)]
pub struct ScenarioPath {
    pub label: String,
    /// One N×Hz matrix per exogenous regressor.
    pub paths: Vec<DMatrix<f64>>,
}

impl ScenarioPath {
    pub fn horizon(&self) -> usize {
        self.paths.first().map_or(0, |p| p.ncols())
    }

    pub fn validate(&self, n: usize, n_exog: usize, horizon: usize) -> Result<()> {
        if self.paths.len() != n_exog {
            return Err(Error::Dimension(format!(
                "scenario '{}' has {} regressor paths, model expects {}",
                self.label,
                self.paths.len(),
                n_exog
            )));
        }
        for (h, p) in self.paths.iter().enumerate() {
            if p.nrows() != n {
                return Err(Error::Dimension(format!(
                    "scenario '{}' regressor {} covers {} nodes, expected {}",
                    self.label,
                    h + 1,
                    p.nrows(),
                    n
                )));
            }
            if p.ncols() < horizon {
                return Err(Error::Dimension(format!(
                    "scenario '{}' regressor {} covers {} steps, horizon needs {}",
                    self.label,
                    h + 1,
                    p.ncols(),
                    horizon
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "scenario '{}' contains non-finite values",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// A scenario holding every regressor of every node at zero ("no change"
    /// in model space).
    pub fn zero(label: &str, n: usize, n_exog: usize, horizon: usize) -> ScenarioPath {
        ScenarioPath {
            label: label.to_string(),
            paths: (0..n_exog).map(|_| DMatrix::zeros(n, horizon)).collect(),
        }
    }
}

/// Turn a level-path into model-space first differences, anchored at the last
/// observed level per node.
pub fn difference_scenario_levels(
    levels: &DMatrix<f64>,
    last_level: &DVector<f64>,
) -> DMatrix<f64> {
    DMatrix::from_fn(levels.nrows(), levels.ncols(), |i, k| {
        if k == 0 {
            levels[(i, 0)] - last_level[i]
        } else {
            levels[(i, k)] - levels[(i, k - 1)]
        }
    })
}

/// One-step forecast of target time `u` (0-based index into the supplied
/// matrices; lags `u−1 …` must exist, and exogenous values at `u` feed the
/// contemporaneous term).
#[allow(clippy::too_many_arguments)]
pub fn forecast_one_step(
    order: &ModelOrder,
    params: &ParameterVector,
    net: &Network,
    endo_vals: &DMatrix<f64>,
    endo_obs: &DMatrix<bool>,
    exog_vals: &[&DMatrix<f64>],
    exog_obs: &[&DMatrix<bool>],
    u: usize,
) -> Result<DVector<f64>> {
    if u < order.p_star() {
        return Err(Error::InsufficientData(format!(
            "forecast target {u} needs at least p* = {} past observations",
            order.p_star()
        )));
    }
    let n = net.n_nodes();
    let gamma = params.pack();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let row = design::design_row(
            order,
            net,
            endo_vals,
            endo_obs,
            exog_vals,
            exog_obs,
            i,
            u,
            MissingLagPolicy::ZeroContribution,
        )
        .expect("zero-contribution rows always exist");
        out[i] = row.dot(&gamma);
    }
    Ok(out)
}

/// Convenience wrapper taking a completed fit and panel history.
pub fn forecast_one_step_fit(
    fit: &FitResult,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
    u: usize,
) -> Result<DVector<f64>> {
    let exog_vals: Vec<&DMatrix<f64>> = exog.iter().map(|x| x.values()).collect();
    let exog_obs: Vec<&DMatrix<bool>> = exog.iter().map(|x| x.observed()).collect();
    forecast_one_step(
        &fit.order,
        &fit.params,
        net,
        panel.values(),
        panel.observed(),
        &exog_vals,
        &exog_obs,
        u,
    )
}

/// Iterate one-step forecasts `horizon` steps past the end of the history,
/// feeding predictions back as observed history. Exogenous futures come from
/// `scenario` (model space).
pub fn forecast_scenario(
    fit: &FitResult,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
    scenario: &ScenarioPath,
    horizon: usize,
) -> Result<DMatrix<f64>> {
    let n = panel.n_nodes();
    scenario.validate(n, fit.order.n_exog(), horizon)?;
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
        let pred = forecast_one_step(
            &fit.order,
            &fit.params,
            net,
            &endo_vals,
            &endo_obs,
            &vals_refs,
            &obs_refs,
            u,
        )?;
        for i in 0..n {
            endo_vals[(i, u)] = pred[i];
            endo_obs[(i, u)] = true;
            out[(i, k)] = pred[i];
        }
    }
    Ok(out)
}

/// One recorded forecast.
#[derive(Debug, Clone)]
pub struct ForecastRecord {
    pub node: usize,
    /// Time index into the panel calendar.
    pub time: usize,
    pub point: f64,
    pub realized: Option<f64>,
}

/// Pooled forecast-accuracy report.
#[derive(Debug, Clone)]
pub struct ForecastReport {
    pub records: Vec<ForecastRecord>,
    /// Mean of pooled squared errors over all scored records.
    pub msfe: f64,
    /// Standard error of that mean: sd(squared errors)/√count.
    pub se: f64,
    pub n_scored: usize,
}

impl ForecastReport {
    fn from_records(records: Vec<ForecastRecord>) -> Result<ForecastReport> {
        let sq: Vec<f64> = records
            .iter()
            .filter_map(|r| r.realized.map(|y| (y - r.point) * (y - r.point)))
            .collect();
        if sq.is_empty() {
            return Err(Error::InsufficientData(
                "no realized values in the evaluation window".into(),
            ));
        }
        let n = sq.len() as f64;
        let msfe = sq.iter().sum::<f64>() / n;
        let var =
            sq.iter().map(|e| (e - msfe) * (e - msfe)).sum::<f64>() / (n - 1.0).max(1.0);
        Ok(ForecastReport { records, msfe, se: (var / n).sqrt(), n_scored: sq.len() })
    }
}

/// Evaluation protocol options.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// First forecasted month.
    pub split: CalendarStamp,
    /// Last forecasted month (defaults to the end of the panel).
    pub end: Option<CalendarStamp>,
    /// Re-estimate parameters on the expanding window before every step.
    pub refit: bool,
    /// Estimate parameters on the whole series instead of the pre-split
    /// window (in-sample forecast evaluation); forecasts still use only
    /// past observations.
    pub fit_on_full: bool,
}

impl EvalOptions {
    pub fn new(split: CalendarStamp) -> Self {
        EvalOptions { split, end: None, refit: false, fit_on_full: false }
    }
}

/// One-step rolling evaluation of a GNARX specification. Returns the
/// in-sample fit and the pooled report.
pub fn rolling_evaluation(
    order: &ModelOrder,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
    opts: &EvalOptions,
) -> Result<(FitResult, ForecastReport)> {
    let (split_idx, end_idx) = eval_range(panel, opts)?;
    if split_idx <= order.p_star() {
        return Err(Error::InsufficientData("no in-sample data before split".into()));
    }

    let fit_window_end = if opts.fit_on_full { None } else { Some(opts.split.add_months(-1)) };
    let fit_panel = panel.slice_time(None, fit_window_end)?;
    let fit_exog: Vec<Panel> = exog
        .iter()
        .map(|x| x.slice_time(None, fit_window_end))
        .collect::<Result<_>>()?;
    let mut fit = estimator::fit_gnarx(order, &fit_panel, &fit_exog, net)?;
    let base_fit = fit.clone();

    let exog_vals: Vec<&DMatrix<f64>> = exog.iter().map(|x| x.values()).collect();
    let exog_obs: Vec<&DMatrix<bool>> = exog.iter().map(|x| x.observed()).collect();
    let mut records = Vec::new();
    for u in split_idx..=end_idx {
        if opts.refit && !opts.fit_on_full {
            let upto = panel.times()[u - 1];
            let w_panel = panel.slice_time(None, Some(upto))?;
            let w_exog: Vec<Panel> = exog
                .iter()
                .map(|x| x.slice_time(None, Some(upto)))
                .collect::<Result<_>>()?;
            fit = estimator::fit_gnarx(order, &w_panel, &w_exog, net)?;
        }
        let pred = forecast_one_step(
            &fit.order,
            &fit.params,
            net,
            panel.values(),
            panel.observed(),
            &exog_vals,
            &exog_obs,
            u,
        )?;
        for i in 0..panel.n_nodes() {
            records.push(ForecastRecord {
                node: i,
                time: u,
                point: pred[i],
                realized: panel.is_observed(i, u).then(|| panel.value(i, u)),
            });
        }
    }
    Ok((base_fit, ForecastReport::from_records(records)?))
}

/// Unrestricted VAR(p) fitted by per-equation OLS.
#[derive(Debug, Clone)]
pub struct VarFit {
    pub p: usize,
    /// Lag coefficient matrices A_1 … A_p.
    pub coeffs: Vec<DMatrix<f64>>,
    pub intercept: Option<DVector<f64>>,
}

impl VarFit {
    pub fn n_parameters(&self) -> usize {
        let n = self.coeffs[0].nrows();
        n * n * self.p + if self.intercept.is_some() { n } else { 0 }
    }

    /// One-step forecast of time `u` from the value matrix (all lags must be
    /// observed).
    pub fn forecast_one_step(&self, values: &DMatrix<f64>, u: usize) -> DVector<f64> {
        let n = values.nrows();
        let mut y = self.intercept.clone().unwrap_or_else(|| DVector::zeros(n));
        for k in 1..=self.p {
            y += &self.coeffs[k - 1] * values.column(u - k);
        }
        y
    }
}

/// Fit a VAR(p) on the panel columns `[0, fit_end)` by per-equation OLS.
/// The window must be fully observed: VAR has no missing-data handling.
pub fn fit_var(panel: &Panel, p: usize, intercept: bool, fit_end: usize) -> Result<VarFit> {
    let n = panel.n_nodes();
    if p == 0 || fit_end <= p {
        return Err(Error::InsufficientData("VAR needs fit_end > p >= 1".into()));
    }
    for i in 0..n {
        for t in 0..fit_end {
            if !panel.is_observed(i, t) {
                return Err(Error::Validation(format!(
                    "VAR requires a balanced panel; node '{}' missing at {}",
                    panel.nodes()[i],
                    panel.times()[t]
                )));
            }
        }
    }
    let k = n * p + usize::from(intercept);
    let rows = fit_end - p;
    if rows < k {
        return Err(Error::InsufficientData(format!(
            "VAR({p}) needs {k} observations per equation, window provides {rows}"
        )));
    }
    let mut x = DMatrix::zeros(rows, k);
    for (row, u) in (p..fit_end).enumerate() {
        let mut c = 0usize;
        for lag in 1..=p {
            for i in 0..n {
                x[(row, c)] = panel.value(i, u - lag);
                c += 1;
            }
        }
        if intercept {
            x[(row, c)] = 1.0;
        }
    }
    let xtx = x.transpose() * &x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Singular("VAR design matrix is rank deficient".into()))?;
    let mut coeffs = vec![DMatrix::zeros(n, n); p];
    let mut icept = DVector::zeros(n);
    for i in 0..n {
        let y = DVector::from_fn(rows, |row, _| panel.value(i, p + row));
        let beta = chol.solve(&(x.transpose() * y));
        let mut c = 0usize;
        for lag in 1..=p {
            for j in 0..n {
                coeffs[lag - 1][(i, j)] = beta[c];
                c += 1;
            }
        }
        if intercept {
            icept[i] = beta[c];
        }
    }
    Ok(VarFit { p, coeffs, intercept: intercept.then_some(icept) })
}

/// Rolling one-step evaluation of a VAR(p) baseline with parameters fixed at
/// the pre-split fit.
pub fn rolling_evaluation_var(
    panel: &Panel,
    p: usize,
    intercept: bool,
    opts: &EvalOptions,
) -> Result<(VarFit, ForecastReport)> {
    let (split_idx, end_idx) = eval_range(panel, opts)?;
    let fit_end = if opts.fit_on_full { panel.n_times() } else { split_idx };
    let var = fit_var(panel, p, intercept, fit_end)?;
    let mut records = Vec::new();
    for u in split_idx..=end_idx {
        for i in 0..panel.n_nodes() {
            for lag in 1..=p {
                if !panel.is_observed(i, u - lag) {
                    return Err(Error::Validation(
                        "VAR forecasting requires observed lags".into(),
                    ));
                }
            }
        }
        let pred = var.forecast_one_step(panel.values(), u);
        for i in 0..panel.n_nodes() {
            records.push(ForecastRecord {
                node: i,
                time: u,
                point: pred[i],
                realized: panel.is_observed(i, u).then(|| panel.value(i, u)),
            });
        }
    }
    Ok((var, ForecastReport::from_records(records)?))
}

/// Per-node AR(1) coefficients by scalar least squares over observed adjacent
/// pairs, i.e. the OLS estimator of the local-α GNARX(1,[0]) specification, node
/// by node.
pub fn fit_ar1_per_node(panel: &Panel, fit_end: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(panel.n_nodes());
    for i in 0..panel.n_nodes() {
        let mut num = 0.0;
        let mut den = 0.0;
        for u in 1..fit_end {
            if panel.is_observed(i, u) && panel.is_observed(i, u - 1) {
                num += panel.value(i, u) * panel.value(i, u - 1);
                den += panel.value(i, u - 1) * panel.value(i, u - 1);
            }
        }
        if den == 0.0 {
            return Err(Error::InsufficientData(format!(
                "node '{}' has no adjacent observed pairs before the split",
                panel.nodes()[i]
            )));
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Rolling evaluation of the per-node AR(1) baseline.
pub fn rolling_evaluation_ar1(panel: &Panel, opts: &EvalOptions) -> Result<ForecastReport> {
    let (split_idx, end_idx) = eval_range(panel, opts)?;
    let fit_end = if opts.fit_on_full { panel.n_times() } else { split_idx };
    let alphas = fit_ar1_per_node(panel, fit_end)?;
    let mut records = Vec::new();
    for u in split_idx..=end_idx {
        for (i, &alpha) in alphas.iter().enumerate() {
            if !panel.is_observed(i, u - 1) {
                continue;
            }
            records.push(ForecastRecord {
                node: i,
                time: u,
                point: alpha * panel.value(i, u - 1),
                realized: panel.is_observed(i, u).then(|| panel.value(i, u)),
            });
        }
    }
    ForecastReport::from_records(records)
}

/// Rolling evaluation of the naive forecast `Ŷ_{t+1} = Y_t`.
pub fn rolling_evaluation_naive(panel: &Panel, opts: &EvalOptions) -> Result<ForecastReport> {
    let (split_idx, end_idx) = eval_range(panel, opts)?;
    let mut records = Vec::new();
    for u in split_idx..=end_idx {
        for i in 0..panel.n_nodes() {
            if !panel.is_observed(i, u - 1) {
                continue;
            }
            records.push(ForecastRecord {
                node: i,
                time: u,
                point: panel.value(i, u - 1),
                realized: panel.is_observed(i, u).then(|| panel.value(i, u)),
            });
        }
    }
    ForecastReport::from_records(records)
}

fn eval_range(panel: &Panel, opts: &EvalOptions) -> Result<(usize, usize)> {
    let split_idx = panel
        .time_index(&opts.split)
        .ok_or_else(|| Error::Dimension(format!("split {} outside panel range", opts.split)))?;
    if split_idx == 0 {
        return Err(Error::InsufficientData("split at the first observation".into()));
    }
    let end_idx = match opts.end {
        Some(e) => panel
            .time_index(&e)
            .ok_or_else(|| Error::Dimension(format!("end {e} outside panel range")))?,
        None => panel.n_times() - 1,
    };
    if end_idx < split_idx {
        return Err(Error::Dimension("empty evaluation window".into()));
    }
    Ok((split_idx, end_idx))
}
