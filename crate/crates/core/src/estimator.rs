//! Restricted least-squares estimation of γ.
//!
//! One feasible generalised least squares step, following the restricted-VAR
//! treatment: ordinary least squares first, then
//!
//! ```text
//! Σ̂_u = T'⁻¹ (Y − B̂Z)(Y − B̂Z)',
//! γ̂   = { R'(ZZ' ⊗ Σ̂_u⁻¹)R }⁻¹ R'(Z ⊗ Σ̂_u⁻¹) vec(Y),
//! ```
//!
//! computed without materializing any Kronecker product: with the per-time
//! design blocks `D_t` (so that `D_t = (z_t' ⊗ I_N)R` on complete data) the
//! normal equations accumulate as `G = Σ_t D_t' W_t D_t` and
//! `b = Σ_t D_t' W_t y_t`, where `W_t` is `Σ̂_u⁻¹` with rows and columns
//! zeroed at unobserved cells. Zeroing is exactly the "residuals set to zero"
//! missing-data rule. Time order of the accumulation is fixed, so fits are
//! bit-reproducible.
//!
//! Standard errors come in two flavours: asymptotic ones from the inverse
//! weighted normal matrix, and HC2 sandwich errors computed on the whitened
//! stacked regression with residuals scaled by `(1 − h_k)^{-1/2}` leverage
//! adjustments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::{self, ModelOrder, ParameterVector, RegressionData};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::panel::Panel;
use crate::selector;

/// Relative condition-number threshold beyond which Σ̂_u is ridge-regularized
/// before inversion.
const SIGMA_CONDITION_LIMIT: f64 = 1e12;

/// Completed fit: parameters, innovation covariance, residuals and inference.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub order: ModelOrder,
    pub node_names: Vec<String>,
    pub params: ParameterVector,
    /// Packed γ estimate.
    pub gamma: DVector<f64>,
    pub param_names: Vec<String>,
    /// Innovation covariance re-estimated from the final residuals.
    pub sigma_u: DMatrix<f64>,
    /// N×T' residual matrix; unobserved cells are zero.
    pub residuals: DMatrix<f64>,
    pub residual_mask: DMatrix<bool>,
    pub se_asymptotic: DVector<f64>,
    pub se_hc2: DVector<f64>,
    /// Two-sided normal p-values based on the HC2 standard errors.
    pub p_values: DVector<f64>,
    /// Gaussian log-likelihood proxy at the final fit.
    pub loglik_proxy: f64,
    pub bic: f64,
    /// Estimation-sample length T' = T − p*.
    pub effective_t: usize,
    /// Rows excluded from the HC2 meat because their leverage reached one.
    pub hc2_dropped_rows: usize,
}

impl FitResult {
    /// Parameter table serialized per the external interface: name, estimate,
    /// both standard errors, p-value.
    pub fn parameter_table(&self) -> Vec<ParameterRow> {
        (0..self.gamma.len())
            .map(|k| ParameterRow {
                name: self.param_names[k].clone(),
                estimate: self.gamma[k],
                se_asymptotic: self.se_asymptotic[k],
                se_hc2: self.se_hc2[k],
                p_value: self.p_values[k],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub se_asymptotic: f64,
    pub se_hc2: f64,
    pub p_value: f64,
}

/// First-stage OLS output.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub gamma: DVector<f64>,
    /// Residuals with unobserved cells fixed at zero.
    pub residuals: DMatrix<f64>,
}

/// Masked residual matrix for a given γ.
fn residual_matrix(data: &RegressionData, gamma: &DVector<f64>) -> DMatrix<f64> {
    let mut res = DMatrix::zeros(data.n, data.effective_t);
    for tau in 0..data.effective_t {
        let fitted = &data.blocks[tau] * gamma;
        for i in 0..data.n {
            if data.target_mask[(i, tau)] {
                res[(i, tau)] = data.targets[(i, tau)] - fitted[i];
            }
        }
    }
    res
}

/// Accumulate the weighted normal equations `G = Σ_t D_t' W_t D_t`,
/// `b = Σ_t D_t' W_t y_t`. `weight = None` means OLS (identity weight on
/// observed cells); otherwise `W_t` zeroes the rows/columns of the given
/// matrix at unobserved cells.
fn accumulate_normal_equations(
    data: &RegressionData,
    weight: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = data.m;
    let n = data.n;
    let mut g = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    for tau in 0..data.effective_t {
        let block = &data.blocks[tau];
        let obs: Vec<usize> = (0..n).filter(|&i| data.target_mask[(i, tau)]).collect();
        if obs.is_empty() {
            continue;
        }
        match weight {
            None => {
                for &i in &obs {
                    let row = block.row(i);
                    let y = data.targets[(i, tau)];
                    for a in 0..m {
                        let ra = row[a];
                        if ra == 0.0 {
                            continue;
                        }
                        b[a] += ra * y;
                        for c in 0..m {
                            g[(a, c)] += ra * row[c];
                        }
                    }
                }
            }
            Some(w) => {
                for &i in &obs {
                    let row_i = block.row(i);
                    for &j in &obs {
                        let wij = w[(i, j)];
                        if wij == 0.0 {
                            continue;
                        }
                        let yj = data.targets[(j, tau)];
                        let row_j = block.row(j);
                        for a in 0..m {
                            let ra = row_i[a];
                            if ra == 0.0 {
                                continue;
                            }
                            b[a] += ra * wij * yj;
                            let scale = ra * wij;
                            for c in 0..m {
                                g[(a, c)] += scale * row_j[c];
                            }
                        }
                    }
                }
            }
        }
    }
    (g, b)
}

/// Solve the SPD system `G x = b`, reporting deficient columns on failure.
fn solve_normal_equations(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    param_names: &[String],
) -> Result<DVector<f64>> {
    if let Some(chol) = g.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let deficient = deficient_columns(g);
    let names: Vec<&str> = deficient
        .iter()
        .map(|&k| param_names.get(k).map(|s| s.as_str()).unwrap_or("?"))
        .collect();
    Err(Error::Singular(format!(
        "normal matrix is rank deficient; deficient columns: [{}]",
        names.join(", ")
    )))
}

/// Pivoted Cholesky pass that identifies the columns with no independent
/// contribution (pivot below tolerance).
fn deficient_columns(g: &DMatrix<f64>) -> Vec<usize> {
    let m = g.nrows();
    let mut a = g.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let max_diag = (0..m).map(|i| g[(i, i)].abs()).fold(0.0_f64, f64::max);
    let tol = 1e-12 * max_diag.max(1e-300);
    for k in 0..m {
        let (piv, best) = (k..m)
            .map(|i| (i, a[(i, i)]))
            .fold((k, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best <= tol {
            let mut rest = perm[k..].to_vec();
            rest.sort_unstable();
            return rest;
        }
        if piv != k {
            a.swap_rows(k, piv);
            a.swap_columns(k, piv);
            perm.swap(k, piv);
        }
        let d = a[(k, k)].sqrt();
        for i in k + 1..m {
            a[(i, k)] /= d;
        }
        for i in k + 1..m {
            for j in k + 1..=i {
                let upd = a[(i, k)] * a[(j, k)];
                a[(i, j)] -= upd;
                if i != j {
                    a[(j, i)] -= upd;
                }
            }
        }
    }
    Vec::new()
}

/// Invert Σ̂_u, ridge-regularizing by `1e-8·trace/N · I` when the condition
/// number exceeds the guard (or the matrix is not positive definite).
pub(crate) fn invert_sigma(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if sigma.trace() <= 1e-100 {
        // Residuals are (numerically) zero: any weighting yields the same
        // estimate, so use the OLS weight.
        return Ok(DMatrix::identity(n, n));
    }
    let eig = sigma.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min_ev = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let needs_ridge = min_ev <= 0.0 || max_ev / min_ev > SIGMA_CONDITION_LIMIT;
    let working = if needs_ridge {
        let ridge = 1e-8 * sigma.trace().max(1e-300) / n as f64;
        log::warn!(
            "sigma_u ill-conditioned (min eigenvalue {min_ev:.3e}); adding ridge {ridge:.3e}"
        );
        sigma + DMatrix::identity(n, n) * ridge
    } else {
        sigma.clone()
    };
    working
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("sigma_u not positive definite after ridge".into()))
}

/// Ordinary least squares for γ over the observed target cells.
pub fn fit_ols(data: &RegressionData) -> Result<OlsFit> {
    let observed = data.n_observed_targets();
    if observed < data.m {
        return Err(Error::InsufficientData(format!(
            "{observed} observed target cells for {} parameters",
            data.m
        )));
    }
    let (g, b) = accumulate_normal_equations(data, None);
    let gamma = solve_normal_equations(&g, &b, &data.param_names)?;
    let residuals = residual_matrix(data, &gamma);
    Ok(OlsFit { gamma, residuals })
}

/// Maximum-likelihood innovation covariance `T'⁻¹ Σ_t r_t r_t'` with the
/// zeroed missing residuals included and `T'` the estimation-sample length.
pub fn estimate_sigma_u(residuals: &DMatrix<f64>, effective_t: usize) -> DMatrix<f64> {
    let scale = 1.0 / effective_t as f64;
    residuals * residuals.transpose() * scale
}

/// One feasible GLS step with the supplied innovation covariance.
pub fn fit_fgls(data: &RegressionData, sigma_u: &DMatrix<f64>) -> Result<DVector<f64>> {
    let sigma_inv = invert_sigma(sigma_u)?;
    let (g, b) = accumulate_normal_equations(data, Some(&sigma_inv));
    solve_normal_equations(&g, &b, &data.param_names)
}

/// Asymptotic covariance of γ̂:
/// `T'⁻¹ [R'{(T'⁻¹ZZ') ⊗ Σ̂_u⁻¹}R]⁻¹`, i.e. the inverse weighted normal
/// matrix, generalized to masked data by the same zeroing rule as the fit.
pub fn asymptotic_covariance(
    data: &RegressionData,
    sigma_u: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let sigma_inv = invert_sigma(sigma_u)?;
    let (g, _) = accumulate_normal_equations(data, Some(&sigma_inv));
    g.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
        let deficient = deficient_columns(&g);
        Error::Singular(format!(
            "weighted normal matrix not invertible; deficient columns {deficient:?}"
        ))
    })
}

/// HC2 sandwich output.
#[derive(Debug, Clone)]
pub struct Hc2Output {
    pub se: DVector<f64>,
    /// Two-sided normal p-values for γ̂/se.
    pub p_values: DVector<f64>,
    /// Rows excluded because their leverage reached one.
    pub dropped_rows: usize,
}

/// HC2 standard errors on the whitened stacked regression.
///
/// Each time block is whitened by the Cholesky factor of `Σ̂_u⁻¹` restricted
/// to its observed cells, which makes the FGLS estimate the plain OLS solution
/// of the whitened system. Leverages `h_k` come from its hat matrix and the
/// sandwich meat scales squared residuals by `1/(1 − h_k)`.
pub fn hc2_standard_errors(
    data: &RegressionData,
    gamma: &DVector<f64>,
    sigma_u: &DMatrix<f64>,
) -> Result<Hc2Output> {
    let sigma_inv = invert_sigma(sigma_u)?;
    let (g, _) = accumulate_normal_equations(data, Some(&sigma_inv));
    let g_inv = g
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("weighted normal matrix not invertible".into()))?;

    let m = data.m;
    let mut meat = DMatrix::zeros(m, m);
    let mut dropped = 0usize;
    for tau in 0..data.effective_t {
        let obs: Vec<usize> = (0..data.n).filter(|&i| data.target_mask[(i, tau)]).collect();
        if obs.is_empty() {
            continue;
        }
        let k = obs.len();
        let sub = DMatrix::from_fn(k, k, |a, b| sigma_inv[(obs[a], obs[b])]);
        let chol = sub
            .cholesky()
            .ok_or_else(|| Error::Singular("sigma_u inverse submatrix not PD".into()))?;
        let l = chol.l();
        let block = &data.blocks[tau];
        let d_obs = DMatrix::from_fn(k, m, |a, c| block[(obs[a], c)]);
        let y_obs = DVector::from_fn(k, |a, _| data.targets[(obs[a], tau)]);
        let x_tilde = l.transpose() * &d_obs;
        let e_tilde = l.transpose() * (y_obs - &d_obs * gamma);
        for a in 0..k {
            let row = x_tilde.row(a).transpose();
            let h = (row.transpose() * &g_inv * &row)[(0, 0)];
            if h >= 1.0 - 1e-8 {
                dropped += 1;
                log::warn!(
                    "HC2: leverage {h:.6} at block {tau} row {a}; row excluded from the sandwich"
                );
                continue;
            }
            let w = e_tilde[a] * e_tilde[a] / (1.0 - h);
            meat += &row * row.transpose() * w;
        }
    }
    let cov = &g_inv * meat * &g_inv;
    let se = DVector::from_fn(m, |k, _| cov[(k, k)].max(0.0).sqrt());
    let p_values = DVector::from_fn(m, |k, _| {
        if se[k] == 0.0 {
            if gamma[k] == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            let z = (gamma[k] / se[k]).abs();
            statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
        }
    });
    Ok(Hc2Output { se, p_values, dropped_rows: dropped })
}

/// Point estimate and BIC only: the OLS → Σ̂_u → FGLS chain without the
/// inference extras. This is the hot path for order search and bootstrap
/// replicates.
#[derive(Debug, Clone)]
pub struct LeanFit {
    pub gamma: DVector<f64>,
    /// Innovation covariance from the final (FGLS) residuals.
    pub sigma_u: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub bic: f64,
    pub effective_t: usize,
}

pub fn fit_lean(data: &RegressionData) -> Result<LeanFit> {
    let ols = fit_ols(data)?;
    let sigma_first = estimate_sigma_u(&ols.residuals, data.effective_t);
    let gamma = fit_fgls(data, &sigma_first)?;
    let residuals = residual_matrix(data, &gamma);
    let sigma_u = estimate_sigma_u(&residuals, data.effective_t);
    let bic = selector::bic_from_parts(&sigma_u, data.effective_t, data.m);
    Ok(LeanFit { gamma, sigma_u, residuals, bic, effective_t: data.effective_t })
}

/// Full single-step pipeline: OLS → Σ̂_u → FGLS → inference.
pub fn fit(data: &RegressionData) -> Result<FitResult> {
    let ols = fit_ols(data)?;
    let sigma_first = estimate_sigma_u(&ols.residuals, data.effective_t);
    let sigma_inv = invert_sigma(&sigma_first)?;

    let (g, b) = accumulate_normal_equations(data, Some(&sigma_inv));
    let gamma = solve_normal_equations(&g, &b, &data.param_names)?;
    let g_inv = g
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("weighted normal matrix not invertible".into()))?;
    let se_asymptotic = DVector::from_fn(data.m, |k, _| g_inv[(k, k)].max(0.0).sqrt());

    let residuals = residual_matrix(data, &gamma);
    let sigma_u = estimate_sigma_u(&residuals, data.effective_t);
    let hc2 = hc2_standard_errors(data, &gamma, &sigma_first)?;

    let log_det = selector::guarded_log_det(&sigma_u);
    let t_eff = data.effective_t as f64;
    let n = data.n as f64;
    let loglik_proxy = -0.5 * t_eff * (n * (2.0 * std::f64::consts::PI).ln() + log_det + n);
    let bic = selector::bic_from_parts(&sigma_u, data.effective_t, data.m);

    let params = ParameterVector::unpack(&data.order, data.n, &gamma)?;
    Ok(FitResult {
        order: data.order.clone(),
        node_names: data.node_names.clone(),
        params,
        gamma,
        param_names: data.param_names.clone(),
        sigma_u,
        residuals,
        residual_mask: data.target_mask.clone(),
        se_asymptotic,
        se_hc2: hc2.se,
        p_values: hc2.p_values,
        loglik_proxy,
        bic,
        effective_t: data.effective_t,
        hc2_dropped_rows: hc2.dropped_rows,
    })
}

/// Convenience wrapper: build the regression data and fit in one call.
pub fn fit_gnarx(
    order: &ModelOrder,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
) -> Result<FitResult> {
    let data = design::build_regression_data(order, panel, exog, net)?;
    fit(&data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_regression_data, AlphaMode};
    use crate::panel::CalendarStamp;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn uniform_net(n: usize) -> Network {
        let mut exports = DMatrix::from_element(n, n, 1.0);
        exports.fill_diagonal(0.0);
        Network::fully_connected(names(n), &exports).unwrap()
    }

    fn noise(rng: &mut StdRng) -> f64 {
        StandardNormal.sample(rng)
    }

    /// Generate a stationary GNARX path on a given network with normal
    /// innovations; exogenous values drawn iid standard normal.
    fn generate(
        order: &ModelOrder,
        params: &ParameterVector,
        net: &Network,
        t: usize,
        noise_scale: f64,
        rng: &mut StdRng,
    ) -> (Panel, Vec<Panel>) {
        let n = net.n_nodes();
        let burn = 60;
        let total = t + burn;
        let h = order.n_exog();
        let exog_vals: Vec<DMatrix<f64>> =
            (0..h).map(|_| DMatrix::from_fn(n, total, |_, _| noise(rng))).collect();
        let mut y = DMatrix::zeros(n, total);
        let p_star = order.p_star();
        for u in p_star..total {
            for i in 0..n {
                let mut v = 0.0;
                for j in 1..=order.p {
                    v += params.alpha(i, j) * y[(i, u - j)];
                    for r in 1..=order.s[j - 1] {
                        let w = net.stage_weights(i, r).unwrap();
                        let agg: f64 = w.iter().map(|&(q, wq)| wq * y[(q, u - j)]).sum();
                        v += params.betas[j - 1][r - 1] * agg;
                    }
                }
                for (hh, lags) in params.lambdas.iter().enumerate() {
                    for (lag, &lam) in lags.iter().enumerate() {
                        v += lam * exog_vals[hh][(i, u - lag)];
                    }
                }
                y[(i, u)] = v + noise_scale * noise(rng);
            }
        }
        let start = CalendarStamp::new(2000, 1).unwrap();
        let panel = Panel::fully_observed(
            net.nodes().to_vec(),
            start,
            y.columns(burn, t).into_owned(),
        )
        .unwrap();
        let exog = exog_vals
            .into_iter()
            .map(|x| {
                Panel::fully_observed(net.nodes().to_vec(), start, x.columns(burn, t).into_owned())
                    .unwrap()
            })
            .collect();
        (panel, exog)
    }

    #[test]
    fn noiseless_data_recovers_gamma() {
        let mut rng = StdRng::seed_from_u64(21);
        let net = uniform_net(4);
        let order = ModelOrder::new(1, vec![1], vec![1], AlphaMode::Local).unwrap();
        let mut params = ParameterVector::zeros(&order, 4);
        params.alphas[0] = vec![0.3, -0.2, 0.25, 0.1];
        params.betas[0][0] = 0.4;
        params.lambdas[0] = vec![0.5, -0.3];
        let (panel, exog) = generate(&order, &params, &net, 60, 0.0, &mut rng);
        let data = build_regression_data(&order, &panel, &exog, &net).unwrap();
        let ols = fit_ols(&data).unwrap();
        let truth = params.pack();
        for k in 0..truth.len() {
            assert_relative_eq!(ols.gamma[k], truth[k], epsilon = 1e-8);
        }
        assert!(ols.residuals.iter().all(|&r| r.abs() < 1e-8));
    }

    #[test]
    fn single_node_reduces_to_scalar_ar1() {
        let mut rng = StdRng::seed_from_u64(22);
        let t = 80;
        let mut y = vec![0.0; t];
        for u in 1..t {
            y[u] = 0.6 * y[u - 1] + noise(&mut rng);
        }
        let values = DMatrix::from_fn(1, t, |_, j| y[j]);
        let panel = Panel::fully_observed(
            vec!["solo".into()],
            CalendarStamp::new(2000, 1).unwrap(),
            values,
        )
        .unwrap();
        let net = Network::from_edges(vec!["solo".into()], &[]).unwrap();
        let order = ModelOrder::new(1, vec![0], vec![], AlphaMode::Local).unwrap();
        let data = build_regression_data(&order, &panel, &[], &net).unwrap();
        let ols = fit_ols(&data).unwrap();
        let num: f64 = (1..t).map(|u| y[u] * y[u - 1]).sum();
        let den: f64 = (1..t).map(|u| y[u - 1] * y[u - 1]).sum();
        assert_relative_eq!(ols.gamma[0], num / den, epsilon = 1e-12);
    }

    #[test]
    fn pooled_global_fit_on_identical_nodes_matches_single_node() {
        let mut rng = StdRng::seed_from_u64(23);
        let t = 60;
        let mut y = vec![0.0; t];
        for u in 1..t {
            y[u] = 0.5 * y[u - 1] + noise(&mut rng);
        }
        let values = DMatrix::from_fn(2, t, |_, j| y[j]);
        let panel =
            Panel::fully_observed(names(2), CalendarStamp::new(2000, 1).unwrap(), values).unwrap();
        let net = Network::from_edges(names(2), &[]).unwrap();
        let order = ModelOrder::new(1, vec![0], vec![], AlphaMode::Global).unwrap();
        let data = build_regression_data(&order, &panel, &[], &net).unwrap();
        let ols = fit_ols(&data).unwrap();
        let num: f64 = (1..t).map(|u| y[u] * y[u - 1]).sum();
        let den: f64 = (1..t).map(|u| y[u - 1] * y[u - 1]).sum();
        assert_relative_eq!(ols.gamma[0], num / den, epsilon = 1e-12);
    }

    #[test]
    fn sigma_u_of_zero_residuals_is_zero() {
        let res = DMatrix::zeros(3, 10);
        assert_eq!(estimate_sigma_u(&res, 10), DMatrix::zeros(3, 3));
    }

    #[test]
    fn sigma_u_law_of_large_numbers() {
        let mut rng = StdRng::seed_from_u64(24);
        let n = 3;
        let t = 10_000;
        let res = DMatrix::from_fn(n, t, |_, _| noise(&mut rng));
        let sigma = estimate_sigma_u(&res, t);
        for i in 0..n {
            assert_relative_eq!(sigma[(i, i)], 1.0, epsilon = 0.05);
            for j in 0..n {
                if i != j {
                    assert!(sigma[(i, j)].abs() < 3.0 / (t as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn fgls_equals_ols_under_scalar_covariance() {
        let mut rng = StdRng::seed_from_u64(25);
        let net = uniform_net(3);
        let order = ModelOrder::new(1, vec![1], vec![], AlphaMode::Local).unwrap();
        let mut params = ParameterVector::zeros(&order, 3);
        params.alphas[0] = vec![0.4, 0.3, 0.2];
        params.betas[0][0] = 0.3;
        let (panel, exog) = generate(&order, &params, &net, 120, 1.0, &mut rng);
        let data = build_regression_data(&order, &panel, &exog, &net).unwrap();
        let ols = fit_ols(&data).unwrap();
        let sigma = DMatrix::identity(3, 3) * 2.5;
        let fgls = fit_fgls(&data, &sigma).unwrap();
        for k in 0..data.m {
            assert_relative_eq!(fgls[k], ols.gamma[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn fgls_residuals_orthogonal_to_weighted_design() {
        let mut rng = StdRng::seed_from_u64(26);
        let net = uniform_net(4);
        let order = ModelOrder::new(2, vec![1, 0], vec![], AlphaMode::Global).unwrap();
        let mut params = ParameterVector::zeros(&order, 4);
        params.alphas[0][0] = 0.4;
        params.alphas[1][0] = 0.2;
        params.betas[0][0] = 0.2;
        let (panel, exog) = generate(&order, &params, &net, 150, 1.0, &mut rng);
        let data = build_regression_data(&order, &panel, &exog, &net).unwrap();
        let result = fit(&data).unwrap();
        let sigma_first = {
            let ols = fit_ols(&data).unwrap();
            estimate_sigma_u(&ols.residuals, data.effective_t)
        };
        let sigma_inv = invert_sigma(&sigma_first).unwrap();
        let mut score = DVector::zeros(data.m);
        for tau in 0..data.effective_t {
            let r = result.residuals.column(tau);
            let wr = &sigma_inv * r;
            score += data.blocks[tau].transpose() * wr;
        }
        assert!(score.amax() < 1e-8, "score = {score:?}");
    }

    #[test]
    fn unrestricted_fgls_matches_bruteforce_gls() {
        // N=2, p=1, unrestricted coefficients, assembled by hand so that
        // D_t = z_t' ⊗ I_N (identity model matrix).
        let mut rng = StdRng::seed_from_u64(27);
        let n = 2;
        let t = 30;
        let mut y = DMatrix::zeros(n, t);
        for u in 1..t {
            y[(0, u)] = 0.5 * y[(0, u - 1)] + 0.2 * y[(1, u - 1)] + noise(&mut rng);
            y[(1, u)] = -0.3 * y[(0, u - 1)] + 0.6 * y[(1, u - 1)] + noise(&mut rng);
        }
        let t_eff = t - 1;
        let m = n * n;
        let mut blocks = Vec::with_capacity(t_eff);
        let mut targets = DMatrix::zeros(n, t_eff);
        let mut z = DMatrix::zeros(n, t_eff);
        for tau in 0..t_eff {
            let u = tau + 1;
            // vec(B) layout: column-stacked B = [b11 b21 b12 b22].
            let mut d = DMatrix::zeros(n, m);
            for c in 0..n {
                for i in 0..n {
                    d[(i, c * n + i)] = y[(c, u - 1)];
                }
            }
            blocks.push(d);
            for i in 0..n {
                targets[(i, tau)] = y[(i, u)];
                z[(i, tau)] = y[(i, u - 1)];
            }
        }
        let order = ModelOrder::new(1, vec![0], vec![], AlphaMode::Local).unwrap();
        let data = RegressionData {
            order,
            node_names: names(n),
            n,
            m,
            effective_t: t_eff,
            p_star: 1,
            targets: targets.clone(),
            target_mask: DMatrix::from_element(n, t_eff, true),
            blocks,
            z: z.clone(),
            param_names: (0..m).map(|k| format!("b{k}")).collect(),
        };
        let sigma = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]);
        let fgls = fit_fgls(&data, &sigma).unwrap();

        // Brute force: materialize the NT×M stacked design and the full
        // block-diagonal weight, then solve the weighted normal equations.
        let rows = n * t_eff;
        let mut x = DMatrix::zeros(rows, m);
        let mut yv = DVector::zeros(rows);
        for tau in 0..t_eff {
            for i in 0..n {
                for c in 0..m {
                    x[(tau * n + i, c)] = data.blocks[tau][(i, c)];
                }
                yv[tau * n + i] = targets[(i, tau)];
            }
        }
        let mut w = DMatrix::zeros(rows, rows);
        let sigma_inv = sigma.clone().try_inverse().unwrap();
        for tau in 0..t_eff {
            for i in 0..n {
                for j in 0..n {
                    w[(tau * n + i, tau * n + j)] = sigma_inv[(i, j)];
                }
            }
        }
        let gls =
            (x.transpose() * &w * &x).try_inverse().unwrap() * (x.transpose() * &w * yv);
        for k in 0..m {
            assert_relative_eq!(fgls[k], gls[k], epsilon = 1e-8);
        }
    }

    #[test]
    fn doubling_the_sample_shrinks_se_by_sqrt2() {
        let mut rng = StdRng::seed_from_u64(28);
        let net = uniform_net(3);
        let order = ModelOrder::new(1, vec![1], vec![], AlphaMode::Global).unwrap();
        let mut params = ParameterVector::zeros(&order, 3);
        params.alphas[0][0] = 0.5;
        params.betas[0][0] = 0.2;
        let (panel, _) = generate(&order, &params, &net, 50, 1.0, &mut rng);
        let data = build_regression_data(&order, &panel, &[], &net).unwrap();
        let sigma = DMatrix::identity(3, 3);
        let cov1 = asymptotic_covariance(&data, &sigma).unwrap();

        let mut doubled = data.clone();
        doubled.effective_t *= 2;
        doubled.blocks = [data.blocks.clone(), data.blocks.clone()].concat();
        doubled.targets = DMatrix::from_fn(data.n, doubled.effective_t, |i, tau| {
            data.targets[(i, tau % data.effective_t)]
        });
        doubled.target_mask = DMatrix::from_element(data.n, doubled.effective_t, true);
        let cov2 = asymptotic_covariance(&doubled, &sigma).unwrap();
        for k in 0..data.m {
            let se1 = cov1[(k, k)].sqrt();
            let se2 = cov2[(k, k)].sqrt();
            assert_relative_eq!(se2 * std::f64::consts::SQRT_2, se1, epsilon = 1e-6);
        }
    }

    #[test]
    fn diagonal_sigma_orthonormal_design_closed_form() {
        // Identity design blocks and diagonal Σ: covariance is σ_i²/T'.
        let n = 2;
        let t_eff = 2;
        let order = ModelOrder::new(1, vec![0], vec![], AlphaMode::Local).unwrap();
        let blocks = vec![DMatrix::identity(n, 2), DMatrix::identity(n, 2)];
        let data = RegressionData {
            order,
            node_names: names(n),
            n,
            m: 2,
            effective_t: t_eff,
            p_star: 1,
            targets: DMatrix::zeros(n, t_eff),
            target_mask: DMatrix::from_element(n, t_eff, true),
            blocks,
            z: DMatrix::zeros(n, t_eff),
            param_names: vec!["a".into(), "b".into()],
        };
        let sigma = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let cov = asymptotic_covariance(&data, &sigma).unwrap();
        assert_relative_eq!(cov[(0, 0)], 4.0 / 2.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 9.0 / 2.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hc2_close_to_asymptotic_under_homoskedasticity() {
        let mut rng = StdRng::seed_from_u64(29);
        let net = uniform_net(3);
        let order = ModelOrder::new(1, vec![1], vec![], AlphaMode::Global).unwrap();
        let mut params = ParameterVector::zeros(&order, 3);
        params.alphas[0][0] = 0.5;
        params.betas[0][0] = 0.25;
        let (panel, _) = generate(&order, &params, &net, 4000, 1.0, &mut rng);
        let data = build_regression_data(&order, &panel, &[], &net).unwrap();
        let result = fit(&data).unwrap();
        for k in 0..data.m {
            let ratio = result.se_hc2[k] / result.se_asymptotic[k];
            assert!((ratio - 1.0).abs() < 0.10, "ratio {ratio} at {k}");
        }
    }

    #[test]
    fn rank_deficient_design_names_columns() {
        // An exogenous regressor that never varies produces an all-zero
        // design column.
        let net = uniform_net(2);
        let order = ModelOrder::new(1, vec![0], vec![0], AlphaMode::Local).unwrap();
        let mut rng = StdRng::seed_from_u64(30);
        let t = 40;
        let values = DMatrix::from_fn(2, t, |_, _| noise(&mut rng));
        let panel =
            Panel::fully_observed(names(2), CalendarStamp::new(2000, 1).unwrap(), values).unwrap();
        let zeros = DMatrix::zeros(2, t);
        let exog =
            Panel::fully_observed(names(2), CalendarStamp::new(2000, 1).unwrap(), zeros).unwrap();
        let data = build_regression_data(&order, &panel, &[exog], &net).unwrap();
        let err = fit_ols(&data).unwrap_err();
        assert!(err.to_string().contains("lambda[1,0]"), "{err}");
    }

    #[test]
    fn node_relabeling_equivariance() {
        let mut rng = StdRng::seed_from_u64(31);
        let n = 4;
        let mut exports =
            DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 + ((i * 7 + j * 3) % 5) as f64 });
        exports.fill_diagonal(0.0);
        let net = Network::fully_connected(names(n), &exports).unwrap();
        let order = ModelOrder::new(1, vec![1], vec![], AlphaMode::Local).unwrap();
        let mut params = ParameterVector::zeros(&order, n);
        params.alphas[0] = vec![0.4, 0.1, -0.2, 0.3];
        params.betas[0][0] = 0.25;
        let (panel, _) = generate(&order, &params, &net, 200, 1.0, &mut rng);
        let fit_base = fit_gnarx(&order, &panel, &[], &net).unwrap();

        // Reverse the node order everywhere.
        let perm: Vec<usize> = (0..n).rev().collect();
        let perm_names: Vec<String> = perm.iter().map(|&i| format!("n{i}")).collect();
        let perm_values = DMatrix::from_fn(n, panel.n_times(), |i, j| panel.value(perm[i], j));
        let perm_panel = Panel::fully_observed(
            perm_names.clone(),
            CalendarStamp::new(2000, 1).unwrap(),
            perm_values,
        )
        .unwrap();
        let perm_exports = DMatrix::from_fn(n, n, |i, j| exports[(perm[i], perm[j])]);
        let perm_net = Network::fully_connected(perm_names, &perm_exports).unwrap();
        let fit_perm = fit_gnarx(&order, &perm_panel, &[], &perm_net).unwrap();

        for (i, &pi) in perm.iter().enumerate() {
            assert_relative_eq!(
                fit_perm.params.alphas[0][i],
                fit_base.params.alphas[0][pi],
                epsilon = 1e-9
            );
        }
        assert_relative_eq!(
            fit_perm.params.betas[0][0],
            fit_base.params.betas[0][0],
            epsilon = 1e-9
        );
    }

    #[test]
    fn hc2_coverage_beats_plain_under_heteroskedasticity() {
        // Noise sd doubled on the second half of the sample; nominal 95%
        // HC2 intervals should cover the truth roughly at rate.
        let mut rng = StdRng::seed_from_u64(32);
        let reps = 400;
        let t = 160;
        let mut hit_hc2 = 0usize;
        let mut hit_plain = 0usize;
        for _ in 0..reps {
            let mut y = vec![0.0; t];
            for u in 1..t {
                let sd = if u > t / 2 { 2.0 } else { 1.0 };
                y[u] = 0.5 * y[u - 1] + sd * noise(&mut rng);
            }
            let values = DMatrix::from_fn(1, t, |_, j| y[j]);
            let panel = Panel::fully_observed(
                vec!["solo".into()],
                CalendarStamp::new(2000, 1).unwrap(),
                values,
            )
            .unwrap();
            let net = Network::from_edges(vec!["solo".into()], &[]).unwrap();
            let order = ModelOrder::new(1, vec![0], vec![], AlphaMode::Local).unwrap();
            let result = fit_gnarx(&order, &panel, &[], &net).unwrap();
            if (result.gamma[0] - 0.5).abs() <= 1.96 * result.se_hc2[0] {
                hit_hc2 += 1;
            }
            if (result.gamma[0] - 0.5).abs() <= 1.96 * result.se_asymptotic[0] {
                hit_plain += 1;
            }
        }
        let cov_hc2 = hit_hc2 as f64 / reps as f64;
        let cov_plain = hit_plain as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&cov_hc2), "HC2 coverage {cov_hc2}");
        assert!(cov_plain <= cov_hc2, "plain {cov_plain} vs HC2 {cov_hc2}");
    }

    #[test]
    fn leverage_one_rows_are_reported_and_excluded() {
        // An exogenous regressor that fires at exactly one time point makes
        // that row's leverage one: its coefficient is identified by the row
        // alone, so HC2 must drop it from the sandwich and say so.
        let mut rng = StdRng::seed_from_u64(34);
        let t = 60;
        let values = DMatrix::from_fn(1, t, |_, _| noise(&mut rng));
        let panel = Panel::fully_observed(
            vec!["solo".into()],
            CalendarStamp::new(2000, 1).unwrap(),
            values,
        )
        .unwrap();
        let mut spike = DMatrix::zeros(1, t);
        spike[(0, 30)] = 1.0;
        let exog = Panel::fully_observed(
            vec!["solo".into()],
            CalendarStamp::new(2000, 1).unwrap(),
            spike,
        )
        .unwrap();
        let net = Network::from_edges(vec!["solo".into()], &[]).unwrap();
        let order = ModelOrder::new(1, vec![0], vec![0], AlphaMode::Local).unwrap();
        let data = build_regression_data(&order, &panel, &[exog], &net).unwrap();
        let ols = fit_ols(&data).unwrap();
        let sigma = estimate_sigma_u(&ols.residuals, data.effective_t);
        let hc2 = hc2_standard_errors(&data, &ols.gamma, &sigma).unwrap();
        assert_eq!(hc2.dropped_rows, 1);
        // The autoregressive coefficient still gets a usable standard error.
        assert!(hc2.se[0].is_finite() && hc2.se[0] > 0.0);
    }

    #[test]
    fn strong_signal_gives_tiny_p_values() {
        let mut rng = StdRng::seed_from_u64(33);
        let net = uniform_net(5);
        let order = ModelOrder::new(1, vec![1], vec![], AlphaMode::Local).unwrap();
        let mut params = ParameterVector::zeros(&order, 5);
        params.alphas[0] = vec![0.9, 0.88, 0.92, 0.87, 0.9];
        params.betas[0][0] = 0.07;
        let (panel, _) = generate(&order, &params, &net, 2000, 0.3, &mut rng);
        let result = fit_gnarx(&order, &panel, &[], &net).unwrap();
        for k in 0..result.gamma.len() {
            assert!(result.p_values[k] < 1e-5, "p = {} at {k}", result.p_values[k]);
        }
    }
}
