//! Model specification and the restricted-VARX mapping.
//!
//! A GNARX order is the triple `(p, s, p')` plus the choice of global or
//! local autoregressive coefficients. The model is a VARX whose coefficient
//! matrices are restricted to
//!
//! ```text
//! φ_k = diag{α[i,k]} + Σ_{r=1..s_k} β[k,r]·W_r,      Λ[h,k] = λ[h,k]·I_N,
//! ```
//!
//! with `W_r` the stage-r connection-weight matrix. Stacking column-wise,
//! `vec(B) = R·γ` for the sparse model matrix `R` built here, where `γ` packs
//! `(γ_1,…,γ_p, λ_{1,0..p'_1}, …, λ_{H,0..p'_H})` and
//! `γ_k = (α_{1,k},…,α_{N,k}, β_{k,1},…,β_{k,s_k})` (global-α keeps a single
//! `α_k`).
//!
//! [`build_regression_data`] turns a panel plus exogenous panels into the
//! stacked regression `vec(Y) = X·γ + u`: one `N×M` design block per target
//! time. Connection weights are re-normalized over the nodes observed at each
//! lagged time, and a target cell enters estimation only when its own lags
//! and exogenous values are all available; otherwise its residual is fixed
//! at zero by exclusion.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::panel::Panel;

/// Whether autoregressive coefficients are shared across nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    Global,
    Local,
}

/// The GNARX(p, s, p') model order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrder {
    /// Autoregressive order, >= 1.
    pub p: usize,
    /// Per-lag maximum neighbourhood stage, `len(s) == p`.
    pub s: Vec<usize>,
    /// Per-regressor maximum exogenous lag, `len(p_prime) == H`.
    #[serde(default)]
    pub p_prime: Vec<usize>,
    pub alpha: AlphaMode,
}

impl ModelOrder {
    pub fn new(p: usize, s: Vec<usize>, p_prime: Vec<usize>, alpha: AlphaMode) -> Result<Self> {
        let order = ModelOrder { p, s, p_prime, alpha };
        order.validate()?;
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Validation("autoregressive order p must be >= 1".into()));
        }
        if self.s.len() != self.p {
            return Err(Error::Validation(format!(
                "s has length {}, expected p = {}",
                self.s.len(),
                self.p
            )));
        }
        Ok(())
    }

    /// Number of exogenous regressors H.
    pub fn n_exog(&self) -> usize {
        self.p_prime.len()
    }

    /// Estimation lookback `p* = max(p, p'_1, …, p'_H)`.
    pub fn p_star(&self) -> usize {
        self.p_prime.iter().copied().max().map_or(self.p, |m| self.p.max(m))
    }

    /// Check stage feasibility against a network: every requested stage must
    /// have a nonempty neighbourhood set somewhere in the graph.
    pub fn validate_for_network(&self, net: &Network) -> Result<()> {
        self.validate()?;
        let max_stage = net.max_stage();
        for (j, &sj) in self.s.iter().enumerate() {
            if sj > max_stage {
                return Err(Error::Dimension(format!(
                    "s[{}] = {} exceeds the deepest available neighbourhood stage {}",
                    j + 1,
                    sj,
                    max_stage
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ModelOrder {
    /// Paper-style notation: `(p, [s_1, …, s_p], p'_1, …, p'_H)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.s.iter().map(|v| v.to_string()).collect();
        write!(f, "({}, [{}]", self.p, s.join(", "))?;
        for pp in &self.p_prime {
            write!(f, ", {pp}")?;
        }
        write!(f, ")")
    }
}

/// Number of free parameters M of the restricted model.
///
/// Local-α: `M = N·p + Σ_j s_j + Σ_h (p'_h + 1)`; global-α replaces `N·p`
/// by `p`. The exogenous sum drops when H = 0.
pub fn count_parameters(order: &ModelOrder, n: usize) -> usize {
    let alpha_count = match order.alpha {
        AlphaMode::Local => n * order.p,
        AlphaMode::Global => order.p,
    };
    let beta_count: usize = order.s.iter().sum();
    let exog_count: usize = order.p_prime.iter().map(|&pp| pp + 1).sum();
    alpha_count + beta_count + exog_count
}

/// Parameter count of the unrestricted VARX comparator, `N²(p + Σ_h(p'_h+1))`.
/// This is also the row count P of the model matrix.
pub fn varx_parameter_count(order: &ModelOrder, n: usize) -> usize {
    let exog: usize = order.p_prime.iter().map(|&pp| pp + 1).sum();
    n * n * (order.p + exog)
}

/// Structured GNARX parameters.
///
/// `alphas[j-1]` holds the lag-j autoregressive coefficients (length N for
/// local-α, length 1 for global-α); `betas[j-1][r-1]` is `β[j,r]`;
/// `lambdas[h][j']` is `λ[h,j']` with lag `j'` counted from zero
/// (contemporaneous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub alpha_mode: AlphaMode,
    pub alphas: Vec<Vec<f64>>,
    pub betas: Vec<Vec<f64>>,
    pub lambdas: Vec<Vec<f64>>,
}

impl ParameterVector {
    pub fn zeros(order: &ModelOrder, n: usize) -> Self {
        let per_lag = match order.alpha {
            AlphaMode::Local => n,
            AlphaMode::Global => 1,
        };
        ParameterVector {
            alpha_mode: order.alpha,
            alphas: vec![vec![0.0; per_lag]; order.p],
            betas: order.s.iter().map(|&sj| vec![0.0; sj]).collect(),
            lambdas: order.p_prime.iter().map(|&pp| vec![0.0; pp + 1]).collect(),
        }
    }

    /// `α[i,j]` for 0-based node `i` and 1-based lag `j`.
    pub fn alpha(&self, node: usize, lag: usize) -> f64 {
        match self.alpha_mode {
            AlphaMode::Local => self.alphas[lag - 1][node],
            AlphaMode::Global => self.alphas[lag - 1][0],
        }
    }

    /// Stack into the γ vector ordering used by the model matrix.
    pub fn pack(&self) -> DVector<f64> {
        let mut out = Vec::new();
        for (a, b) in self.alphas.iter().zip(&self.betas) {
            out.extend_from_slice(a);
            out.extend_from_slice(b);
        }
        for l in &self.lambdas {
            out.extend_from_slice(l);
        }
        DVector::from_vec(out)
    }

    /// Rebuild the structured form from a packed γ vector.
    pub fn unpack(order: &ModelOrder, n: usize, gamma: &DVector<f64>) -> Result<Self> {
        let m = count_parameters(order, n);
        if gamma.len() != m {
            return Err(Error::Dimension(format!(
                "gamma has {} entries, expected {}",
                gamma.len(),
                m
            )));
        }
        let per_lag = match order.alpha {
            AlphaMode::Local => n,
            AlphaMode::Global => 1,
        };
        let mut params = ParameterVector::zeros(order, n);
        let mut k = 0usize;
        for j in 0..order.p {
            for i in 0..per_lag {
                params.alphas[j][i] = gamma[k];
                k += 1;
            }
            for r in 0..order.s[j] {
                params.betas[j][r] = gamma[k];
                k += 1;
            }
        }
        for (h, &pp) in order.p_prime.iter().enumerate() {
            for j in 0..=pp {
                params.lambdas[h][j] = gamma[k];
                k += 1;
            }
        }
        Ok(params)
    }

    /// Human-readable parameter names in γ order: `alpha[UK,1]` (local) or
    /// `alpha[1]` (global), `beta[j,r]`, `lambda[h,j']` with 1-based h and
    /// 0-based exogenous lag.
    pub fn names(order: &ModelOrder, node_names: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        for j in 1..=order.p {
            match order.alpha {
                AlphaMode::Local => {
                    for name in node_names {
                        out.push(format!("alpha[{name},{j}]"));
                    }
                }
                AlphaMode::Global => out.push(format!("alpha[{j}]")),
            }
            for r in 1..=order.s[j - 1] {
                out.push(format!("beta[{j},{r}]"));
            }
        }
        for (h, &pp) in order.p_prime.iter().enumerate() {
            for jp in 0..=pp {
                out.push(format!("lambda[{},{jp}]", h + 1));
            }
        }
        out
    }
}

/// Coefficient matrices of the equivalent restricted VARX.
#[derive(Debug, Clone)]
pub struct AssembledCoefficients {
    /// `φ_1 … φ_p`.
    pub phi: Vec<DMatrix<f64>>,
    /// `lambda[h][j']` is `Λ[h,j'] = λ[h,j']·I_N`.
    pub lambda: Vec<Vec<DMatrix<f64>>>,
}

/// Assemble `φ_k = diag{α[i,k]} + Σ_r β[k,r]·W_r` and `Λ[h,k] = λ[h,k]·I_N`.
pub fn assemble_coefficients(
    order: &ModelOrder,
    params: &ParameterVector,
    net: &Network,
) -> Result<AssembledCoefficients> {
    order.validate_for_network(net)?;
    let n = net.n_nodes();
    let mut phi = Vec::with_capacity(order.p);
    for k in 1..=order.p {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = params.alpha(i, k);
        }
        for r in 1..=order.s[k - 1] {
            let w = net.weight_matrix(r)?;
            m += w * params.betas[k - 1][r - 1];
        }
        phi.push(m);
    }
    let lambda = params
        .lambdas
        .iter()
        .map(|lags| lags.iter().map(|&l| DMatrix::identity(n, n) * l).collect())
        .collect();
    Ok(AssembledCoefficients { phi, lambda })
}

/// Build the `P×M` model matrix R with `vec(B) = R·γ`.
///
/// Row blocks follow the column order of `B = [φ_1 … φ_p, Λ_{1,0} … Λ_{H,p'_H}]`,
/// each of size `N²`. For lag k the columns are the diagonal-selector block A
/// (one column per node under local-α, the single column `vec(I_N)` under
/// global-α) followed by `vec(W_1) … vec(W_{s_k})`; each exogenous lag
/// contributes one `vec(I_N)` column.
pub fn build_model_matrix(order: &ModelOrder, net: &Network) -> Result<DMatrix<f64>> {
    order.validate_for_network(net)?;
    let n = net.n_nodes();
    let n2 = n * n;
    let p_rows = varx_parameter_count(order, n);
    let m_cols = count_parameters(order, n);
    let mut r_mat = DMatrix::zeros(p_rows, m_cols);

    // vec is column-stacking: entry (row, col) of an N×N matrix lands at
    // flat index col*N + row.
    let vec_idx = |row: usize, col: usize| col * n + row;

    let mut col = 0usize;
    let mut block = 0usize; // which N² row block we are writing
    for k in 0..order.p {
        let base = block * n2;
        match order.alpha {
            AlphaMode::Local => {
                for i in 0..n {
                    r_mat[(base + vec_idx(i, i), col)] = 1.0;
                    col += 1;
                }
            }
            AlphaMode::Global => {
                for i in 0..n {
                    r_mat[(base + vec_idx(i, i), col)] = 1.0;
                }
                col += 1;
            }
        }
        for r in 1..=order.s[k] {
            let w = net.weight_matrix(r)?;
            for c in 0..n {
                for row in 0..n {
                    r_mat[(base + vec_idx(row, c), col)] = w[(row, c)];
                }
            }
            col += 1;
        }
        block += 1;
    }
    for &pp in &order.p_prime {
        for _lag in 0..=pp {
            let base = block * n2;
            for i in 0..n {
                r_mat[(base + vec_idx(i, i), col)] = 1.0;
            }
            col += 1;
            block += 1;
        }
    }
    debug_assert_eq!(col, m_cols);
    debug_assert_eq!(block * n2, p_rows);
    Ok(r_mat)
}

/// Outcome of the sufficient stationarity check.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    /// True when every node satisfies `Σ_j (|α[i,j]| + Σ_r |β[j,r]|) < 1`.
    /// The condition is sufficient, not necessary, so a false value means
    /// "not guaranteed" rather than "non-stationary".
    pub stationary_sufficient: bool,
    /// Per-node margin `1 − Σ_j (|α[i,j]| + Σ_r |β[j,r]|)`.
    pub margins: Vec<f64>,
}

pub fn check_stationarity(
    order: &ModelOrder,
    params: &ParameterVector,
    n: usize,
) -> StationarityReport {
    let beta_total: f64 = params.betas.iter().flatten().map(|b| b.abs()).sum();
    let margins: Vec<f64> = (0..n)
        .map(|i| {
            let alpha_total: f64 = (1..=order.p).map(|j| params.alpha(i, j).abs()).sum();
            1.0 - alpha_total - beta_total
        })
        .collect();
    StationarityReport {
        stationary_sufficient: margins.iter().all(|&m| m > 0.0),
        margins,
    }
}

/// How a design row treats lagged values that are missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingLagPolicy {
    /// Estimation: a row whose own lags or exogenous values are missing is
    /// excluded (its residual is fixed at zero).
    Exclude,
    /// Forecasting: a missing lagged value contributes zero.
    ZeroContribution,
}

/// Stacked restricted regression extracted from a panel.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub order: ModelOrder,
    pub node_names: Vec<String>,
    pub n: usize,
    pub m: usize,
    /// `T' = T − p*`, the estimation-sample length.
    pub effective_t: usize,
    pub p_star: usize,
    /// Targets `Y = [Y_{p*+1} … Y_T]`, N×T'.
    pub targets: DMatrix<f64>,
    /// True where the target cell enters estimation.
    pub target_mask: DMatrix<bool>,
    /// One N×M design block per target time; row i maps γ to the model
    /// prediction of node i.
    pub blocks: Vec<DMatrix<f64>>,
    /// Raw VARX regressor matrix Z (K×T', lagged Y then lagged X blocks,
    /// missing entries as zero). Satisfies `blocks[t] = (z_t' ⊗ I_N)·R` on
    /// fully observed data.
    pub z: DMatrix<f64>,
    pub param_names: Vec<String>,
}

impl RegressionData {
    /// Count of target cells that enter estimation.
    pub fn n_observed_targets(&self) -> usize {
        self.target_mask.iter().filter(|&&b| b).count()
    }
}

/// Compute one design row (node `i`, target time `u`, 0-based within the full
/// panel calendar). Returns `None` when the row is excluded under
/// [`MissingLagPolicy::Exclude`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn design_row(
    order: &ModelOrder,
    net: &Network,
    endo_vals: &DMatrix<f64>,
    endo_obs: &DMatrix<bool>,
    exog_vals: &[&DMatrix<f64>],
    exog_obs: &[&DMatrix<bool>],
    node: usize,
    u: usize,
    policy: MissingLagPolicy,
) -> Option<DVector<f64>> {
    let n = net.n_nodes();
    let m = count_parameters(order, n);
    let mut row = DVector::zeros(m);
    let mut col = 0usize;
    for j in 1..=order.p {
        let t = u - j;
        let own_obs = endo_obs[(node, t)];
        let own = if own_obs { endo_vals[(node, t)] } else { 0.0 };
        if !own_obs && policy == MissingLagPolicy::Exclude {
            return None;
        }
        match order.alpha {
            AlphaMode::Local => {
                row[col + node] = own;
                col += n;
            }
            AlphaMode::Global => {
                row[col] = own;
                col += 1;
            }
        }
        if order.s[j - 1] > 0 {
            let observed: Vec<bool> = (0..n).map(|q| endo_obs[(q, t)]).collect();
            for r in 1..=order.s[j - 1] {
                let weights = net
                    .masked_stage_weights(node, r, &observed)
                    .expect("stage validated");
                row[col] = weights.iter().map(|&(q, w)| w * endo_vals[(q, t)]).sum();
                col += 1;
            }
        }
    }
    for (h, &pp) in order.p_prime.iter().enumerate() {
        for lag in 0..=pp {
            let t = u - lag;
            if exog_obs[h][(node, t)] {
                row[col] = exog_vals[h][(node, t)];
            } else if policy == MissingLagPolicy::Exclude {
                return None;
            }
            col += 1;
        }
    }
    debug_assert_eq!(col, m);
    Some(row)
}

/// Extract the stacked regression from a panel and time-aligned exogenous
/// panels.
pub fn build_regression_data(
    order: &ModelOrder,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
) -> Result<RegressionData> {
    order.validate_for_network(net)?;
    if panel.nodes() != net.nodes() {
        return Err(Error::Validation(
            "panel and network node sets differ (order matters)".into(),
        ));
    }
    if exog.len() != order.n_exog() {
        return Err(Error::Dimension(format!(
            "{} exogenous panels supplied, order expects {}",
            exog.len(),
            order.n_exog()
        )));
    }
    for (h, x) in exog.iter().enumerate() {
        if x.nodes() != panel.nodes() {
            return Err(Error::Validation(format!(
                "exogenous panel {} node set differs from the endogenous panel",
                h + 1
            )));
        }
        if x.times() != panel.times() {
            return Err(Error::Validation(format!(
                "exogenous panel {} is not time-aligned with the endogenous panel",
                h + 1
            )));
        }
    }

    let n = panel.n_nodes();
    let t_len = panel.n_times();
    let p_star = order.p_star();
    if t_len <= p_star {
        return Err(Error::InsufficientData(format!(
            "panel has T = {t_len} observations, need more than p* = {p_star}"
        )));
    }
    let effective_t = t_len - p_star;
    let m = count_parameters(order, n);

    let exog_vals: Vec<&DMatrix<f64>> = exog.iter().map(|x| x.values()).collect();
    let exog_obs: Vec<&DMatrix<bool>> = exog.iter().map(|x| x.observed()).collect();

    let mut targets = DMatrix::zeros(n, effective_t);
    let mut target_mask = DMatrix::from_element(n, effective_t, false);
    let mut blocks = Vec::with_capacity(effective_t);
    for tau in 0..effective_t {
        let u = p_star + tau;
        let mut block = DMatrix::zeros(n, m);
        for i in 0..n {
            let row = design_row(
                order,
                net,
                panel.values(),
                panel.observed(),
                &exog_vals,
                &exog_obs,
                i,
                u,
                MissingLagPolicy::Exclude,
            );
            match row {
                Some(r) if panel.is_observed(i, u) => {
                    block.set_row(i, &r.transpose());
                    targets[(i, tau)] = panel.value(i, u);
                    target_mask[(i, tau)] = true;
                }
                _ => {
                    // Excluded rows keep a zero design row and a zero target:
                    // they contribute nothing to any masked accumulation.
                }
            }
        }
        blocks.push(block);
    }

    // Raw VARX Z matrix (zeros at missing entries).
    let exog_block: usize = order.p_prime.iter().map(|&pp| pp + 1).sum();
    let k_rows = n * order.p + n * exog_block;
    let mut z = DMatrix::zeros(k_rows, effective_t);
    for tau in 0..effective_t {
        let u = p_star + tau;
        let mut r = 0usize;
        for j in 1..=order.p {
            for i in 0..n {
                if panel.is_observed(i, u - j) {
                    z[(r, tau)] = panel.value(i, u - j);
                }
                r += 1;
            }
        }
        for (h, &pp) in order.p_prime.iter().enumerate() {
            for lag in 0..=pp {
                for i in 0..n {
                    if exog_obs[h][(i, u - lag)] {
                        z[(r, tau)] = exog_vals[h][(i, u - lag)];
                    }
                    r += 1;
                }
            }
        }
    }

    Ok(RegressionData {
        order: order.clone(),
        node_names: panel.nodes().to_vec(),
        n,
        m,
        effective_t,
        p_star,
        targets,
        target_mask,
        blocks,
        z,
        param_names: ParameterVector::names(order, panel.nodes()),
    })
}
