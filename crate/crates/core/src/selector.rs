//! Model-order selection.
//!
//! Orders are ranked by the multivariate Gaussian BIC
//!
//! ```text
//! BIC = T'·log det Σ̂_u + M·log T',
//! ```
//!
//! with `T'` the candidate's own estimation-sample length and `Σ̂_u` the
//! innovation covariance at its final fit; lower is better. Rankings only
//! ever compare these values, so the constant terms are omitted. A singular
//! `Σ̂_u` is ridge-regularized with a warning and the determinant floored at
//! 1e-300.
//!
//! Two search strategies: exhaustive enumeration of every order in the
//! space, and the cheaper stagewise procedure that first picks the
//! autoregressive order p along the nested family with the network stages
//! and exogenous lags held at the space maxima, then coordinate-descends
//! over `s_1..s_p` and `p'_1..p'_H` jointly at fixed p until no sweep
//! improves the BIC. Holding the non-p components at their maxima during
//! stage 1 keeps the network and exogenous signal in the model, which would
//! otherwise leak into higher autoregressive lags and bias p upward. Ties
//! always break toward smaller models, then lexicographic order, so
//! selection is reproducible bit-for-bit.
//!
//! All candidates within one search are evaluated on a common estimation
//! sample: each candidate's panel is trimmed so that estimation starts at
//! the lookback of the largest order in the space. Comparing likelihoods
//! across different samples would otherwise inject noise of order sqrt(2N)
//! into every BIC difference, which is the same size as the parameter
//! penalty.
//!
//! An alternative criterion selects the order whose fixed-parameter rolling
//! forecasts minimize MSFE on a held-out tail of the sample.

use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::Path;

use crate::design::{self, AlphaMode, ModelOrder};
use crate::error::{Error, Result};
use crate::estimator::{self, FitResult};
use crate::forecaster::{self, EvalOptions};
use crate::network::Network;
use crate::panel::{fmt_full, Panel};

const LOG_DET_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Log-determinant of a covariance matrix with a ridge fallback for singular
/// input and a hard floor at ln(1e-300).
pub fn guarded_log_det(sigma: &DMatrix<f64>) -> f64 {
    let log_det = |m: &DMatrix<f64>| -> Option<f64> {
        m.clone()
            .cholesky()
            .map(|c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    };
    if let Some(ld) = log_det(sigma) {
        return ld.max(LOG_DET_FLOOR);
    }
    let n = sigma.nrows();
    let ridge = 1e-8 * sigma.trace().max(1e-300) / n as f64;
    log::warn!("singular sigma_u in BIC; ridge-regularizing the determinant");
    let fixed = sigma + DMatrix::identity(n, n) * ridge;
    log_det(&fixed).map_or(LOG_DET_FLOOR, |ld| ld.max(LOG_DET_FLOOR))
}

/// `BIC = T'·log det Σ̂_u + M·log T'`.
pub fn bic_from_parts(sigma_u: &DMatrix<f64>, effective_t: usize, m: usize) -> f64 {
    let t = effective_t as f64;
    t * guarded_log_det(sigma_u) + m as f64 * t.ln()
}

/// BIC of a completed fit.
pub fn bic(fit: &FitResult, order: &ModelOrder, n: usize) -> f64 {
    bic_from_parts(&fit.sigma_u, fit.effective_t, design::count_parameters(order, n))
}

/// A labelled network candidate.
#[derive(Debug, Clone)]
pub struct NetworkCandidate {
    pub label: String,
    pub network: Network,
}

/// Bounds of the order search.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    /// Maximum autoregressive order.
    pub p_max: usize,
    /// Per-lag cap on the neighbourhood stage (further capped by the deepest
    /// stage the network actually has).
    pub s_max: usize,
    /// Per-regressor cap on the exogenous lag.
    pub p_prime_max: usize,
    /// Number of exogenous regressors included in every candidate.
    pub n_exog: usize,
    pub alpha: AlphaMode,
    pub networks: Vec<NetworkCandidate>,
}

impl SearchSpace {
    pub fn new(alpha: AlphaMode, network: Network) -> Self {
        SearchSpace {
            p_max: 12,
            s_max: 3,
            p_prime_max: 3,
            n_exog: 0,
            alpha,
            networks: vec![NetworkCandidate { label: "net".into(), network }],
        }
    }

    fn validate(&self, panel: &Panel, exog: &[Panel]) -> Result<()> {
        if self.p_max < 1 {
            return Err(Error::Config("p_max must be >= 1".into()));
        }
        if self.networks.is_empty() {
            return Err(Error::Config("no candidate networks".into()));
        }
        if exog.len() != self.n_exog {
            return Err(Error::Config(format!(
                "{} exogenous panels supplied, search space declares {}",
                exog.len(),
                self.n_exog
            )));
        }
        let p_star_max = self.p_max.max(self.p_prime_max);
        if panel.n_times() <= p_star_max + 1 {
            return Err(Error::Config(format!(
                "panel too short (T = {}) for the largest candidate (p* = {p_star_max})",
                panel.n_times()
            )));
        }
        Ok(())
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub network: String,
    pub order: ModelOrder,
    pub bic: f64,
    pub msfe: Option<f64>,
}

/// Record of a completed search: every candidate evaluated, in evaluation
/// order, plus the winner index.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub entries: Vec<TraceEntry>,
    pub winner: usize,
}

impl SelectionTrace {
    pub fn winner(&self) -> &TraceEntry {
        &self.entries[self.winner]
    }

    /// Emit the trace as CSV (`network,order,alpha,bic,msfe`) for audit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        w.write_record(["network", "order", "alpha", "bic", "msfe", "winner"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for (idx, e) in self.entries.iter().enumerate() {
            let alpha = match e.order.alpha {
                AlphaMode::Global => "global",
                AlphaMode::Local => "local",
            };
            w.write_record([
                e.network.as_str(),
                &e.order.to_string(),
                alpha,
                &fmt_full(e.bic),
                &e.msfe.map(fmt_full).unwrap_or_default(),
                if idx == self.winner { "1" } else { "" },
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluate one candidate on the common estimation sample; unfittable
/// candidates rank last instead of aborting the search.
///
/// `space_p_star` is the lookback of the largest candidate in the space; the
/// panel is trimmed by `space_p_star − p*` so that every candidate's
/// estimation sample covers the same time points.
fn candidate_bic(
    order: &ModelOrder,
    panel: &Panel,
    exog: &[Panel],
    net: &Network,
    space_p_star: usize,
) -> f64 {
    let run = || -> crate::error::Result<f64> {
        let skip = space_p_star.saturating_sub(order.p_star());
        let (trimmed_panel, trimmed_exog);
        let (panel_ref, exog_ref): (&Panel, &[Panel]) = if skip > 0 {
            let from = panel.times()[skip];
            trimmed_panel = panel.slice_time(Some(from), None)?;
            trimmed_exog = exog
                .iter()
                .map(|x| x.slice_time(Some(from), None))
                .collect::<crate::error::Result<Vec<_>>>()?;
            (&trimmed_panel, &trimmed_exog)
        } else {
            (panel, exog)
        };
        let data = design::build_regression_data(order, panel_ref, exog_ref, net)?;
        Ok(estimator::fit_lean(&data)?.bic)
    };
    match run() {
        Ok(v) if v.is_finite() => v,
        Ok(_) => f64::INFINITY,
        Err(e) => {
            log::warn!("candidate {order} skipped: {e}");
            f64::INFINITY
        }
    }
}

/// Enumerate every s-vector in `{0..=cap}^p`, lexicographically.
fn s_vectors(p: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..p {
        let mut next = Vec::with_capacity(out.len() * (cap + 1));
        for prefix in &out {
            for v in 0..=cap {
                let mut s = prefix.clone();
                s.push(v);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

/// Lookback of the largest candidate in the space.
fn space_lookback(space: &SearchSpace) -> usize {
    if space.n_exog > 0 {
        space.p_max.max(space.p_prime_max)
    } else {
        space.p_max
    }
}

fn enumerate_orders(space: &SearchSpace, net: &Network) -> Vec<ModelOrder> {
    let s_cap = space.s_max.min(net.max_stage());
    let mut orders = Vec::new();
    for p in 1..=space.p_max {
        for s in s_vectors(p, s_cap) {
            for pp in s_vectors(space.n_exog, space.p_prime_max) {
                orders.push(ModelOrder { p, s: s.clone(), p_prime: pp, alpha: space.alpha });
            }
        }
    }
    orders
}

fn pick_winner(entries: &[TraceEntry], panel_n: usize) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (idx, e) in entries.iter().enumerate() {
        if !e.bic.is_finite() {
            continue;
        }
        best = Some(match best {
            None => idx,
            Some(cur) => {
                let (cb, ci) = (entries[cur].bic, cur);
                let m_new = design::count_parameters(&e.order, panel_n);
                let m_cur = design::count_parameters(&entries[ci].order, panel_n);
                if e.bic < cb || (e.bic == cb && m_new < m_cur) {
                    idx
                } else {
                    cur
                }
            }
        });
    }
    best.ok_or_else(|| Error::Singular("no candidate could be fitted".into()))
}

/// Exhaustive search: exact argmin of BIC over the whole space.
/// Guarded to at most 10⁶ candidates.
pub fn select_global(
    space: &SearchSpace,
    panel: &Panel,
    exog: &[Panel],
) -> Result<SelectionTrace> {
    space.validate(panel, exog)?;
    let mut all: Vec<(usize, ModelOrder)> = Vec::new();
    for (net_idx, cand) in space.networks.iter().enumerate() {
        for order in enumerate_orders(space, &cand.network) {
            all.push((net_idx, order));
        }
    }
    if all.is_empty() {
        return Err(Error::Config("empty feasible search space".into()));
    }
    if all.len() > 1_000_000 {
        return Err(Error::Config(format!(
            "search space has {} candidates (> 1e6); use the stagewise search",
            all.len()
        )));
    }
    let space_p_star = space_lookback(space);
    let bics: Vec<f64> = all
        .par_iter()
        .map(|(net_idx, order)| {
            candidate_bic(order, panel, exog, &space.networks[*net_idx].network, space_p_star)
        })
        .collect();
    let entries: Vec<TraceEntry> = all
        .into_iter()
        .zip(bics)
        .map(|((net_idx, order), bic)| TraceEntry {
            network: space.networks[net_idx].label.clone(),
            order,
            bic,
            msfe: None,
        })
        .collect();
    let winner = pick_winner(&entries, panel.n_nodes())?;
    Ok(SelectionTrace { entries, winner })
}

/// Stagewise search: p first on the pure-AR family (all stages and exogenous
/// lags fixed at zero), then coordinate descent over `(s, p')` at fixed p,
/// sweeping until no improvement. Ties break toward smaller values.
pub fn select_stagewise(
    space: &SearchSpace,
    panel: &Panel,
    exog: &[Panel],
) -> Result<SelectionTrace> {
    space.validate(panel, exog)?;

    #[allow(clippy::too_many_arguments)]
    fn evaluate_batch(
        orders: &[ModelOrder],
        cache: &mut HashMap<String, f64>,
        entries: &mut Vec<TraceEntry>,
        label: &str,
        panel: &Panel,
        exog: &[Panel],
        net: &Network,
        space_p_star: usize,
    ) -> Vec<f64> {
        let missing: Vec<ModelOrder> = orders
            .iter()
            .filter(|o| !cache.contains_key(&o.to_string()))
            .cloned()
            .collect();
        let fresh: Vec<f64> = missing
            .par_iter()
            .map(|o| candidate_bic(o, panel, exog, net, space_p_star))
            .collect();
        for (o, b) in missing.into_iter().zip(fresh) {
            cache.insert(o.to_string(), b);
            entries.push(TraceEntry {
                network: label.to_string(),
                order: o,
                bic: b,
                msfe: None,
            });
        }
        orders.iter().map(|o| cache[&o.to_string()]).collect()
    }

    let space_p_star = space_lookback(space);
    let mut entries: Vec<TraceEntry> = Vec::new();
    for cand in &space.networks {
        let net = &cand.network;
        let s_cap = space.s_max.min(net.max_stage());
        let mut cache: HashMap<String, f64> = HashMap::new();
        let evaluate = |orders: &[ModelOrder],
                        cache: &mut HashMap<String, f64>,
                        entries: &mut Vec<TraceEntry>| {
            evaluate_batch(orders, cache, entries, &cand.label, panel, exog, net, space_p_star)
        };

        // Stage 1: autoregressive order along the nested family with the
        // other components at their caps.
        let stage1: Vec<ModelOrder> = (1..=space.p_max)
            .map(|p| ModelOrder {
                p,
                s: vec![s_cap; p],
                p_prime: vec![space.p_prime_max; space.n_exog],
                alpha: space.alpha,
            })
            .collect();
        let bics = evaluate(&stage1, &mut cache, &mut entries);
        let mut best_p = 1;
        let mut best_bic = f64::INFINITY;
        for (k, &b) in bics.iter().enumerate() {
            if b < best_bic {
                best_bic = b;
                best_p = k + 1;
            }
        }

        // Stage 2: coordinate descent over s_1..s_p and p'_1..p'_H from the
        // stage-1 point.
        let p = best_p;
        let mut current = ModelOrder {
            p,
            s: vec![s_cap; p],
            p_prime: vec![space.p_prime_max; space.n_exog],
            alpha: space.alpha,
        };
        let mut current_bic = cache[&current.to_string()];
        for _sweep in 0..100 {
            let mut improved = false;
            for comp in 0..(p + space.n_exog) {
                let cap = if comp < p { s_cap } else { space.p_prime_max };
                let candidates: Vec<ModelOrder> = (0..=cap)
                    .map(|v| {
                        let mut o = current.clone();
                        if comp < p {
                            o.s[comp] = v;
                        } else {
                            o.p_prime[comp - p] = v;
                        }
                        o
                    })
                    .collect();
                let bics = evaluate(&candidates, &mut cache, &mut entries);
                // Smallest value wins ties, so scan in increasing order with
                // a strict comparison.
                let mut best_v = if comp < p { current.s[comp] } else { current.p_prime[comp - p] };
                let mut best = current_bic;
                for (v, &b) in bics.iter().enumerate() {
                    if b < best {
                        best = b;
                        best_v = v;
                    }
                }
                let cur_v = if comp < p { current.s[comp] } else { current.p_prime[comp - p] };
                if best_v != cur_v {
                    if comp < p {
                        current.s[comp] = best_v;
                    } else {
                        current.p_prime[comp - p] = best_v;
                    }
                    current_bic = best;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
    let winner = pick_winner(&entries, panel.n_nodes())?;
    Ok(SelectionTrace { entries, winner })
}

/// MSFE-based selection: fit each candidate on the first `fit_months`
/// observations, roll fixed-parameter one-step forecasts over the following
/// `eval_months`, and pick the order with the smallest pooled MSFE.
pub fn select_msfe(
    space: &SearchSpace,
    panel: &Panel,
    exog: &[Panel],
    fit_months: usize,
    eval_months: usize,
) -> Result<SelectionTrace> {
    space.validate(panel, exog)?;
    if fit_months + eval_months > panel.n_times() {
        return Err(Error::Config(format!(
            "fit window {fit_months} + evaluation window {eval_months} exceeds T = {}",
            panel.n_times()
        )));
    }
    let split = panel.times()[fit_months];
    let end = panel.times()[fit_months + eval_months - 1];
    let opts = EvalOptions { split, end: Some(end), refit: false, fit_on_full: false };

    let mut all: Vec<(usize, ModelOrder)> = Vec::new();
    for (net_idx, cand) in space.networks.iter().enumerate() {
        for order in enumerate_orders(space, &cand.network) {
            all.push((net_idx, order));
        }
    }
    if all.len() > 1_000_000 {
        return Err(Error::Config("search space too large; reduce the bounds".into()));
    }
    let scored: Vec<(f64, f64)> = all
        .par_iter()
        .map(|(net_idx, order)| {
            let net = &space.networks[*net_idx].network;
            match forecaster::rolling_evaluation(order, panel, exog, net, &opts) {
                Ok((fit, report)) => (fit.bic, report.msfe),
                Err(e) => {
                    log::warn!("candidate {order} skipped in MSFE selection: {e}");
                    (f64::INFINITY, f64::INFINITY)
                }
            }
        })
        .collect();
    let entries: Vec<TraceEntry> = all
        .into_iter()
        .zip(scored)
        .map(|((net_idx, order), (bic, msfe))| TraceEntry {
            network: space.networks[net_idx].label.clone(),
            order,
            bic,
            msfe: Some(msfe),
        })
        .collect();

    let mut best: Option<usize> = None;
    for (idx, e) in entries.iter().enumerate() {
        let msfe = e.msfe.unwrap();
        if !msfe.is_finite() {
            continue;
        }
        best = Some(match best {
            None => idx,
            Some(cur) => {
                if msfe < entries[cur].msfe.unwrap() {
                    idx
                } else {
                    cur
                }
            }
        });
    }
    let winner = best.ok_or_else(|| Error::Singular("no candidate could be evaluated".into()))?;
    Ok(SelectionTrace { entries, winner })
}
