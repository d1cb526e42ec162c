//! Generalised network autoregressive models with node-specific exogenous
//! regressors (GNARX).
//!
//! A GNARX model explains each node of a multivariate time series through its
//! own lags, weighted averages of its network neighbours' lags, and current
//! and lagged values of node-specific exogenous regressors:
//!
//! ```text
//! Y[i,t] = Σ_{j=1..p} ( α[i,j]·Y[i,t−j] + Σ_{r=1..s_j} β[j,r]·Σ_{q∈N_r(i)} ω[i,q]·Y[q,t−j] )
//!        + Σ_{h=1..H} Σ_{j'=0..p'_h} λ[h,j']·X[h,i,t−j'] + u[i,t]
//! ```
//!
//! The model is a restricted VARX: stacking the coefficient matrices gives
//! `vec(B) = R·γ` for a sparse model matrix `R`, and `γ` is estimated by one
//! feasible generalised least squares step. The crate covers the full
//! workflow: panel ingestion with missingness masks, trade-network
//! construction, order selection by BIC (stagewise or exhaustive), FGLS
//! estimation with asymptotic and HC2 standard errors, rolling forecast
//! evaluation against VAR/AR/naive baselines, scenario-conditioned
//! forecasting, forward-bootstrap prediction intervals, and a mixed-frequency
//! bridge from monthly index forecasts to quarterly growth.

pub mod design;
pub mod error;
pub mod estimator;
pub mod forecaster;
pub mod midas;
pub mod network;
pub mod panel;
pub mod selector;
pub mod stochastic;

pub use design::{AlphaMode, ModelOrder, ParameterVector, RegressionData};
pub use error::{Error, Result};
pub use estimator::FitResult;
pub use network::Network;
pub use panel::{CalendarStamp, Panel};
