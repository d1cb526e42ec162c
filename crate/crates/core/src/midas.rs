//! Mixed-frequency bridge from a monthly index to quarterly growth.
//!
//! Quarterly growth is regressed on one mapped monthly observation per
//! quarter (the simplified single-lag model) or on an exponential-Almon
//! weighted sum of the quarter's months. Lags count back from the last month
//! of the quarter, so `lag_index = 2` maps a quarter to its first month
//! (Jul for Q3), the "2/3" lag.
//!
//! Forecast-uncertainty propagation pushes every bootstrap replicate path of
//! the monthly index through the fitted regression with an added residual
//! draw and reads GDP intervals off the resulting empirical distribution, so
//! both the bridge-regression noise and the index forecast dispersion show
//! up in the quarterly intervals.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{fmt_full, CalendarStamp, Panel};
use crate::stochastic::quantile_sorted;

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Quarter {
    pub year: i32,
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Format(format!("quarter {q} out of range 1..=4")));
        }
        Ok(Quarter { year, q })
    }

    /// Parse `YYYY-Qn`.
    pub fn parse(s: &str) -> Result<Self> {
        let err = || Error::Parse {
            location: s.to_string(),
            message: "expected quarter in YYYY-Qn format".to_string(),
        };
        let (y, qpart) = s.split_once("-Q").ok_or_else(err)?;
        let year: i32 = y.trim().parse().map_err(|_| err())?;
        let q: u8 = qpart.trim().parse().map_err(|_| err())?;
        Quarter::new(year, q)
    }

    pub fn next(&self) -> Quarter {
        if self.q == 4 {
            Quarter { year: self.year + 1, q: 1 }
        } else {
            Quarter { year: self.year, q: self.q + 1 }
        }
    }

    /// Last month of the quarter (Mar/Jun/Sep/Dec).
    pub fn last_month(&self) -> CalendarStamp {
        CalendarStamp { year: self.year, month: 3 * self.q }
    }

    /// The month `lag` months before the quarter's last month.
    pub fn mapped_month(&self, lag: usize) -> CalendarStamp {
        self.last_month().add_months(-(lag as i32))
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-Q{}", self.year, self.q)
    }
}

impl TryFrom<String> for Quarter {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Quarter::parse(&s)
    }
}

impl From<Quarter> for String {
    fn from(q: Quarter) -> String {
        q.to_string()
    }
}

/// Quarterly growth series (percent per quarter), consecutive quarters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterlySeries {
    pub quarters: Vec<Quarter>,
    pub values: Vec<f64>,
}

impl QuarterlySeries {
    pub fn new(quarters: Vec<Quarter>, values: Vec<f64>) -> Result<Self> {
        if quarters.is_empty() || quarters.len() != values.len() {
            return Err(Error::Dimension("quarters and values must align and be nonempty".into()));
        }
        for w in quarters.windows(2) {
            if w[1] != w[0].next() {
                return Err(Error::Format(format!(
                    "quarters must be consecutive; found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite quarterly value".into()));
        }
        Ok(QuarterlySeries { quarters, values })
    }
}

/// Load a quarterly CSV `quarter,growth` with quarters as `YYYY-Qn`.
pub fn load_quarterly_csv(path: &Path) -> Result<QuarterlySeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut quarters = Vec::new();
    let mut values = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", row_idx + 2)))?;
        quarters.push(Quarter::parse(record.get(0).unwrap_or("")).map_err(|_| Error::Parse {
            location: format!("row {} column 'quarter'", row_idx + 2),
            message: format!("malformed quarter '{}'", record.get(0).unwrap_or("")),
        })?);
        let cell = record.get(1).unwrap_or("");
        values.push(cell.parse().map_err(|_| Error::Parse {
            location: format!("row {} column 'growth'", row_idx + 2),
            message: format!("non-numeric cell '{cell}'"),
        })?);
    }
    QuarterlySeries::new(quarters, values)
}

/// A single node's monthly series, with a calendar origin. Used both for
/// observed history and for forecast paths.
#[derive(Debug, Clone)]
pub struct MonthlySeries {
    pub start: CalendarStamp,
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
}

impl MonthlySeries {
    pub fn from_panel_node(panel: &Panel, node: usize) -> MonthlySeries {
        MonthlySeries {
            start: panel.times()[0],
            values: (0..panel.n_times()).map(|t| panel.value(node, t)).collect(),
            observed: (0..panel.n_times()).map(|t| panel.is_observed(node, t)).collect(),
        }
    }

    pub fn value_at(&self, stamp: &CalendarStamp) -> Option<f64> {
        let k = stamp.months_since(&self.start);
        if k < 0 || k as usize >= self.values.len() {
            return None;
        }
        let k = k as usize;
        self.observed[k].then(|| self.values[k])
    }
}

/// How monthly observations map into a quarter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MidasMode {
    /// One monthly observation per quarter.
    SingleLag,
    /// Exponential-Almon weighted sum of the quarter's K=3 months, weights
    /// `w_k ∝ exp(θ₁k + θ₂k²)` over lags k = 0..2 from the quarter end.
    Almon { theta1: f64, theta2: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidasSpec {
    #[serde(flatten)]
    pub mode: MidasMode,
    /// Months before the quarter's last month for the single-lag mapping;
    /// 2 = first month of the quarter (the "2/3" lag).
    pub lag_index: usize,
    pub intercept: bool,
}

impl Default for MidasSpec {
    fn default() -> Self {
        MidasSpec { mode: MidasMode::SingleLag, lag_index: 2, intercept: true }
    }
}

impl MidasSpec {
    fn validate(&self) -> Result<()> {
        if self.lag_index > 2 {
            return Err(Error::Validation(format!(
                "lag_index {} outside the quarter's 3 months",
                self.lag_index
            )));
        }
        Ok(())
    }
}

/// Normalized exponential-Almon weights over lags `0..k_total`.
pub fn almon_weights(theta1: f64, theta2: f64, k_total: usize) -> Vec<f64> {
    let raw: Vec<f64> =
        (0..k_total).map(|k| (theta1 * k as f64 + theta2 * (k * k) as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// The quarter's regressor value under a spec, or `None` when a needed month
/// is unobserved.
fn quarter_regressor(spec: &MidasSpec, series: &MonthlySeries, quarter: &Quarter) -> Option<f64> {
    match &spec.mode {
        MidasMode::SingleLag => series.value_at(&quarter.mapped_month(spec.lag_index)),
        MidasMode::Almon { theta1, theta2 } => {
            let w = almon_weights(*theta1, *theta2, 3);
            let mut total = 0.0;
            for (k, wk) in w.iter().enumerate() {
                total += wk * series.value_at(&quarter.mapped_month(k))?;
            }
            Some(total)
        }
    }
}

/// Paired regression rows `(monthly regressor, quarterly growth)`; quarters
/// whose mapped months are missing are dropped with a warning.
pub fn align_midas(
    series: &MonthlySeries,
    quarterly: &QuarterlySeries,
    spec: &MidasSpec,
) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(quarterly.quarters.len());
    for (q, &growth) in quarterly.quarters.iter().zip(&quarterly.values) {
        match quarter_regressor(spec, series, q) {
            Some(x) => rows.push((x, growth)),
            None => log::warn!("quarter {q} dropped: mapped month unobserved"),
        }
    }
    Ok(rows)
}

/// Fitted bridge regression.
#[derive(Debug, Clone, Serialize)]
pub struct MidasFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sample standard deviation of the regression residuals.
    pub residual_sd: f64,
    pub slope_se: f64,
    pub n_rows: usize,
}

/// Ordinary least squares of growth on the aligned regressor.
pub fn fit_midas(rows: &[(f64, f64)], intercept: bool) -> Result<MidasFit> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "MIDAS regression needs at least 3 rows, got {n}"
        )));
    }
    let nf = n as f64;
    let mean_x = rows.iter().map(|r| r.0).sum::<f64>() / nf;
    let mean_y = rows.iter().map(|r| r.1).sum::<f64>() / nf;
    let (cx, cy) = if intercept { (mean_x, mean_y) } else { (0.0, 0.0) };
    let sxx: f64 = rows.iter().map(|r| (r.0 - cx) * (r.0 - cx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Singular("regressor has zero variance".into()));
    }
    let sxy: f64 = rows.iter().map(|r| (r.0 - cx) * (r.1 - cy)).sum();
    let slope = sxy / sxx;
    let alpha = if intercept { mean_y - slope * mean_x } else { 0.0 };
    let residuals: Vec<f64> = rows.iter().map(|r| r.1 - alpha - slope * r.0).collect();
    let mean_e = residuals.iter().sum::<f64>() / nf;
    let var_e = residuals.iter().map(|e| (e - mean_e) * (e - mean_e)).sum::<f64>()
        / (nf - 1.0);
    let dof = nf - if intercept { 2.0 } else { 1.0 };
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / dof.max(1.0);
    Ok(MidasFit {
        slope,
        intercept: alpha,
        residual_sd: var_e.max(0.0).sqrt(),
        slope_se: (sigma2 / sxx).sqrt(),
        n_rows: n,
    })
}

/// Per-quarter projection with an empirical interval.
#[derive(Debug, Clone, Serialize)]
pub struct GdpProjection {
    pub quarter: Quarter,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Push monthly forecast replicates through the bridge regression.
///
/// `history` supplies mapped months that predate the forecast window (those
/// quarters project identically across scenarios); `point_path` and
/// `replicate_paths` are monthly level paths starting at `forecast_start`.
/// Each replicate adds a Gaussian residual draw with the fitted residual sd.
#[allow(clippy::too_many_arguments)]
pub fn project_gdp(
    fit: &MidasFit,
    spec: &MidasSpec,
    history: &MonthlySeries,
    forecast_start: CalendarStamp,
    point_path: &[f64],
    replicate_paths: &[Vec<f64>],
    quarters: &[Quarter],
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Vec<GdpProjection>> {
    spec.validate()?;
    if replicate_paths.is_empty() {
        return Err(Error::InsufficientData("no forecast replicates supplied".into()));
    }
    let horizon = point_path.len();
    if replicate_paths.iter().any(|p| p.len() != horizon) {
        return Err(Error::Dimension("replicate paths must match the point path length".into()));
    }

    let extend = |path: &[f64]| -> MonthlySeries {
        // History first, forecast path appended; forecast overwrites nothing
        // because it starts after the last history month.
        let mut values = Vec::new();
        let mut observed = Vec::new();
        let offset = forecast_start.months_since(&history.start);
        debug_assert!(offset >= 0);
        let offset = offset as usize;
        for k in 0..offset + horizon {
            if k < offset {
                let have = k < history.values.len();
                values.push(if have { history.values[k] } else { 0.0 });
                observed.push(have && history.observed[k]);
            } else {
                values.push(path[k - offset]);
                observed.push(true);
            }
        }
        MonthlySeries { start: history.start, values, observed }
    };

    let point_series = extend(point_path);
    let mut out = Vec::with_capacity(quarters.len());
    for q in quarters {
        let x_point = quarter_regressor(spec, &point_series, q).ok_or_else(|| {
            Error::InsufficientData(format!(
                "quarter {q}: mapped month not covered by history or forecast"
            ))
        })?;
        let point = fit.intercept + fit.slope * x_point;
        let mut draws = Vec::with_capacity(replicate_paths.len());
        for path in replicate_paths {
            let series = extend(path);
            let x = quarter_regressor(spec, &series, q).ok_or_else(|| {
                Error::InsufficientData(format!("quarter {q}: replicate path too short"))
            })?;
            let eps: f64 = StandardNormal.sample(rng);
            draws.push(fit.intercept + fit.slope * x + fit.residual_sd * eps);
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(GdpProjection {
            quarter: *q,
            point,
            lower: quantile_sorted(&draws, alpha / 2.0),
            upper: quantile_sorted(&draws, 1.0 - alpha / 2.0),
        });
    }
    Ok(out)
}

/// Write projections in the quarterly output layout
/// `quarter,scenario,point,lo95,hi95`.
pub fn write_projection_csv(
    projections: &[(String, Vec<GdpProjection>)],
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_record(["quarter", "scenario", "point", "lo95", "hi95"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (scenario, rows) in projections {
        for r in rows {
            w.write_record([
                &r.quarter.to_string(),
                scenario,
                &fmt_full(r.point),
                &fmt_full(r.lower),
                &fmt_full(r.upper),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn std_normal(rng: &mut impl rand::Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn monthly(start: (i32, u8), values: Vec<f64>) -> MonthlySeries {
        let observed = vec![true; values.len()];
        MonthlySeries {
            start: CalendarStamp::new(start.0, start.1).unwrap(),
            values,
            observed,
        }
    }

    #[test]
    fn quarter_parsing_and_mapping() {
        let q3 = Quarter::parse("2020-Q3").unwrap();
        assert_eq!(q3.last_month(), CalendarStamp::new(2020, 9).unwrap());
        // "2/3" lag: Q3 maps to July.
        assert_eq!(q3.mapped_month(2), CalendarStamp::new(2020, 7).unwrap());
        assert_eq!(q3.next(), Quarter::new(2020, 4).unwrap());
        assert_eq!(Quarter::new(2020, 4).unwrap().next(), Quarter::new(2021, 1).unwrap());
        assert!(Quarter::parse("2020-Q5").is_err());
        assert_eq!(q3.to_string(), "2020-Q3");
        // 2020 Q4 maps to Oct-20 under the 2/3 lag.
        assert_eq!(
            Quarter::new(2020, 4).unwrap().mapped_month(2),
            CalendarStamp::new(2020, 10).unwrap()
        );
    }

    #[test]
    fn align_pairs_q3_with_july() {
        // Monthly Jan..Dec 2020 valued by month number; Q3 must pick July=7.
        let series = monthly((2020, 1), (1..=12).map(|m| m as f64).collect());
        let quarterly = QuarterlySeries::new(
            vec![Quarter::new(2020, 2).unwrap(), Quarter::new(2020, 3).unwrap()],
            vec![-20.0, 16.0],
        )
        .unwrap();
        let rows = align_midas(&series, &quarterly, &MidasSpec::default()).unwrap();
        assert_eq!(rows, vec![(4.0, -20.0), (7.0, 16.0)]);
    }

    #[test]
    fn missing_mapped_month_drops_row() {
        let mut series = monthly((2020, 1), (1..=12).map(|m| m as f64).collect());
        series.observed[6] = false; // July missing
        let quarterly = QuarterlySeries::new(
            vec![Quarter::new(2020, 2).unwrap(), Quarter::new(2020, 3).unwrap()],
            vec![-20.0, 16.0],
        )
        .unwrap();
        let rows = align_midas(&series, &quarterly, &MidasSpec::default()).unwrap();
        assert_eq!(rows, vec![(4.0, -20.0)]);
    }

    #[test]
    fn almon_weights_uniform_at_zero_theta_and_normalized() {
        let w = almon_weights(0.0, 0.0, 3);
        for wk in &w {
            assert_relative_eq!(*wk, 1.0 / 3.0, epsilon = 1e-15);
        }
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..50 {
            let t1: f64 = rng.random_range(-2.0..2.0);
            let t2: f64 = rng.random_range(-1.0..1.0);
            let w = almon_weights(t1, t2, 3);
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn single_lag_equals_degenerate_almon() {
        let series = monthly((2020, 1), (1..=24).map(|m| 45.0 + m as f64).collect());
        let quarters: Vec<Quarter> =
            (1..=4).map(|q| Quarter::new(2020, q).unwrap()).collect();
        let quarterly = QuarterlySeries::new(quarters, vec![0.5, -1.0, 2.0, 0.3]).unwrap();
        let single = align_midas(&series, &quarterly, &MidasSpec::default()).unwrap();
        // θ₁ = 40 concentrates all Almon weight on lag 2 (the first month).
        let spec = MidasSpec {
            mode: MidasMode::Almon { theta1: 40.0, theta2: 0.0 },
            lag_index: 2,
            intercept: true,
        };
        let almon = align_midas(&series, &quarterly, &spec).unwrap();
        for (a, b) in single.iter().zip(&almon) {
            assert_relative_eq!(a.0, b.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn exact_linear_relation_recovers_slope() {
        // growth = 0.5·(index − 50): slope 0.5, intercept −25, residual sd 0.
        let mut rng = StdRng::seed_from_u64(2);
        let values: Vec<f64> = (0..60).map(|_| 50.0 + 10.0 * rng.random::<f64>()).collect();
        let series = monthly((2010, 1), values.clone());
        let quarters: Vec<Quarter> = {
            let mut qs = vec![Quarter::new(2010, 1).unwrap()];
            while qs.len() < 19 {
                qs.push(qs.last().unwrap().next());
            }
            qs
        };
        let spec = MidasSpec::default();
        let growth: Vec<f64> = quarters
            .iter()
            .map(|q| {
                let m = q.mapped_month(spec.lag_index);
                0.5 * (series.value_at(&m).unwrap() - 50.0)
            })
            .collect();
        let quarterly = QuarterlySeries::new(quarters, growth).unwrap();
        let rows = align_midas(&series, &quarterly, &spec).unwrap();
        let fit = fit_midas(&rows, true).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-10);
        assert_relative_eq!(fit.intercept, -25.0, epsilon = 1e-8);
        assert!(fit.residual_sd < 1e-10);
    }

    #[test]
    fn constant_regressor_is_singular() {
        let rows: Vec<(f64, f64)> = (0..10).map(|k| (50.0, k as f64)).collect();
        assert!(matches!(fit_midas(&rows, true), Err(Error::Singular(_))));
        let two = vec![(1.0, 2.0), (2.0, 3.0)];
        assert!(matches!(fit_midas(&two, true), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn noisy_regression_slope_within_three_se() {
        let mut rng = StdRng::seed_from_u64(3);
        let n = 200;
        let rows: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = 50.0 + 5.0 * std_normal(&mut rng);
                let y = 1.5 + 0.4 * x + std_normal(&mut rng);
                (x, y)
            })
            .collect();
        let fit = fit_midas(&rows, true).unwrap();
        assert!((fit.slope - 0.4).abs() <= 3.0 * fit.slope_se);
    }

    #[test]
    fn deterministic_projection_collapses() {
        let history = monthly((2020, 1), (1..=10).map(|m| 50.0 + m as f64).collect());
        let fit = MidasFit { slope: 0.5, intercept: -25.0, residual_sd: 0.0, slope_se: 0.0, n_rows: 10 };
        let spec = MidasSpec::default();
        let point = vec![58.0, 59.0, 60.0, 61.0, 62.0, 63.0];
        let reps = vec![point.clone(); 40];
        let mut rng = StdRng::seed_from_u64(4);
        let quarters = vec![Quarter::new(2021, 1).unwrap()];
        let start = CalendarStamp::new(2020, 11).unwrap();
        let proj =
            project_gdp(&fit, &spec, &history, start, &point, &reps, &quarters, 0.05, &mut rng)
                .unwrap();
        // 2021 Q1 maps to Jan-21 = 3rd forecast month = 60.0 → 0.5·60 − 25 = 5.
        assert_relative_eq!(proj[0].point, 5.0, epsilon = 1e-12);
        assert_relative_eq!(proj[0].lower, proj[0].point, epsilon = 1e-12);
        assert_relative_eq!(proj[0].upper, proj[0].point, epsilon = 1e-12);
    }

    #[test]
    fn quarter_before_divergence_is_scenario_invariant() {
        // 2020 Q4 maps to Oct-20, inside history, so different forecast paths
        // and different residual draws with the same seed give identical
        // projections.
        let history = monthly((2020, 1), (1..=10).map(|m| 40.0 + m as f64).collect());
        let fit = MidasFit { slope: 0.3, intercept: 1.0, residual_sd: 0.8, slope_se: 0.0, n_rows: 9 };
        let spec = MidasSpec::default();
        let start = CalendarStamp::new(2020, 11).unwrap();
        let quarters = vec![Quarter::new(2020, 4).unwrap()];
        let path_a = vec![55.0; 6];
        let path_b = vec![95.0; 6];
        let reps_a: Vec<Vec<f64>> = (0..100).map(|_| path_a.clone()).collect();
        let reps_b: Vec<Vec<f64>> = (0..100).map(|_| path_b.clone()).collect();
        let mut rng_a = StdRng::seed_from_u64(5);
        let mut rng_b = StdRng::seed_from_u64(5);
        let pa = project_gdp(&fit, &spec, &history, start, &path_a, &reps_a, &quarters, 0.05, &mut rng_a)
            .unwrap();
        let pb = project_gdp(&fit, &spec, &history, start, &path_b, &reps_b, &quarters, 0.05, &mut rng_b)
            .unwrap();
        assert_eq!(pa[0].point.to_bits(), pb[0].point.to_bits());
        assert_eq!(pa[0].lower.to_bits(), pb[0].lower.to_bits());
        assert_eq!(pa[0].upper.to_bits(), pb[0].upper.to_bits());
    }

    #[test]
    fn wider_monthly_dispersion_widens_gdp_intervals() {
        let history = monthly((2020, 1), vec![50.0; 10]);
        let fit = MidasFit { slope: 0.5, intercept: 0.0, residual_sd: 0.1, slope_se: 0.0, n_rows: 20 };
        let spec = MidasSpec::default();
        let start = CalendarStamp::new(2020, 11).unwrap();
        let quarters = vec![Quarter::new(2021, 1).unwrap()];
        let point = vec![50.0; 6];
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = StdRng::seed_from_u64(100 + seed);
            let mut narrow = Vec::new();
            let mut wide = Vec::new();
            for _ in 0..150 {
                let e: f64 = StandardNormal.sample(&mut rng);
                narrow.push(vec![50.0 + e; 6]);
                wide.push(vec![50.0 + 3.0 * e; 6]);
            }
            let mut rng_n = StdRng::seed_from_u64(200 + seed);
            let mut rng_w = StdRng::seed_from_u64(200 + seed);
            let pn = project_gdp(&fit, &spec, &history, start, &point, &narrow, &quarters, 0.05, &mut rng_n)
                .unwrap();
            let pw = project_gdp(&fit, &spec, &history, start, &point, &wide, &quarters, 0.05, &mut rng_w)
                .unwrap();
            if pw[0].upper - pw[0].lower >= pn[0].upper - pn[0].lower {
                wins += 1;
            }
        }
        assert!(wins >= 19, "wider dispersion won only {wins}/20");
    }

    #[test]
    fn projection_affine_in_replicate_shift() {
        let history = monthly((2020, 1), vec![50.0; 10]);
        let fit = MidasFit { slope: 0.7, intercept: 2.0, residual_sd: 0.5, slope_se: 0.0, n_rows: 20 };
        let spec = MidasSpec::default();
        let start = CalendarStamp::new(2020, 11).unwrap();
        let quarters = vec![Quarter::new(2021, 1).unwrap()];
        let mut rng = StdRng::seed_from_u64(6);
        let reps: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..6).map(|_| 50.0 + std_normal(&mut rng)).collect())
            .collect();
        let point = vec![50.0; 6];
        let c = 4.25;
        let reps_shift: Vec<Vec<f64>> =
            reps.iter().map(|p| p.iter().map(|v| v + c).collect()).collect();
        let point_shift: Vec<f64> = point.iter().map(|v| v + c).collect();
        let mut rng_a = StdRng::seed_from_u64(7);
        let mut rng_b = StdRng::seed_from_u64(7);
        let base = project_gdp(&fit, &spec, &history, start, &point, &reps, &quarters, 0.05, &mut rng_a)
            .unwrap();
        let shifted = project_gdp(
            &fit, &spec, &history, start, &point_shift, &reps_shift, &quarters, 0.05, &mut rng_b,
        )
        .unwrap();
        assert_relative_eq!(shifted[0].point, base[0].point + fit.slope * c, epsilon = 1e-12);
        assert_relative_eq!(shifted[0].lower, base[0].lower + fit.slope * c, epsilon = 1e-12);
    }

    #[test]
    fn residual_sd_matches_sample_sd_of_residuals() {
        let mut rng = StdRng::seed_from_u64(8);
        let rows: Vec<(f64, f64)> = (0..40)
            .map(|_| {
                let x: f64 = rng.random_range(40.0..60.0);
                (x, 0.2 * x - 3.0 + std_normal(&mut rng))
            })
            .collect();
        let fit = fit_midas(&rows, true).unwrap();
        let residuals: Vec<f64> =
            rows.iter().map(|r| r.1 - fit.intercept - fit.slope * r.0).collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let sd = (residuals.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (residuals.len() - 1) as f64)
            .sqrt();
        assert_relative_eq!(fit.residual_sd, sd, epsilon = 1e-12);
    }

    #[test]
    fn quarterly_csv_roundtrip() {
        use std::io::Write;
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "quarter,growth").unwrap();
        writeln!(file, "2020-Q3,16.1").unwrap();
        writeln!(file, "2020-Q4,-0.1").unwrap();
        file.flush().unwrap();
        let series = load_quarterly_csv(file.path()).unwrap();
        assert_eq!(series.quarters[0], Quarter::new(2020, 3).unwrap());
        assert_eq!(series.values[1], -0.1);

        let mut gap = tempfile::NamedTempFile::new().unwrap();
        writeln!(gap, "quarter,growth").unwrap();
        writeln!(gap, "2020-Q1,1.0").unwrap();
        writeln!(gap, "2020-Q3,2.0").unwrap();
        gap.flush().unwrap();
        assert!(load_quarterly_csv(gap.path()).is_err());
    }
}
