//! Time-indexed multivariate panel data with a missingness mask.
//!
//! A [`Panel`] stores one monthly series per node as an `N×T` value matrix
//! plus an `N×T` boolean mask; a cell is meaningful only where the mask is
//! true. Missing data is structural (mask), never a sentinel value, and every
//! downstream computation consumes the mask.
//!
//! All operations are pure: they return new panels and never mutate their
//! input, so panels can be freely shared across threads.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A (year, month) calendar stamp with lexicographic ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CalendarStamp {
    pub year: i32,
    pub month: u8,
}

impl CalendarStamp {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Format(format!("month {month} out of range 1..=12")));
        }
        Ok(CalendarStamp { year, month })
    }

    /// Parse `YYYY-MM`.
    pub fn parse(s: &str) -> Result<Self> {
        let err = || Error::Parse {
            location: s.to_string(),
            message: "expected date in YYYY-MM format".to_string(),
        };
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = y.trim().parse().map_err(|_| err())?;
        let month: u8 = m.trim().parse().map_err(|_| err())?;
        CalendarStamp::new(year, month)
    }

    /// The stamp `k` months after `self` (`k` may be negative).
    pub fn add_months(&self, k: i32) -> CalendarStamp {
        let total = self.year * 12 + (self.month as i32 - 1) + k;
        CalendarStamp {
            year: total.div_euclid(12),
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(&self) -> CalendarStamp {
        self.add_months(1)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(&self, other: &CalendarStamp) -> i32 {
        (self.year - other.year) * 12 + self.month as i32 - other.month as i32
    }
}

impl fmt::Display for CalendarStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl TryFrom<String> for CalendarStamp {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        CalendarStamp::parse(&s)
    }
}

impl From<CalendarStamp> for String {
    fn from(c: CalendarStamp) -> String {
        c.to_string()
    }
}

/// Node-by-time observation matrix with missingness mask and monthly calendar.
///
/// Invariants, enforced at construction:
/// - `values` is finite wherever `observed` is true,
/// - `times` is strictly increasing in one-month steps,
/// - at least one node and one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    nodes: Vec<String>,
    times: Vec<CalendarStamp>,
    values: DMatrix<f64>,
    observed: DMatrix<bool>,
}

impl Panel {
    pub fn new(
        nodes: Vec<String>,
        times: Vec<CalendarStamp>,
        values: DMatrix<f64>,
        observed: DMatrix<bool>,
    ) -> Result<Self> {
        let n = nodes.len();
        let t = times.len();
        if n == 0 || t == 0 {
            return Err(Error::Dimension("panel must have N >= 1 and T >= 1".into()));
        }
        if values.nrows() != n || values.ncols() != t {
            return Err(Error::Dimension(format!(
                "values is {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                n,
                t
            )));
        }
        if observed.nrows() != n || observed.ncols() != t {
            return Err(Error::Dimension(format!(
                "observed mask is {}x{}, expected {}x{}",
                observed.nrows(),
                observed.ncols(),
                n,
                t
            )));
        }
        for w in times.windows(2) {
            if w[1] != w[0].next() {
                return Err(Error::Format(format!(
                    "calendar must advance in one-month steps; found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        for i in 0..n {
            for j in 0..t {
                if observed[(i, j)] && !values[(i, j)].is_finite() {
                    return Err(Error::Format(format!(
                        "non-finite value for node '{}' at {}",
                        nodes[i], times[j]
                    )));
                }
            }
        }
        Ok(Panel { nodes, times, values, observed })
    }

    /// Fully observed panel from a value matrix.
    pub fn fully_observed(
        nodes: Vec<String>,
        start: CalendarStamp,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        let t = values.ncols();
        let times: Vec<_> = (0..t as i32).map(|k| start.add_months(k)).collect();
        let observed = DMatrix::from_element(values.nrows(), t, true);
        Panel::new(nodes, times, values, observed)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn times(&self) -> &[CalendarStamp] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn observed(&self) -> &DMatrix<bool> {
        &self.observed
    }

    pub fn value(&self, node: usize, t: usize) -> f64 {
        self.values[(node, t)]
    }

    pub fn is_observed(&self, node: usize, t: usize) -> bool {
        self.observed[(node, t)]
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn time_index(&self, stamp: &CalendarStamp) -> Option<usize> {
        let k = stamp.months_since(&self.times[0]);
        if k >= 0 && (k as usize) < self.times.len() {
            Some(k as usize)
        } else {
            None
        }
    }

    /// First-difference the panel: `out[i,t] = in[i,t+1] − in[i,t]`, observed
    /// only where both operands are observed. The calendar shifts by one month
    /// and shortens by one.
    pub fn difference(&self) -> Result<Panel> {
        let t = self.n_times();
        if t < 2 {
            return Err(Error::Dimension("difference requires T >= 2".into()));
        }
        let n = self.n_nodes();
        let mut values = DMatrix::zeros(n, t - 1);
        let mut observed = DMatrix::from_element(n, t - 1, false);
        for i in 0..n {
            for j in 0..t - 1 {
                if self.observed[(i, j)] && self.observed[(i, j + 1)] {
                    values[(i, j)] = self.values[(i, j + 1)] - self.values[(i, j)];
                    observed[(i, j)] = true;
                }
            }
        }
        Panel::new(self.nodes.clone(), self.times[1..].to_vec(), values, observed)
    }

    /// Standardize each node's observed values to sample mean 0 and sample
    /// standard deviation 1 (n−1 divisor). Returns the per-node `(mean, sd)`
    /// affine parameters needed to invert the transform.
    pub fn standardize(&self) -> Result<(Panel, Vec<(f64, f64)>)> {
        let mut out = self.values.clone();
        let mut params = Vec::with_capacity(self.n_nodes());
        for i in 0..self.n_nodes() {
            let obs: Vec<f64> = (0..self.n_times())
                .filter(|&j| self.observed[(i, j)])
                .map(|j| self.values[(i, j)])
                .collect();
            if obs.len() < 2 {
                return Err(Error::DegenerateScale(self.nodes[i].clone()));
            }
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            let var =
                obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
            if var <= 0.0 {
                return Err(Error::DegenerateScale(self.nodes[i].clone()));
            }
            let sd = var.sqrt();
            for j in 0..self.n_times() {
                if self.observed[(i, j)] {
                    out[(i, j)] = (self.values[(i, j)] - mean) / sd;
                }
            }
            params.push((mean, sd));
        }
        let panel =
            Panel::new(self.nodes.clone(), self.times.clone(), out, self.observed.clone())?;
        Ok((panel, params))
    }

    /// Subtract each node's observed mean. Returns the per-node means.
    pub fn demean(&self) -> Result<(Panel, Vec<f64>)> {
        let mut out = self.values.clone();
        let mut means = Vec::with_capacity(self.n_nodes());
        for i in 0..self.n_nodes() {
            let obs: Vec<f64> = (0..self.n_times())
                .filter(|&j| self.observed[(i, j)])
                .map(|j| self.values[(i, j)])
                .collect();
            if obs.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "node '{}' has no observed values",
                    self.nodes[i]
                )));
            }
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            for j in 0..self.n_times() {
                if self.observed[(i, j)] {
                    out[(i, j)] -= mean;
                }
            }
            means.push(mean);
        }
        let panel =
            Panel::new(self.nodes.clone(), self.times.clone(), out, self.observed.clone())?;
        Ok((panel, means))
    }

    /// Apply the inverse of an affine `(mean, sd)` transform per node.
    pub fn unstandardize(&self, params: &[(f64, f64)]) -> Result<Panel> {
        if params.len() != self.n_nodes() {
            return Err(Error::Dimension("affine parameter count != node count".into()));
        }
        let mut out = self.values.clone();
        for i in 0..self.n_nodes() {
            let (mean, sd) = params[i];
            for j in 0..self.n_times() {
                if self.observed[(i, j)] {
                    out[(i, j)] = self.values[(i, j)] * sd + mean;
                }
            }
        }
        Panel::new(self.nodes.clone(), self.times.clone(), out, self.observed.clone())
    }

    /// Set every cell strictly before `cutoff` to value 0 with
    /// `observed = true`. Used for regressors that are defined to be zero
    /// before some event rather than missing.
    pub fn zero_fill_before(&self, cutoff: CalendarStamp) -> Panel {
        let mut values = self.values.clone();
        let mut observed = self.observed.clone();
        for (j, stamp) in self.times.iter().enumerate() {
            if *stamp < cutoff {
                for i in 0..self.n_nodes() {
                    values[(i, j)] = 0.0;
                    observed[(i, j)] = true;
                }
            }
        }
        Panel {
            nodes: self.nodes.clone(),
            times: self.times.clone(),
            values,
            observed,
        }
    }

    /// Re-index onto a new contiguous calendar; cells outside the source
    /// range come back missing.
    pub fn reindex(&self, times: &[CalendarStamp]) -> Result<Panel> {
        let n = self.n_nodes();
        let mut values = DMatrix::zeros(n, times.len());
        let mut observed = DMatrix::from_element(n, times.len(), false);
        for (j, stamp) in times.iter().enumerate() {
            if let Some(src) = self.time_index(stamp) {
                for i in 0..n {
                    values[(i, j)] = self.values[(i, src)];
                    observed[(i, j)] = self.observed[(i, src)];
                }
            }
        }
        Panel::new(self.nodes.clone(), times.to_vec(), values, observed)
    }

    /// Restrict to the time range `[from, to]` (inclusive, both optional).
    pub fn slice_time(
        &self,
        from: Option<CalendarStamp>,
        to: Option<CalendarStamp>,
    ) -> Result<Panel> {
        let start = match from {
            Some(s) => self
                .time_index(&s)
                .ok_or_else(|| Error::Dimension(format!("{s} outside panel range")))?,
            None => 0,
        };
        let end = match to {
            Some(s) => self
                .time_index(&s)
                .ok_or_else(|| Error::Dimension(format!("{s} outside panel range")))?,
            None => self.n_times() - 1,
        };
        if end < start {
            return Err(Error::Dimension("empty time slice".into()));
        }
        let times = self.times[start..=end].to_vec();
        let values = self.values.columns(start, end - start + 1).into_owned();
        let observed = self.observed.columns(start, end - start + 1).into_owned();
        Panel::new(self.nodes.clone(), times, values, observed)
    }
}

/// Column mapping for wide-format CSV ingestion.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvSpec {
    /// Header name of the date column; defaults to the first column.
    pub date_column: Option<String>,
    /// Subset of node columns to load, in this order; `None` loads every
    /// non-date column in header order.
    pub nodes: Option<Vec<String>>,
}

/// Load a wide-format CSV: header `date,<node1>,<node2>,...`, dates `YYYY-MM`,
/// empty cell = missing. Node order matches header order (or `spec.nodes`).
pub fn load_panel_csv(path: &Path, spec: &CsvSpec) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Format(format!("{}: empty header", path.display())));
    }
    let date_col = match &spec.date_column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("date column '{name}' not in header")))?,
        None => 0,
    };
    let all_nodes: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let selected: Vec<(usize, String)> = match &spec.nodes {
        Some(wanted) => wanted
            .iter()
            .map(|w| {
                all_nodes
                    .iter()
                    .find(|(_, h)| h == w)
                    .cloned()
                    .ok_or_else(|| Error::UnknownNode(w.clone()))
            })
            .collect::<Result<_>>()?,
        None => all_nodes,
    };
    if selected.is_empty() {
        return Err(Error::Format("no node columns in CSV".into()));
    }

    let mut times: Vec<CalendarStamp> = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", row_idx + 2)))?;
        let date_str = record.get(date_col).unwrap_or("");
        let stamp = CalendarStamp::parse(date_str).map_err(|_| Error::Parse {
            location: format!("row {} column '{}'", row_idx + 2, headers.get(date_col).unwrap_or("date")),
            message: format!("malformed date '{date_str}'"),
        })?;
        if times.contains(&stamp) {
            return Err(Error::Format(format!(
                "duplicated timestamp {stamp} at row {}",
                row_idx + 2
            )));
        }
        times.push(stamp);
        let mut row = Vec::with_capacity(selected.len());
        for (col, name) in &selected {
            let cell = record.get(*col).unwrap_or("");
            if cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    location: format!("row {} column '{}'", row_idx + 2, name),
                    message: format!("non-numeric cell '{cell}'"),
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    if times.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }

    let n = selected.len();
    let t = times.len();
    let mut values = DMatrix::zeros(n, t);
    let mut observed = DMatrix::from_element(n, t, false);
    for (j, row) in rows.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                values[(i, j)] = *v;
                observed[(i, j)] = true;
            }
        }
    }
    Panel::new(selected.into_iter().map(|(_, h)| h).collect(), times, values, observed)
}

/// Write a panel in the same wide format that [`load_panel_csv`] reads.
/// Numerics carry 17 significant digits so values round-trip exactly.
pub fn save_panel_csv(panel: &Panel, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.nodes().iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::Format(e.to_string()))?;
    for j in 0..panel.n_times() {
        let mut record = vec![panel.times()[j].to_string()];
        for i in 0..panel.n_nodes() {
            if panel.is_observed(i, j) {
                record.push(fmt_full(panel.value(i, j)));
            } else {
                record.push(String::new());
            }
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Format a float with enough digits (17 significant) to round-trip exactly.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}
