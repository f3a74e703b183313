//! Price panel: weekly aggregation, deflation, gap filling, log transform,
//! period tagging and summary statistics.
//!
//! Series are ordered commodity-major with regions sorted lexicographically
//! inside each commodity block, so for `R` regions the series for
//! commodity `k` and region `j` sits at column `k * R + j`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{serde_mask, serde_rows_nan, Matrix};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesId {
    pub commodity: String,
    pub region: String,
}

impl SeriesId {
    pub fn new(commodity: impl Into<String>, region: impl Into<String>) -> Self {
        SeriesId {
            commodity: commodity.into(),
            region: region.into(),
        }
    }

    /// Parses a `<commodity>.<region>` label.
    pub fn parse(label: &str) -> Option<Self> {
        let (c, r) = label.split_once('.')?;
        if c.is_empty() || r.is_empty() {
            return None;
        }
        Some(SeriesId::new(c, r))
    }

    pub fn label(&self) -> String {
        format!("{}.{}", self.commodity, self.region)
    }
}

impl fmt::Display for SeriesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.commodity, self.region)
    }
}

/// A calendar month, used as the CPI key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn of(date: NaiveDate) -> Self {
        Month {
            year: date.year(),
            month: date.month(),
        }
    }

    /// Parses `YYYY-MM`.
    pub fn parse(s: &str) -> Option<Self> {
        let (y, m) = s.trim().split_once('-')?;
        let year = y.parse().ok()?;
        let month: u32 = m.parse().ok()?;
        (1..=12).contains(&month).then_some(Month { year, month })
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    /// ISO-8601 calendar date, parsed during aggregation.
    pub date: String,
    pub region: String,
    pub commodity: String,
    pub price: Option<f64>,
}

/// Named contiguous block of time indices, `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl Period {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Calendar definition of a period, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub deflated_base: Option<Month>,
    pub interpolated: bool,
    pub log: bool,
    /// Series dropped by the sparse-series exclusion rule.
    pub excluded: Vec<String>,
    /// Weeks are keyed by the Monday of their ISO week; a week spanning a
    /// period boundary belongs to the period containing its Monday.
    pub week_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub series: Vec<SeriesId>,
    /// T x m values; `NaN` marks a gap before interpolation.
    #[serde(with = "serde_rows_nan")]
    pub values: Matrix,
    /// Original missingness, preserved through every transform.
    #[serde(with = "serde_mask")]
    pub missing: DMatrix<bool>,
    pub periods: Vec<Period>,
    pub transform: TransformLog,
}

const WEEK_RULE: &str = "iso-week-monday";

impl PricePanel {
    /// Builds a panel from gap-free or NaN-marked values; the mask is
    /// derived from the NaNs.
    pub fn new(dates: Vec<NaiveDate>, series: Vec<SeriesId>, values: Matrix) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != series.len() {
            return Err(Error::InvalidArgument(format!(
                "values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                dates.len(),
                series.len()
            )));
        }
        check_equal_spacing(&dates)?;
        let missing = values.map(|v| v.is_nan());
        Ok(PricePanel {
            dates,
            series,
            values,
            missing,
            periods: Vec::new(),
            transform: TransformLog {
                week_rule: WEEK_RULE.to_string(),
                ..TransformLog::default()
            },
        })
    }

    pub fn n_times(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> Vec<String> {
        self.series.iter().map(SeriesId::label).collect()
    }

    pub fn index_of(&self, id: &SeriesId) -> Option<usize> {
        self.series.iter().position(|s| s == id)
    }

    pub fn index_of_label(&self, label: &str) -> Result<usize> {
        SeriesId::parse(label)
            .and_then(|id| self.index_of(&id))
            .ok_or_else(|| Error::UnknownSeries(label.to_string()))
    }

    /// Commodities in column order.
    pub fn commodities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.series {
            if out.last() != Some(&s.commodity) {
                out.push(s.commodity.clone());
            }
        }
        out
    }

    pub fn regions(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.series.iter().map(|s| &s.region).collect();
        set.into_iter().cloned().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().cloned().collect()
    }

    pub fn period(&self, name: &str) -> Result<&Period> {
        self.periods
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownPeriod(name.to_string()))
    }

    /// Rows `start..end` as a new panel; period tags are re-based and
    /// clipped to the slice.
    pub fn slice_rows(&self, start: usize, end: usize) -> PricePanel {
        let rows = end - start;
        let periods = self
            .periods
            .iter()
            .filter_map(|p| {
                let s = p.start.max(start);
                let e = p.end.min(end);
                (s < e).then(|| Period {
                    name: p.name.clone(),
                    start: s - start,
                    end: e - start,
                })
            })
            .collect();
        PricePanel {
            dates: self.dates[start..end].to_vec(),
            series: self.series.clone(),
            values: self.values.rows(start, rows).into_owned(),
            missing: self.missing.rows(start, rows).into_owned(),
            periods,
            transform: self.transform.clone(),
        }
    }

    /// The rows of a named period.
    pub fn slice_period(&self, name: &str) -> Result<PricePanel> {
        let p = self.period(name)?.clone();
        Ok(self.slice_rows(p.start, p.end))
    }

    /// Keeps the listed columns in the given order.
    pub fn select_series(&self, cols: &[usize]) -> PricePanel {
        PricePanel {
            dates: self.dates.clone(),
            series: cols.iter().map(|&j| self.series[j].clone()).collect(),
            values: self.values.select_columns(cols),
            missing: self.missing.select_columns(cols),
            periods: self.periods.clone(),
            transform: self.transform.clone(),
        }
    }

    /// Columns belonging to one commodity.
    pub fn commodity_columns(&self, commodity: &str) -> Vec<usize> {
        (0..self.n_series())
            .filter(|&j| self.series[j].commodity == commodity)
            .collect()
    }

    /// First differences, one row shorter.
    pub fn diff(&self) -> Matrix {
        let t = self.n_times();
        Matrix::from_fn(t.saturating_sub(1), self.n_series(), |i, j| {
            self.values[(i + 1, j)] - self.values[(i, j)]
        })
    }

    pub fn has_gaps(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Tags periods from calendar ranges; a week belongs to the period that
    /// contains its Monday stamp.
    pub fn tag_periods(&mut self, specs: &[PeriodSpec]) -> Result<()> {
        let mut tags = Vec::with_capacity(specs.len());
        let mut last_end: Option<NaiveDate> = None;
        for spec in specs {
            if spec.end < spec.start {
                return Err(Error::InvalidArgument(format!(
                    "period {} ends before it starts",
                    spec.name
                )));
            }
            if last_end.is_some_and(|e| spec.start <= e) {
                return Err(Error::InvalidArgument(format!(
                    "period {} overlaps or precedes the previous period",
                    spec.name
                )));
            }
            last_end = Some(spec.end);
            let start = self.dates.iter().position(|d| *d >= spec.start);
            let end = self.dates.iter().rposition(|d| *d <= spec.end);
            match (start, end) {
                (Some(s), Some(e)) if s <= e => tags.push(Period {
                    name: spec.name.clone(),
                    start: s,
                    end: e + 1,
                }),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "period {} contains no weeks of the panel",
                        spec.name
                    )))
                }
            }
        }
        self.periods = tags;
        Ok(())
    }
}

fn check_equal_spacing(dates: &[NaiveDate]) -> Result<()> {
    if dates.len() < 2 {
        return Ok(());
    }
    let step = dates[1] - dates[0];
    if step <= Duration::zero() || dates.windows(2).any(|w| w[1] - w[0] != step) {
        return Err(Error::InvalidArgument(
            "time stamps must be strictly increasing with a constant step".to_string(),
        ));
    }
    Ok(())
}

/// Monday of the ISO week containing `date`.
pub fn week_monday(date: NaiveDate) -> NaiveDate {
    date - Duration::days(date.weekday().num_days_from_monday() as i64)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions {
    /// Commodity block order; lexicographic when absent.
    pub commodities: Option<Vec<String>>,
}

/// Averages raw observations into (week, region, commodity) cells.
pub fn aggregate(raw: &[RawObservation], options: &AggregateOptions) -> Result<PricePanel> {
    if raw.is_empty() {
        return Err(Error::NoObservations);
    }
    let mut bad = Vec::new();
    let mut weeks = Vec::with_capacity(raw.len());
    for (i, obs) in raw.iter().enumerate() {
        match parse_date(&obs.date) {
            Some(d) => weeks.push(week_monday(d)),
            None => bad.push(i),
        }
    }
    if !bad.is_empty() {
        return Err(Error::UnparseableDates { rows: bad });
    }

    let regions: BTreeSet<&str> = raw.iter().map(|o| o.region.as_str()).collect();
    let commodities: Vec<String> = match &options.commodities {
        Some(order) => order.clone(),
        None => {
            let set: BTreeSet<&str> = raw.iter().map(|o| o.commodity.as_str()).collect();
            set.into_iter().map(String::from).collect()
        }
    };
    let series: Vec<SeriesId> = commodities
        .iter()
        .flat_map(|c| regions.iter().map(move |r| SeriesId::new(c.clone(), *r)))
        .collect();
    let col: BTreeMap<(&str, &str), usize> = series
        .iter()
        .enumerate()
        .map(|(j, s)| ((s.commodity.as_str(), s.region.as_str()), j))
        .collect();

    let first = *weeks.iter().min().expect("nonempty");
    let last = *weeks.iter().max().expect("nonempty");
    let n_weeks = ((last - first).num_days() / 7) as usize + 1;
    let dates: Vec<NaiveDate> = (0..n_weeks)
        .map(|k| first + Duration::days(7 * k as i64))
        .collect();

    let m = series.len();
    let mut sums = vec![0.0; n_weeks * m];
    let mut counts = vec![0usize; n_weeks * m];
    for (obs, week) in raw.iter().zip(&weeks) {
        let Some(price) = obs.price else { continue };
        let Some(&j) = col.get(&(obs.commodity.as_str(), obs.region.as_str())) else {
            // commodity outside the configured set
            continue;
        };
        if !(price > 0.0) || !price.is_finite() {
            return Err(Error::NonPositiveValue {
                stamp: obs.date.clone(),
                series: series[j].label(),
                value: price,
            });
        }
        let t = ((*week - first).num_days() / 7) as usize;
        sums[t * m + j] += price;
        counts[t * m + j] += 1;
    }
    let values = Matrix::from_fn(n_weeks, m, |t, j| {
        let n = counts[t * m + j];
        if n == 0 {
            f64::NAN
        } else {
            sums[t * m + j] / n as f64
        }
    });
    for j in 0..m {
        if values.column(j).iter().all(|v| v.is_nan()) {
            return Err(Error::TooFewObservations {
                series: series[j].label(),
                observed: 0,
                required: 1,
            });
        }
    }
    PricePanel::new(dates, series, values)
}

/// Converts to constant `base`-month prices: value * cpi(base) / cpi(month).
pub fn deflate(panel: &PricePanel, cpi: &BTreeMap<Month, f64>, base: Month) -> Result<PricePanel> {
    let base_value = *cpi.get(&base).ok_or_else(|| Error::MissingCpiMonth {
        month: base.to_string(),
    })?;
    if !(base_value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cpi for base month {base} must be positive"
        )));
    }
    let mut factors = Vec::with_capacity(panel.n_times());
    for d in &panel.dates {
        let month = Month::of(*d);
        let v = *cpi.get(&month).ok_or_else(|| Error::MissingCpiMonth {
            month: month.to_string(),
        })?;
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("cpi for {month} must be positive")));
        }
        factors.push(base_value / v);
    }
    let mut out = panel.clone();
    for (t, f) in factors.iter().enumerate() {
        for j in 0..out.n_series() {
            out.values[(t, j)] *= f;
        }
    }
    out.transform.deflated_base = Some(base);
    Ok(out)
}

/// Fills gaps: linear between observed neighbours, constant extension of the
/// nearest observation at either end. Observed cells are left untouched.
pub fn interpolate(panel: &PricePanel) -> Result<PricePanel> {
    let mut out = panel.clone();
    for j in 0..panel.n_series() {
        let col = panel.column(j);
        let observed: Vec<usize> = (0..col.len()).filter(|&t| !col[t].is_nan()).collect();
        if observed.len() < 2 {
            return Err(Error::TooFewObservations {
                series: panel.series[j].label(),
                observed: observed.len(),
                required: 2,
            });
        }
        let filled = fill_column(&col, &observed);
        for (t, v) in filled.into_iter().enumerate() {
            out.values[(t, j)] = v;
        }
    }
    out.transform.interpolated = true;
    Ok(out)
}

fn fill_column(col: &[f64], observed: &[usize]) -> Vec<f64> {
    let mut out = col.to_vec();
    let first = observed[0];
    let last = *observed.last().expect("nonempty");
    for v in out.iter_mut().take(first) {
        *v = col[first];
    }
    for v in out.iter_mut().skip(last + 1) {
        *v = col[last];
    }
    for w in observed.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = (b - a) as f64;
        for t in a + 1..b {
            let frac = (t - a) as f64 / span;
            out[t] = col[a] + frac * (col[b] - col[a]);
        }
    }
    out
}

/// Natural log of every value.
pub fn log_transform(panel: &PricePanel) -> Result<PricePanel> {
    let mut out = panel.clone();
    for t in 0..panel.n_times() {
        for j in 0..panel.n_series() {
            let v = panel.values[(t, j)];
            if v.is_nan() {
                continue;
            }
            if !(v > 0.0) {
                return Err(Error::NonPositiveValue {
                    stamp: panel.dates[t].to_string(),
                    series: panel.series[j].label(),
                    value: v,
                });
            }
            out.values[(t, j)] = libm::log(v);
        }
    }
    out.transform.log = true;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub commodity: String,
    pub period: String,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub missing_pct: f64,
}

/// Level-scale statistics per commodity and period, pooled over regions and
/// weeks. Only originally observed cells enter the moments; the missing
/// percentage comes from the mask.
pub fn summarize(panel: &PricePanel, periods: &[&str]) -> Result<Vec<PeriodSummary>> {
    let mut out = Vec::new();
    for name in periods {
        let p = panel.period(name)?;
        for commodity in panel.commodities() {
            let cols = panel.commodity_columns(&commodity);
            let mut vals = Vec::new();
            let mut missing = 0usize;
            for t in p.start..p.end {
                for &j in &cols {
                    if panel.missing[(t, j)] {
                        missing += 1;
                        continue;
                    }
                    let v = panel.values[(t, j)];
                    vals.push(if panel.transform.log { libm::exp(v) } else { v });
                }
            }
            let total = p.len() * cols.len();
            let (min, max) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            out.push(PeriodSummary {
                commodity: commodity.clone(),
                period: p.name.clone(),
                mean: stats::mean(&vals),
                std_dev: stats::sample_std(&vals),
                min,
                median: stats::median(&vals),
                max,
                missing_pct: 100.0 * missing as f64 / total.max(1) as f64,
            });
        }
    }
    Ok(out)
}

/// Drops every region that has a series missing more than `threshold`
/// (a fraction) of its cells in any tagged period, so the panel stays
/// rectangular. Returns the dropped region names.
pub fn exclude_sparse(panel: &PricePanel, threshold: f64) -> (PricePanel, Vec<String>) {
    let whole = [Period {
        name: String::new(),
        start: 0,
        end: panel.n_times(),
    }];
    let periods: &[Period] = if panel.periods.is_empty() {
        &whole
    } else {
        &panel.periods
    };
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    for j in 0..panel.n_series() {
        for p in periods {
            let miss = (p.start..p.end).filter(|&t| panel.missing[(t, j)]).count();
            if p.len() > 0 && miss as f64 / p.len() as f64 > threshold {
                dropped.insert(panel.series[j].region.clone());
            }
        }
    }
    if dropped.is_empty() {
        return (panel.clone(), Vec::new());
    }
    let keep: Vec<usize> = (0..panel.n_series())
        .filter(|&j| !dropped.contains(&panel.series[j].region))
        .collect();
    let mut out = panel.select_series(&keep);
    let dropped: Vec<String> = dropped.into_iter().collect();
    for r in &dropped {
        log::warn!("dropping region {r}: too many missing values");
    }
    out.transform.excluded.extend(dropped.iter().cloned());
    (out, dropped)
}
