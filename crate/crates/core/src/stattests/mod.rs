//! Unit-root, panel unit-root, structural-break and pairwise cointegration
//! tests.

mod adf;
mod chow;
pub mod mackinnon;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub use adf::{adf_test, AdfResult};
pub use chow::{chow_test, ChowResult, EquationChow};

use crate::error::{Error, Result};
use crate::linalg::{ols, Matrix, Vector};
use crate::panel::PricePanel;
use crate::par;
use crate::special::chi2_sf;

/// Deterministic terms in the Dickey-Fuller regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deterministic {
    None,
    Constant,
    ConstantTrend,
}

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelUnitRootResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub series: Vec<String>,
    pub per_series: Vec<AdfResult>,
}

/// Fisher combination `-2 sum ln p_i` and its chi-square(2N) tail.
pub fn fisher_combine(p_values: &[f64]) -> (f64, usize, f64) {
    let stat: f64 = -2.0 * p_values.iter().map(|&p| libm::log(p)).sum::<f64>();
    let stat = if stat == 0.0 { 0.0 } else { stat };
    let df = 2 * p_values.len();
    (stat, df, chi2_sf(stat, df as f64))
}

/// Maddala-Wu panel unit-root test: ADF per column, Fisher combination.
pub fn panel_unit_root(
    panel: &PricePanel,
    deterministic: Deterministic,
    max_lag: usize,
) -> Result<PanelUnitRootResult> {
    let m = panel.n_series();
    if m < 2 {
        return Err(Error::InvalidArgument("panel unit-root test needs at least 2 series".into()));
    }
    let results = par::map_indexed(m, |j| {
        adf_test(&panel.column(j), deterministic, max_lag)
            .map_err(|e| e.context(format!("series {}", panel.series[j])))
    });
    let per_series = results.into_iter().collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = per_series.iter().map(|r| r.p_value).collect();
    let (statistic, df, p_value) = fisher_combine(&p);
    Ok(PanelUnitRootResult {
        statistic,
        df,
        p_value,
        series: panel.labels(),
        per_series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub dependent: String,
    pub regressor: String,
    pub statistic: f64,
    pub p_value: f64,
    pub lag: usize,
    pub cointegrated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseCointegration {
    pub commodity: String,
    pub period: Option<String>,
    pub regions: Vec<String>,
    /// Symmetric, false on the diagonal.
    pub matrix: Vec<Vec<bool>>,
    pub count: usize,
    pub pairs_examined: usize,
    pub significance: f64,
    pub pairs: Vec<PairTest>,
}

/// Engle-Granger two-step test of `y` on `x` with a constant; the residual
/// ADF has no deterministic terms and uses the two-series tables.
pub fn engle_granger(y: &[f64], x: &[f64], max_lag: usize) -> Result<(f64, f64, usize)> {
    if y.len() != x.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    let n = y.len();
    let design = Matrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let fit = ols(&design, &Vector::from_column_slice(y));
    let resid: Vec<f64> = fit.residuals.iter().cloned().collect();
    let r = adf::adf_with_tables(&resid, Deterministic::None, max_lag, Deterministic::Constant, 2)?;
    Ok((r.statistic, r.p_value, r.lag))
}

/// All unordered region pairs of one commodity, optionally within a period.
pub fn pairwise_cointegration(
    panel: &PricePanel,
    commodity: &str,
    period: Option<&str>,
    max_lag: usize,
    significance: f64,
) -> Result<PairwiseCointegration> {
    let data = match period {
        Some(name) => panel.slice_period(name)?,
        None => panel.clone(),
    };
    let mut cols = data.commodity_columns(commodity);
    cols.sort_by(|&a, &b| data.series[a].label().cmp(&data.series[b].label()));
    let r = cols.len();
    if r < 2 {
        return Err(Error::InvalidArgument(format!(
            "commodity {commodity} has fewer than 2 series"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..r)
        .flat_map(|a| (a + 1..r).map(move |b| (a, b)))
        .collect();
    let tests = par::map_indexed(pairs.len(), |k| {
        let (a, b) = pairs[k];
        let (ya, yb) = (data.column(cols[a]), data.column(cols[b]));
        let dep = data.series[cols[a]].label();
        let reg = data.series[cols[b]].label();
        engle_granger(&ya, &yb, max_lag)
            .map(|(statistic, p_value, lag)| PairTest {
                dependent: dep.clone(),
                regressor: reg.clone(),
                statistic,
                p_value,
                lag,
                cointegrated: p_value < significance,
            })
            .map_err(|e| e.context(format!("pair {dep} / {reg}")))
    });
    let tests = tests.into_iter().collect::<Result<Vec<_>>>()?;
    let mut matrix = vec![vec![false; r]; r];
    let mut count = 0;
    for (&(a, b), t) in pairs.iter().zip(&tests) {
        if t.cointegrated {
            matrix[a][b] = true;
            matrix[b][a] = true;
            count += 1;
        }
    }
    Ok(PairwiseCointegration {
        commodity: commodity.into(),
        period: period.map(String::from),
        regions: cols.iter().map(|&j| data.series[j].region.clone()).collect(),
        matrix,
        count,
        pairs_examined: pairs.len(),
        significance,
        pairs: tests,
    })
}
