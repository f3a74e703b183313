//! Augmented Dickey-Fuller test with AIC lag selection.
//!
//! Regression: `dy_t = [a + b t] + g y_{t-1} + sum_{i=1..k} d_i dy_{t-i} + e_t`.
//! The lag `k` minimises AIC over `0..=max_lag` on the common sample that
//! drops the first `max_lag` differences; the chosen lag is then refitted
//! on every usable observation.

use alloc::vec::Vec;
use libm::{log, sqrt};
use serde::{Deserialize, Serialize};

use super::{mackinnon, Deterministic};
use crate::error::{Error, Result};
use crate::linalg::{ols, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lag: usize,
    pub p_value: f64,
    pub deterministic: Deterministic,
    pub nobs: usize,
}

pub fn adf_test(series: &[f64], deterministic: Deterministic, max_lag: usize) -> Result<AdfResult> {
    adf_with_tables(series, deterministic, max_lag, deterministic, 1)
}

/// ADF regression with `deterministic` terms, p-value from the `table`
/// surface for `n_series` I(1) series (Engle-Granger uses `Constant`, 2).
pub(crate) fn adf_with_tables(
    series: &[f64],
    deterministic: Deterministic,
    max_lag: usize,
    table: Deterministic,
    n_series: usize,
) -> Result<AdfResult> {
    let n = series.len();
    if n <= max_lag + 10 {
        return Err(Error::SeriesTooShort {
            len: n,
            required: max_lag + 10,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::ZeroVariance);
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();

    let mut best = (f64::INFINITY, 0usize);
    for lag in 0..=max_lag {
        let reg = regression(series, &dy, deterministic, lag, max_lag);
        let fit = ols(&reg.x, &reg.y);
        let nobs = reg.y.len() as f64;
        let aic = nobs * log(fit.ssr / nobs) + 2.0 * reg.x.ncols() as f64;
        if aic < best.0 {
            best = (aic, lag);
        }
    }
    let lag = best.1;
    let reg = regression(series, &dy, deterministic, lag, lag);
    let fit = ols(&reg.x, &reg.y);
    let nobs = reg.y.len();
    let dof = (nobs - reg.x.ncols()) as f64;
    let se = sqrt(fit.ssr / dof * fit.xtx_inv_diag[reg.level_col]);
    let mut statistic = fit.coefficients[reg.level_col] / se;
    if !statistic.is_finite() {
        // exact fit: no evidence against the unit root
        statistic = 0.0;
    }
    Ok(AdfResult {
        statistic,
        lag,
        p_value: mackinnon::p_value(statistic, table, n_series),
        deterministic,
        nobs,
    })
}

struct Regression {
    x: Matrix,
    y: Vector,
    level_col: usize,
}

/// Rows use differences `dy[skip..]`, i.e. the first `skip` are only lags.
fn regression(y: &[f64], dy: &[f64], d: Deterministic, lag: usize, skip: usize) -> Regression {
    let rows: Vec<usize> = (skip..dy.len()).collect();
    let n_det = match d {
        Deterministic::None => 0,
        Deterministic::Constant => 1,
        Deterministic::ConstantTrend => 2,
    };
    let level_col = 0;
    let cols = 1 + lag + n_det;
    let x = Matrix::from_fn(rows.len(), cols, |r, c| {
        let i = rows[r];
        match c {
            0 => y[i],
            c if c <= lag => dy[i - c],
            c if c == lag + 1 => 1.0,
            _ => (r + 1) as f64,
        }
    });
    let yv = Vector::from_iterator(rows.len(), rows.iter().map(|&i| dy[i]));
    Regression {
        x,
        y: yv,
        level_col,
    }
}
