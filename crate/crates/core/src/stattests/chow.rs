//! Equation-by-equation Chow test on the VAR in levels.
//!
//! Each equation regresses `y_{t,i}` on a constant and `p` lags of every
//! series; the restricted model pools both regimes, the unrestricted one
//! fits them separately. The system statistic sums the per-equation SSR
//! differences and residual SSRs with pooled degrees of freedom
//! `(m k, m (n - 2k))`, `k = m p + 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols, Matrix, Vector};
use crate::panel::PricePanel;
use crate::special::f_sf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationChow {
    pub series: String,
    pub f_statistic: f64,
    pub p_value: f64,
    pub ssr_pooled: f64,
    pub ssr_split: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChowResult {
    pub break_index: usize,
    pub f_statistic: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
    pub equations: Vec<EquationChow>,
}

/// Chow test for a break at time index `break_index` (first row of the
/// second regime) in a VAR(`lags`) in levels.
pub fn chow_test(panel: &PricePanel, break_index: usize, lags: usize) -> Result<ChowResult> {
    if lags == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    if panel.has_gaps() {
        return Err(Error::InvalidArgument("panel must be gap-free".into()));
    }
    let t_len = panel.n_times();
    let m = panel.n_series();
    let k = m * lags + 1;
    let required = m * lags + 10;
    let n1 = break_index.saturating_sub(lags);
    let n2 = t_len.saturating_sub(break_index);
    if break_index < lags || n1 <= required || n2 <= required {
        return Err(Error::SeriesTooShort {
            len: n1.min(n2),
            required,
        }
        .context(format!("chow sub-samples around break {break_index}")));
    }
    let n = n1 + n2;
    let y = &panel.values;
    let design = Matrix::from_fn(n, k, |r, c| {
        let t = r + lags;
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / m + 1;
            y[(t - lag, (c - 1) % m)]
        }
    });
    let x1 = design.rows(0, n1).into_owned();
    let x2 = design.rows(n1, n2).into_owned();

    let mut equations = Vec::with_capacity(m);
    let (mut num_sum, mut den_sum) = (0.0, 0.0);
    let df_num = k;
    let df_den = n - 2 * k;
    for i in 0..m {
        let yi = Vector::from_fn(n, |r, _| y[(r + lags, i)]);
        let pooled = ols(&design, &yi).ssr;
        let split = ols(&x1, &yi.rows(0, n1).into_owned()).ssr
            + ols(&x2, &yi.rows(n1, n2).into_owned()).ssr;
        let diff = (pooled - split).max(0.0);
        let scale = yi.norm_squared();
        let (f, p) = f_ratio(diff, split, df_num, df_den, scale);
        num_sum += diff;
        den_sum += split;
        equations.push(EquationChow {
            series: panel.series[i].label(),
            f_statistic: f,
            p_value: p,
            ssr_pooled: pooled,
            ssr_split: split,
        });
    }
    let scale: f64 = y.iter().map(|v| v * v).sum();
    let (f, p) = f_ratio(num_sum, den_sum, m * df_num, m * df_den, scale);
    Ok(ChowResult {
        break_index,
        f_statistic: f,
        df_num: m * df_num,
        df_den: m * df_den,
        p_value: p,
        equations,
    })
}

fn f_ratio(diff: f64, split: f64, d1: usize, d2: usize, scale: f64) -> (f64, f64) {
    let tiny = 1e-24 * scale.max(f64::MIN_POSITIVE);
    if diff <= tiny {
        return (0.0, 1.0);
    }
    if split <= tiny {
        return (f64::INFINITY, 0.0);
    }
    let f = (diff / d1 as f64) / (split / d2 as f64);
    (f, f_sf(f, d1 as f64, d2 as f64))
}
