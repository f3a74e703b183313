//! Lagged design matrices and per-fold standardization.

use alloc::vec::Vec;

use crate::linalg::Matrix;

/// Regression rows `t = start..T` of a VAR(p): responses `Y_t` and
/// predictors `[Y_{t-1}, ..., Y_{t-p}]`, lag-major (column `(k-1) m + j`
/// holds series `j` at lag `k`).
#[derive(Debug, Clone)]
pub struct LagDesign {
    pub x: Matrix,
    pub y: Matrix,
}

impl LagDesign {
    pub fn new(values: &Matrix, lags: usize, start: usize) -> Self {
        let m = values.ncols();
        let start = start.max(lags);
        let n = values.nrows().saturating_sub(start);
        let x = Matrix::from_fn(n, m * lags, |r, c| {
            let lag = c / m + 1;
            values[(start + r - lag, c % m)]
        });
        let y = values.rows(start, n).into_owned();
        LagDesign { x, y }
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }
}

/// Centering and scaling of a block of training rows, plus the Gram
/// quantities of the standardized predictors.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub n: usize,
    pub x_mean: Vec<f64>,
    /// Zero for degenerate (constant) predictors.
    pub x_scale: Vec<f64>,
    pub usable: Vec<bool>,
    pub y_mean: Vec<f64>,
    /// `Z'Z`, d x d.
    pub gram: Matrix,
    /// `Z'y_c`, d x m.
    pub zty: Matrix,
    /// `y_c'y_c` per equation.
    pub yty: Vec<f64>,
}

const DEGENERATE: f64 = 1e-12;

impl Standardized {
    pub fn new(x: &Matrix, y: &Matrix, rows: usize, scale: bool) -> Self {
        let d = x.ncols();
        let m = y.ncols();
        let xs = x.rows(0, rows);
        let ys = y.rows(0, rows);
        let nf = rows as f64;
        let x_mean: Vec<f64> = (0..d).map(|j| xs.column(j).sum() / nf).collect();
        let y_mean: Vec<f64> = (0..m).map(|i| ys.column(i).sum() / nf).collect();
        let mut z = Matrix::from_fn(rows, d, |r, j| xs[(r, j)] - x_mean[j]);
        let mut x_scale = Vec::with_capacity(d);
        let mut usable = Vec::with_capacity(d);
        for j in 0..d {
            let sd = libm::sqrt(z.column(j).norm_squared() / nf);
            let ok = sd > DEGENERATE * (1.0 + x_mean[j].abs());
            if !ok {
                log::warn!("predictor column {j} is constant; its coefficient is fixed at zero");
                z.column_mut(j).fill(0.0);
                x_scale.push(0.0);
            } else {
                let s = if scale { sd } else { 1.0 };
                z.column_mut(j).scale_mut(1.0 / s);
                x_scale.push(s);
            }
            usable.push(ok);
        }
        let yc = Matrix::from_fn(rows, m, |r, i| ys[(r, i)] - y_mean[i]);
        let gram = z.tr_mul(&z);
        let zty = z.tr_mul(&yc);
        let yty = (0..m).map(|i| yc.column(i).norm_squared()).collect();
        Standardized {
            n: rows,
            x_mean,
            x_scale,
            usable,
            y_mean,
            gram,
            zty,
            yty,
        }
    }

    pub fn zty_column(&self, i: usize) -> Vec<f64> {
        self.zty.column(i).iter().cloned().collect()
    }

    /// Smallest lambda at which every slope is zero for a pure lasso:
    /// `2 max |Z'y_c|`.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self.zty.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Original-scale slopes and intercept from standardized coefficients.
    pub fn unscale(&self, b: &[f64], equation: usize) -> (f64, Vec<f64>) {
        let slopes: Vec<f64> = b
            .iter()
            .zip(&self.x_scale)
            .map(|(v, s)| if *s == 0.0 { 0.0 } else { v / s })
            .collect();
        let intercept =
            self.y_mean[equation] - slopes.iter().zip(&self.x_mean).map(|(a, m)| a * m).sum::<f64>();
        (intercept, slopes)
    }
}

/// Log-spaced grid from `max` down to `max * min_ratio`.
pub fn log_grid(max: f64, min_ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return alloc::vec![max];
    }
    let (hi, lo) = (libm::log(max), libm::log(max * min_ratio));
    (0..count)
        .map(|k| libm::exp(hi + (lo - hi) * k as f64 / (count - 1) as f64))
        .collect()
}
