//! Elastic-net estimation of a VAR(p) in levels.
//!
//! The penalized objective is the plain sum of squared residuals plus
//! `lambda * ((1 - gamma) ||Theta||_F^2 + gamma ||vec Theta||_1)`, with no
//! `1/(2n)` factor. It separates by equation, so each row of `Theta` is
//! solved on its own. Slopes are penalized on internally standardized
//! predictors (population scale, `sum z^2 = n`); the intercept is never
//! penalized and is recovered from the means. Under this convention a
//! single standardized predictor has the lasso slope `S(z'y, lambda/2) / n`
//! and the ridge solution is `(Z'Z + lambda I)^{-1} Z'y`.

mod cv;
pub mod design;
pub mod solver;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, CvOutcome, CvTable, Fold};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows, serde_rows_vec, serde_vec, Matrix, Vector};
use crate::panel::{PricePanel, SeriesId};
use crate::par;
use design::{LagDesign, Standardized};
use solver::{Penalty, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetConfig {
    /// Explicit lambda grid, strictly positive and descending. Generated
    /// from the data when absent.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambdas: usize,
    /// Smallest automatic lambda as a fraction of `lambda_max`. When
    /// absent: 1e-4 if there are at least as many regression rows as
    /// predictors, 1e-2 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub gammas: Vec<f64>,
    pub cv_folds: usize,
    /// Rows in the first training window; half the usable rows by default.
    pub cv_initial_window: Option<usize>,
    /// Rows per test block; splits the remainder evenly by default.
    pub cv_step: Option<usize>,
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub standardize: bool,
    /// Light penalty used by lag selection, as a fraction of lambda_max.
    pub lag_lambda_ratio: f64,
    pub lag_gamma: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            lambdas: None,
            n_lambdas: 50,
            lambda_min_ratio: None,
            gammas: vec![0.1, 0.5, 0.9],
            cv_folds: 5,
            cv_initial_window: None,
            cv_step: None,
            tolerance: 1e-7,
            max_sweeps: 10_000,
            standardize: true,
            lag_lambda_ratio: 1e-3,
            lag_gamma: 0.5,
        }
    }
}

impl ElasticNetConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = &self.lambdas {
            if l.is_empty() || l.iter().any(|v| !(*v > 0.0)) || l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::InvalidArgument(
                    "lambda grid must be positive and strictly descending".into(),
                ));
            }
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::InvalidArgument("gammas must lie in [0, 1]".into()));
        }
        if !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("tolerance and max sweeps must be positive".into()));
        }
        let bad_ratio = self.lambda_min_ratio.is_some_and(|r| !(r > 0.0 && r < 1.0));
        if self.lambdas.is_none() && (self.n_lambdas == 0 || bad_ratio) {
            return Err(Error::InvalidArgument("invalid automatic lambda grid settings".into()));
        }
        Ok(())
    }

    pub(crate) fn stop_rule(&self) -> StopRule {
        StopRule {
            tolerance: self.tolerance,
            max_sweeps: self.max_sweeps,
        }
    }

    /// The configured grid, or the automatic one from `lambda_max` for a
    /// design with `rows` observations of `predictors` columns.
    pub fn lambda_grid(&self, lambda_max: f64, rows: usize, predictors: usize) -> Vec<f64> {
        match &self.lambdas {
            Some(l) => l.clone(),
            None => {
                let top = if lambda_max > 0.0 { lambda_max } else { 1.0 };
                let ratio = self
                    .lambda_min_ratio
                    .unwrap_or(if rows >= predictors { 1e-4 } else { 1e-2 });
                design::log_grid(top, ratio, self.n_lambdas)
            }
        }
    }

    fn grid_size(&self) -> usize {
        let nl = self.lambdas.as_ref().map_or(self.n_lambdas, Vec::len);
        nl * self.gammas.len()
    }
}

/// Fitted VAR(p): `Y_t = c + sum_k Phi_k Y_{t-k} + e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarFit {
    pub lags: usize,
    pub series: Vec<SeriesId>,
    #[serde(with = "serde_vec")]
    pub intercept: Vector,
    /// `Phi_1 .. Phi_p`, each m x m, row = equation.
    #[serde(with = "serde_rows_vec")]
    pub coefficients: Vec<Matrix>,
    /// Rows `t = p+1..T`, one column per series.
    #[serde(with = "serde_rows")]
    pub residuals: Matrix,
    /// `e'e / (T - p)`.
    #[serde(with = "serde_rows")]
    pub residual_cov: Matrix,
    pub lambda: f64,
    pub gamma: f64,
    pub nonzero: usize,
    pub sweeps: Vec<usize>,
    pub cv: Option<CvTable>,
}

impl VarFit {
    pub fn n_series(&self) -> usize {
        self.intercept.len()
    }

    /// `[c Phi_1 ... Phi_p]`, m x (mp + 1).
    pub fn theta(&self) -> Matrix {
        let m = self.n_series();
        let mut t = Matrix::zeros(m, m * self.lags + 1);
        t.set_column(0, &self.intercept);
        for (k, phi) in self.coefficients.iter().enumerate() {
            t.view_mut((0, 1 + k * m), (m, m)).copy_from(phi);
        }
        t
    }

    /// Builds a fit from given coefficients, computing residuals and their
    /// covariance on `values`.
    pub fn from_parts(
        series: Vec<SeriesId>,
        intercept: Vector,
        coefficients: Vec<Matrix>,
        values: &Matrix,
    ) -> Result<Self> {
        let m = intercept.len();
        let lags = coefficients.len();
        if lags == 0 || coefficients.iter().any(|c| c.shape() != (m, m)) || values.ncols() != m {
            return Err(Error::InvalidArgument("inconsistent VAR dimensions".into()));
        }
        if values.nrows() <= lags {
            return Err(Error::SeriesTooShort { len: values.nrows(), required: lags });
        }
        let residuals = var_residuals(&intercept, &coefficients, values);
        let residual_cov = residuals.tr_mul(&residuals) / residuals.nrows() as f64;
        let nonzero = intercept.iter().chain(coefficients.iter().flat_map(|c| c.iter())).filter(|v| **v != 0.0).count();
        Ok(VarFit {
            lags,
            series,
            intercept,
            coefficients,
            residuals,
            residual_cov,
            lambda: 0.0,
            gamma: 0.0,
            nonzero,
            sweeps: Vec::new(),
            cv: None,
        })
    }

    /// Companion-matrix spectral radius; below one means stable.
    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&linalg::companion(&self.coefficients))
    }

    /// One-step predictions for design rows `x` (lag-major).
    pub fn predict_rows(&self, x: &Matrix) -> Matrix {
        let theta = self.theta();
        let slopes = theta.columns(1, theta.ncols() - 1);
        let mut out = x * slopes.transpose();
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        out
    }
}

/// `Y_t - c - sum_k Phi_k Y_{t-k}` for `t = p..T`.
pub fn var_residuals(intercept: &Vector, coefficients: &[Matrix], values: &Matrix) -> Matrix {
    let p = coefficients.len();
    let m = values.ncols();
    let n = values.nrows() - p;
    let mut out = Matrix::zeros(n, m);
    for r in 0..n {
        let t = r + p;
        for i in 0..m {
            let mut v = values[(t, i)] - intercept[i];
            for (k, phi) in coefficients.iter().enumerate() {
                for j in 0..m {
                    v -= phi[(i, j)] * values[(t - k - 1, j)];
                }
            }
            out[(r, i)] = v;
        }
    }
    out
}

fn check_panel(panel: &PricePanel, lags: usize) -> Result<()> {
    if lags == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    if panel.has_gaps() {
        return Err(Error::InvalidArgument("panel must be gap-free; interpolate first".into()));
    }
    if panel.n_times() <= lags + 5 {
        return Err(Error::SeriesTooShort { len: panel.n_times(), required: lags + 5 });
    }
    Ok(())
}

/// Solved equations on one standardized block at a fixed penalty.
pub(crate) struct EquationSolution {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub sweeps: usize,
    pub max_delta: f64,
    pub converged: bool,
}

pub(crate) fn solve_equation(
    std: &Standardized,
    equation: usize,
    pen: Penalty,
    stop: StopRule,
    warm: Option<&[f64]>,
) -> (EquationSolution, Vec<f64>) {
    let d = std.gram.ncols();
    let mut b = warm.map_or_else(|| vec![0.0; d], <[f64]>::to_vec);
    let zty = std.zty_column(equation);
    let st = solver::solve(&std.gram, &zty, &std.usable, pen, stop, &mut b, None);
    let (intercept, slopes) = std.unscale(&b, equation);
    (
        EquationSolution {
            intercept,
            slopes,
            sweeps: st.sweeps,
            max_delta: st.max_delta,
            converged: st.converged,
        },
        b,
    )
}

/// Row `equation` of `Theta` fitted alone.
pub fn fit_equation(
    panel: &PricePanel,
    lags: usize,
    equation: usize,
    lambda: f64,
    gamma: f64,
    config: &ElasticNetConfig,
) -> Result<Vector> {
    check_panel(panel, lags)?;
    if equation >= panel.n_series() {
        return Err(Error::InvalidArgument(format!("no equation {equation}")));
    }
    let design = LagDesign::new(&panel.values, lags, lags);
    let std = Standardized::new(&design.x, &design.y, design.rows(), config.standardize);
    let (sol, _) = solve_equation(&std, equation, Penalty { lambda, gamma }, config.stop_rule(), None);
    if !sol.converged {
        return Err(Error::NonConvergence { equation, gap: sol.max_delta, sweeps: sol.sweeps });
    }
    let mut row = Vector::zeros(sol.slopes.len() + 1);
    row[0] = sol.intercept;
    for (k, s) in sol.slopes.iter().enumerate() {
        row[k + 1] = *s;
    }
    Ok(row)
}

/// Fits every equation at `(lambda, gamma)`.
pub fn fit_var_at(
    panel: &PricePanel,
    lags: usize,
    lambda: f64,
    gamma: f64,
    config: &ElasticNetConfig,
) -> Result<VarFit> {
    check_panel(panel, lags)?;
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument("lambda must be >= 0 and gamma in [0, 1]".into()));
    }
    let design = LagDesign::new(&panel.values, lags, lags);
    let std = Standardized::new(&design.x, &design.y, design.rows(), config.standardize);
    fit_standardized(panel, lags, &std, Penalty { lambda, gamma }, config)
}

fn fit_standardized(
    panel: &PricePanel,
    lags: usize,
    std: &Standardized,
    pen: Penalty,
    config: &ElasticNetConfig,
) -> Result<VarFit> {
    let m = panel.n_series();
    let stop = config.stop_rule();
    let sols = par::map_indexed(m, |i| solve_equation(std, i, pen, stop, None).0);
    if let Some((i, worst)) = sols
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.converged)
        .max_by(|a, b| a.1.max_delta.total_cmp(&b.1.max_delta))
    {
        return Err(Error::NonConvergence { equation: i, gap: worst.max_delta, sweeps: worst.sweeps });
    }
    let intercept = Vector::from_iterator(m, sols.iter().map(|s| s.intercept));
    let coefficients: Vec<Matrix> = (0..lags)
        .map(|k| Matrix::from_fn(m, m, |i, j| sols[i].slopes[k * m + j]))
        .collect();
    let mut fit = VarFit::from_parts(panel.series.clone(), intercept, coefficients, &panel.values)?;
    fit.lambda = pen.lambda;
    fit.gamma = pen.gamma;
    fit.sweeps = sols.iter().map(|s| s.sweeps).collect();
    Ok(fit)
}

/// Cross-validates `(lambda, gamma)` when the grid has more than one point,
/// then fits the full sample at the chosen pair.
pub fn fit_var(panel: &PricePanel, lags: usize, config: &ElasticNetConfig) -> Result<VarFit> {
    config.validate()?;
    check_panel(panel, lags)?;
    if config.grid_size() == 1 {
        let lambda = match &config.lambdas {
            Some(l) => l[0],
            None => {
                let design = LagDesign::new(&panel.values, lags, lags);
                Standardized::new(&design.x, &design.y, design.rows(), config.standardize).lambda_max()
            }
        };
        return fit_var_at(panel, lags, lambda, config.gammas[0], config);
    }
    let cv = cross_validate(panel, lags, config)?;
    let mut fit = fit_var_at(panel, lags, cv.lambda, cv.gamma, config)?;
    fit.cv = Some(cv.table);
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub lag: usize,
    /// AIC for `p = 1..=max_p`; `None` where some equation did not converge
    /// or the residual covariance was singular.
    pub aic: Vec<Option<f64>>,
    pub nonzero: Vec<usize>,
}

/// Multivariate AIC `ln det Sigma(p) + 2 nnz(Theta) / n` over `p = 1..=max_p`
/// on the common sample `t > max_p`, each fit at the light penalty
/// `lag_lambda_ratio * lambda_max(p)`. Ties go to the smaller `p`.
pub fn select_lag(panel: &PricePanel, max_p: usize, config: &ElasticNetConfig) -> Result<LagSelection> {
    if max_p < 1 {
        return Err(Error::InvalidArgument("max lag must be at least 1".into()));
    }
    check_panel(panel, max_p)?;
    if panel.n_times() <= max_p + 20 {
        return Err(Error::SeriesTooShort { len: panel.n_times(), required: max_p + 20 });
    }
    let m = panel.n_series();
    let stop = config.stop_rule();
    let mut aic = Vec::with_capacity(max_p);
    let mut nonzero = Vec::with_capacity(max_p);
    for p in 1..=max_p {
        let design = LagDesign::new(&panel.values, p, max_p);
        let n = design.rows();
        let std = Standardized::new(&design.x, &design.y, n, config.standardize);
        let pen = Penalty { lambda: config.lag_lambda_ratio * std.lambda_max(), gamma: config.lag_gamma };
        let sols = par::map_indexed(m, |i| solve_equation(&std, i, pen, stop, None).0);
        if let Some((i, s)) = sols.iter().enumerate().find(|(_, s)| !s.converged) {
            log::warn!(
                "lag selection: p = {p} excluded, equation {i} did not converge (max change {:e} after {} sweeps)",
                s.max_delta,
                s.sweeps
            );
            aic.push(None);
            nonzero.push(0);
            continue;
        }
        let mut resid = design.y.clone();
        for (i, s) in sols.iter().enumerate() {
            for r in 0..n {
                let mut v = s.intercept;
                for (j, b) in s.slopes.iter().enumerate() {
                    v += b * design.x[(r, j)];
                }
                resid[(r, i)] -= v;
            }
        }
        let cov = resid.tr_mul(&resid) / n as f64;
        let nnz: usize = sols
            .iter()
            .map(|s| usize::from(s.intercept != 0.0) + s.slopes.iter().filter(|b| **b != 0.0).count())
            .sum();
        nonzero.push(nnz);
        aic.push(cov.cholesky().map(|c| {
            let logdet: f64 = 2.0 * c.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
            logdet + 2.0 * nnz as f64 / n as f64
        }));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, a) in aic.iter().enumerate() {
        if let Some(a) = a {
            if best.is_none_or(|(_, b)| *a < b) {
                best = Some((k + 1, *a));
            }
        }
    }
    let lag = best
        .map(|(p, _)| p)
        .ok_or_else(|| Error::InvalidArgument(String::from("no lag order converged with a nonsingular residual covariance")))?;
    Ok(LagSelection { lag, aic, nonzero })
}
