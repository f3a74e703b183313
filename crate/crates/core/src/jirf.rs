//! Moving-average form and joint impulse responses.
//!
//! For a shock vector `s` on the subset selected by `E` (m x k), the
//! response at horizon `H` is `A_H Sigma E (E' Sigma E)^{-1} s`, where the
//! `A_H` are the VMA coefficients (`A_0 = I`). With a single shocked series
//! this reduces to the generalized impulse response scaled by `s`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::bootstrap::JirfDistribution;
use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows, serde_rows_vec, serde_vec, Matrix, Vector};
use crate::panel::{PricePanel, SeriesId};
use crate::stats;
use crate::varnet::VarFit;

/// Sub-covariances with a larger condition number are rejected.
pub const MAX_SHOCK_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaForm {
    /// `A_0 .. A_H`.
    #[serde(with = "serde_rows_vec")]
    pub matrices: Vec<Matrix>,
}

impl VmaForm {
    pub fn horizon(&self) -> usize {
        self.matrices.len() - 1
    }
}

/// `A_0 = I`, `A_h = sum_{j=1}^{min(h,p)} Phi_j A_{h-j}`.
pub fn to_vma(phis: &[Matrix], horizon: usize) -> Result<VmaForm> {
    let m = phis.first().map(Matrix::nrows).ok_or_else(|| Error::InvalidArgument("no lag matrices".into()))?;
    if phis.iter().any(|p| p.shape() != (m, m)) {
        return Err(Error::InvalidArgument("lag matrices must be square and equal-sized".into()));
    }
    let mut a = Vec::with_capacity(horizon + 1);
    a.push(Matrix::identity(m, m));
    for h in 1..=horizon {
        let mut next = Matrix::zeros(m, m);
        for (j, phi) in phis.iter().enumerate().take(h) {
            next.gemm(1.0, phi, &a[h - j - 1], 1.0);
        }
        a.push(next);
    }
    Ok(VmaForm { matrices: a })
}

/// Where shock magnitudes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShockSource {
    /// One population standard deviation of each shocked series over the
    /// named period (the whole panel when `None`).
    SeriesStd { period: Option<String> },
    /// Square root of the residual variance of each shocked equation.
    ResidualStd,
    /// Explicit magnitudes, one per shocked series.
    User { magnitudes: Vec<f64> },
}

impl Default for ShockSource {
    fn default() -> Self {
        ShockSource::SeriesStd { period: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockScenario {
    pub series: Vec<SeriesId>,
    pub indices: Vec<usize>,
    pub magnitudes: Vec<f64>,
    pub source: ShockSource,
    pub horizon: usize,
}

impl ShockScenario {
    /// Scenario with explicit magnitudes over columns of a system with the
    /// given series.
    pub fn user(all: &[SeriesId], indices: &[usize], magnitudes: &[f64], horizon: usize) -> Result<Self> {
        check_subset(all.len(), indices)?;
        if magnitudes.len() != indices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} magnitudes for {} shocked series",
                magnitudes.len(),
                indices.len()
            )));
        }
        Ok(ShockScenario {
            series: indices.iter().map(|i| all[*i].clone()).collect(),
            indices: indices.to_vec(),
            magnitudes: magnitudes.to_vec(),
            source: ShockSource::User { magnitudes: magnitudes.to_vec() },
            horizon,
        })
    }

    /// The m x k selector `E`.
    pub fn selector(&self, m: usize) -> Matrix {
        let mut e = Matrix::zeros(m, self.indices.len());
        for (c, i) in self.indices.iter().enumerate() {
            e[(*i, c)] = 1.0;
        }
        e
    }

    pub fn labels(&self) -> Vec<String> {
        self.series.iter().map(SeriesId::label).collect()
    }
}

fn check_subset(m: usize, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::EmptyScenario);
    }
    for (k, i) in indices.iter().enumerate() {
        if *i >= m {
            return Err(Error::InvalidArgument(format!("series index {i} out of range")));
        }
        if indices[..k].contains(i) {
            return Err(Error::InvalidArgument(format!("series index {i} shocked twice")));
        }
    }
    Ok(())
}

/// Magnitudes from `source` for the given columns of `panel`.
pub fn shock_magnitudes(
    panel: &PricePanel,
    residual_cov: Option<&Matrix>,
    indices: &[usize],
    source: &ShockSource,
) -> Result<Vec<f64>> {
    match source {
        ShockSource::SeriesStd { period } => {
            let rows = match period {
                Some(name) => {
                    let p = panel.period(name)?;
                    p.start..p.end
                }
                None => 0..panel.n_times(),
            };
            Ok(indices
                .iter()
                .map(|j| {
                    let col: Vec<f64> = rows.clone().map(|t| panel.values[(t, *j)]).collect();
                    let sd = stats::pop_std(&col);
                    if sd == 0.0 {
                        log::warn!("series {} has zero variance; its shock is 0", panel.series[*j]);
                    }
                    sd
                })
                .collect())
        }
        ShockSource::ResidualStd => {
            let cov = residual_cov.ok_or_else(|| Error::InvalidArgument("residual-std shocks need a fitted model".into()))?;
            Ok(indices.iter().map(|j| libm::sqrt(cov[(*j, *j)])).collect())
        }
        ShockSource::User { magnitudes } => {
            if magnitudes.len() != indices.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} magnitudes for {} shocked series",
                    magnitudes.len(),
                    indices.len()
                )));
            }
            Ok(magnitudes.clone())
        }
    }
}

/// Resolves series labels against `panel` and computes magnitudes.
pub fn build_shock(
    panel: &PricePanel,
    fit: Option<&VarFit>,
    labels: &[String],
    source: ShockSource,
    horizon: usize,
) -> Result<ShockScenario> {
    if labels.is_empty() {
        return Err(Error::EmptyScenario);
    }
    let indices = labels.iter().map(|l| panel.index_of_label(l)).collect::<Result<Vec<_>>>()?;
    check_subset(panel.n_series(), &indices)?;
    let magnitudes = shock_magnitudes(panel, fit.map(|f| &f.residual_cov), &indices, &source)?;
    Ok(ShockScenario {
        series: indices.iter().map(|i| panel.series[*i].clone()).collect(),
        indices,
        magnitudes,
        source,
        horizon,
    })
}

/// `Sigma E (E' Sigma E)^{-1} s`: the contemporaneous response.
pub fn impact_vector(sigma: &Matrix, scenario: &ShockScenario) -> Result<Vector> {
    let m = sigma.nrows();
    check_subset(m, &scenario.indices)?;
    if scenario.magnitudes.len() != scenario.indices.len() {
        return Err(Error::InvalidArgument("magnitudes do not match shocked series".into()));
    }
    let e = scenario.selector(m);
    let sigma_e = sigma * &e;
    let sub = e.tr_mul(&sigma_e);
    let inv = linalg::spd_inverse(&sub, MAX_SHOCK_CONDITION)
        .ok_or_else(|| Error::DegenerateShock { subset: scenario.labels() })?;
    let s = Vector::from_column_slice(&scenario.magnitudes);
    if scenario.indices.len() == m {
        // E is a permutation, so Sigma E (E' Sigma E)^-1 s collapses to E s
        return Ok(e * s);
    }
    Ok(sigma_e * (inv * s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JirfResult {
    pub series: Vec<SeriesId>,
    pub scenario: ShockScenario,
    #[serde(with = "serde_vec")]
    pub impact: Vector,
    /// Row `h` is the response at horizon `h`, one column per series.
    #[serde(with = "serde_rows")]
    pub responses: Matrix,
    pub bootstrap: Option<JirfDistribution>,
}

impl JirfResult {
    pub fn horizon(&self) -> usize {
        self.responses.nrows() - 1
    }
}

/// Responses at horizons `0..=scenario.horizon`.
pub fn compute_jirf(vma: &VmaForm, sigma: &Matrix, series: &[SeriesId], scenario: &ShockScenario) -> Result<JirfResult> {
    if scenario.horizon > vma.horizon() {
        return Err(Error::InvalidArgument(format!(
            "horizon {} exceeds the VMA horizon {}",
            scenario.horizon,
            vma.horizon()
        )));
    }
    let m = sigma.nrows();
    if sigma.ncols() != m || vma.matrices[0].nrows() != m || series.len() != m {
        return Err(Error::InvalidArgument("covariance, VMA and series disagree in dimension".into()));
    }
    let impact = impact_vector(sigma, scenario)?;
    let mut responses = Matrix::zeros(scenario.horizon + 1, m);
    for (h, a) in vma.matrices.iter().take(scenario.horizon + 1).enumerate() {
        responses.set_row(h, &(a * &impact).transpose());
    }
    Ok(JirfResult { series: series.to_vec(), scenario: scenario.clone(), impact, responses, bootstrap: None })
}

/// Point JIRF for a fitted model.
pub fn jirf_for_fit(fit: &VarFit, scenario: &ShockScenario) -> Result<JirfResult> {
    let vma = to_vma(&fit.coefficients, scenario.horizon)?;
    compute_jirf(&vma, &fit.residual_cov, &fit.series, scenario)
}
