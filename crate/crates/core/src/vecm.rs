//! Error-correction view of a fitted VAR and the effective-rank screen.
//!
//! `dY_t = c + Pi Y_{t-1} + sum_{i<p} Gamma_i dY_{t-i} + e_t` with
//! `Pi = sum_k Phi_k - I` and `Gamma_i = -sum_{j>i} Phi_j`. The factors of
//! `Pi` are deliberately not estimated.
//!
//! Effective rank is `exp(-sum p_k ln p_k)` with `p_k = sigma_k / ||sigma||_1`
//! over the singular values of the matrix.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{serde_rows, serde_rows_vec, serde_vec, Matrix, Vector};
use crate::panel::SeriesId;
use crate::varnet::VarFit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecmView {
    pub lags: usize,
    pub series: Vec<SeriesId>,
    #[serde(with = "serde_vec")]
    pub intercept: Vector,
    #[serde(with = "serde_rows")]
    pub pi: Matrix,
    /// `Gamma_1 .. Gamma_{p-1}`.
    #[serde(with = "serde_rows_vec")]
    pub gammas: Vec<Matrix>,
}

pub fn to_vecm(fit: &VarFit) -> Result<VecmView> {
    let m = fit.n_series();
    let p = fit.lags;
    if p == 0 || fit.coefficients.len() != p || fit.coefficients.iter().any(|c| c.shape() != (m, m)) {
        return Err(Error::InvalidArgument("malformed VAR fit".into()));
    }
    let mut pi = -Matrix::identity(m, m);
    for phi in &fit.coefficients {
        pi += phi;
    }
    let gammas = (1..p)
        .map(|i| {
            let mut g = Matrix::zeros(m, m);
            for phi in &fit.coefficients[i..] {
                g -= phi;
            }
            g
        })
        .collect();
    Ok(VecmView {
        lags: p,
        series: fit.series.clone(),
        intercept: fit.intercept.clone(),
        pi,
        gammas,
    })
}

impl VecmView {
    /// Level-VAR coefficients: `Phi_1 = Pi + I + Gamma_1`,
    /// `Phi_i = Gamma_i - Gamma_{i-1}`, `Phi_p = -Gamma_{p-1}`.
    pub fn to_levels(&self) -> Vec<Matrix> {
        let m = self.pi.nrows();
        let p = self.lags;
        let zero = Matrix::zeros(m, m);
        let gamma = |i: usize| -> &Matrix {
            if i >= 1 && i < p {
                &self.gammas[i - 1]
            } else {
                &zero
            }
        };
        (1..=p)
            .map(|k| {
                if k == 1 {
                    &self.pi + Matrix::identity(m, m) + gamma(1)
                } else {
                    gamma(k) - gamma(k - 1)
                }
            })
            .collect()
    }

    /// `Pi` or `Gamma_k` by label (`"pi"`, `"gamma1"`, ...).
    pub fn matrix(&self, label: &str) -> Result<&Matrix> {
        let lower = label.to_ascii_lowercase();
        if lower == "pi" {
            return Ok(&self.pi);
        }
        lower
            .strip_prefix("gamma")
            .and_then(|k| k.parse::<usize>().ok())
            .and_then(|k| k.checked_sub(1))
            .and_then(|k| self.gammas.get(k))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown matrix label `{label}`")))
    }
}

/// Default margin for the reduced-rank flags.
pub const DEFAULT_FLAG_TOLERANCE: f64 = 0.5;
/// Singular values below this fraction of the largest count as zero.
const ZERO_SINGULAR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRankReport {
    pub label: String,
    pub period: String,
    pub dimension: usize,
    pub singular_values: Vec<f64>,
    pub weights: Vec<f64>,
    pub erank: f64,
    pub flag_tolerance: f64,
    /// `erank > 1 + tol`.
    pub above_one: bool,
    /// `erank < m - tol`.
    pub below_full: bool,
}

pub fn effective_rank(matrix: &Matrix) -> Result<EffectiveRankReport> {
    effective_rank_labeled(matrix, "", "", DEFAULT_FLAG_TOLERANCE)
}

pub fn effective_rank_labeled(
    matrix: &Matrix,
    label: &str,
    period: &str,
    flag_tolerance: f64,
) -> Result<EffectiveRankReport> {
    if matrix.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let mut sv: Vec<f64> = matrix.clone().singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv[0];
    for s in sv.iter_mut() {
        if *s < ZERO_SINGULAR * top {
            *s = 0.0;
        }
    }
    let total: f64 = sv.iter().sum();
    let weights: Vec<f64> = sv.iter().map(|s| s / total).collect();
    let entropy: f64 = -weights
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * libm::log(*p))
        .sum::<f64>();
    let erank = libm::exp(entropy);
    let m = matrix.nrows().min(matrix.ncols());
    Ok(EffectiveRankReport {
        label: label.into(),
        period: period.into(),
        dimension: m,
        singular_values: sv,
        weights,
        erank,
        flag_tolerance,
        above_one: erank > 1.0 + flag_tolerance,
        below_full: erank < m as f64 - flag_tolerance,
    })
}

/// Effective ranks of `Pi` per period for the full system and for each
/// single-commodity sub-system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub periods: Vec<String>,
    pub commodities: Vec<String>,
    /// `by_commodity[c][p]`.
    pub by_commodity: Vec<Vec<EffectiveRankReport>>,
    pub full: Vec<EffectiveRankReport>,
}

/// Builds the table from `Pi` matrices keyed by period (full system) and
/// by `(commodity, period)` (sub-systems).
pub fn rank_report(
    periods: &[String],
    commodities: &[String],
    full: &BTreeMap<String, Matrix>,
    sub: &BTreeMap<(String, String), Matrix>,
    flag_tolerance: f64,
) -> Result<RankTable> {
    let mut full_reports = Vec::with_capacity(periods.len());
    for p in periods {
        let pi = full
            .get(p)
            .ok_or_else(|| Error::InvalidArgument(format!("missing full-system slice for period {p}")))?;
        full_reports.push(
            effective_rank_labeled(pi, "all", p, flag_tolerance).map_err(|e| e.context(format!("period {p}")))?,
        );
    }
    let mut by_commodity = Vec::with_capacity(commodities.len());
    for c in commodities {
        let mut row = Vec::with_capacity(periods.len());
        for p in periods {
            let pi = sub.get(&(c.clone(), p.clone())).ok_or_else(|| {
                Error::InvalidArgument(format!("missing slice for commodity {c}, period {p}"))
            })?;
            row.push(
                effective_rank_labeled(pi, c, p, flag_tolerance)
                    .map_err(|e| e.context(format!("commodity {c}, period {p}")))?,
            );
        }
        by_commodity.push(row);
    }
    Ok(RankTable {
        periods: periods.to_vec(),
        commodities: commodities.to_vec(),
        by_commodity,
        full: full_reports,
    })
}

impl RankTable {
    /// Plain-text layout: one row per commodity, their sum, then the full
    /// system.
    pub fn to_text(&self) -> String {
        let width = 10;
        let label_w = self
            .commodities
            .iter()
            .map(String::len)
            .chain([13])
            .max()
            .unwrap_or(13);
        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for p in &self.periods {
            let _ = write!(out, "{p:>width$}");
        }
        out.push('\n');
        let rule = "-".repeat(label_w + width * self.periods.len());
        out.push_str(&rule);
        out.push('\n');
        for (c, row) in self.commodities.iter().zip(&self.by_commodity) {
            let _ = write!(out, "{c:label_w$}");
            for r in row {
                let _ = write!(out, "{:>width$.2}", r.erank);
            }
            out.push('\n');
        }
        if !self.commodities.is_empty() {
            out.push_str(&rule);
            out.push('\n');
            let _ = write!(out, "{:label_w$}", "Sum");
            for k in 0..self.periods.len() {
                let s: f64 = self.by_commodity.iter().map(|row| row[k].erank).sum();
                let _ = write!(out, "{s:>width$.2}");
            }
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
        let _ = write!(out, "{:label_w$}", "Full system");
        for r in &self.full {
            let _ = write!(out, "{:>width$.2}", r.erank);
        }
        out.push('\n');
        out
    }
}
