//! Residual bootstrap for joint impulse responses.
//!
//! Each replicate centers the fitted residuals, draws whole residual rows
//! with replacement, rebuilds a synthetic panel from the first `p`
//! observations, refits at the selected `(lambda, gamma)` and recomputes the
//! response. Replicate `b` uses its own ChaCha stream of the master seed,
//! so results do not depend on scheduling.

use alloc::format;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jirf::{compute_jirf, shock_magnitudes, to_vma, ShockScenario};
use crate::linalg::{serde_rows, serde_rows_vec, Matrix};
use crate::panel::{PricePanel, SeriesId};
use crate::par;
use crate::stats;
use crate::varnet::{fit_var, fit_var_at, ElasticNetConfig, VarFit};

/// How each replicate re-estimates the VAR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitMode {
    /// Reuse the `(lambda, gamma)` selected for the original fit.
    #[default]
    Fixed,
    /// Re-run cross-validation on every synthetic panel.
    CrossValidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub seed: u64,
    pub confidence: f64,
    pub refit: RefitMode,
    /// Recompute data-derived shock magnitudes on each synthetic panel.
    pub recompute_shocks: bool,
    pub keep_draws: bool,
    /// Largest tolerated fraction of failed replicates.
    pub max_drop_fraction: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            replicates: 500,
            seed: 0,
            confidence: 0.95,
            refit: RefitMode::Fixed,
            recompute_shocks: true,
            keep_draws: false,
            max_drop_fraction: 0.1,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidArgument("need at least 2 bootstrap replicates".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence {} not in (0, 1)", self.confidence)));
        }
        if !(0.0..1.0).contains(&self.max_drop_fraction) {
            return Err(Error::InvalidArgument("max drop fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Summary of the bootstrap draws, each matrix indexed `[horizon, series]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JirfDistribution {
    pub series: Vec<SeriesId>,
    pub confidence: f64,
    pub replicates: usize,
    pub dropped: usize,
    #[serde(with = "serde_rows")]
    pub mean: Matrix,
    #[serde(with = "serde_rows")]
    pub lower: Matrix,
    #[serde(with = "serde_rows")]
    pub upper: Matrix,
    /// Monte Carlo standard error of `mean`.
    #[serde(with = "serde_rows")]
    pub std_error: Matrix,
    /// `lower > 0 || upper < 0`, row-major like the other matrices.
    pub significant: Vec<Vec<bool>>,
    #[serde(with = "serde_rows_vec")]
    pub draws: Vec<Matrix>,
}

/// Per-replicate generator: stream `replicate` of the master seed.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Synthetic panel with the same dates, series and period tags as `panel`.
pub fn resample_series<R: Rng + ?Sized>(fit: &VarFit, panel: &PricePanel, rng: &mut R) -> Result<PricePanel> {
    let m = fit.n_series();
    let p = fit.lags;
    let t_len = panel.n_times();
    let n = fit.residuals.nrows();
    if panel.n_series() != m || n != t_len.saturating_sub(p) || n == 0 {
        return Err(Error::InvalidArgument("panel does not match the fitted model".into()));
    }
    let mut centered = fit.residuals.clone();
    for j in 0..m {
        let mu = centered.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-mu);
    }
    let mut y = Matrix::zeros(t_len, m);
    y.rows_mut(0, p).copy_from(&panel.values.rows(0, p));
    for t in p..t_len {
        let draw = rng.random_range(0..n);
        for i in 0..m {
            let mut v = fit.intercept[i] + centered[(draw, i)];
            for (k, phi) in fit.coefficients.iter().enumerate() {
                for j in 0..m {
                    v += phi[(i, j)] * y[(t - k - 1, j)];
                }
            }
            y[(t, i)] = v;
        }
    }
    let mut out = panel.clone();
    out.values = y;
    out.missing.fill(false);
    Ok(out)
}

fn replicate(
    fit: &VarFit,
    panel: &PricePanel,
    scenarios: &[ShockScenario],
    spec: &BootstrapSpec,
    config: &ElasticNetConfig,
    b: usize,
) -> Result<Vec<Matrix>> {
    let mut rng = replicate_rng(spec.seed, b);
    let synthetic = resample_series(fit, panel, &mut rng)?;
    let refit = match spec.refit {
        RefitMode::Fixed => fit_var_at(&synthetic, fit.lags, fit.lambda, fit.gamma, config)?,
        RefitMode::CrossValidate => fit_var(&synthetic, fit.lags, config)?,
    };
    let horizon = scenarios.iter().map(|s| s.horizon).max().unwrap_or(0);
    let vma = to_vma(&refit.coefficients, horizon)?;
    scenarios
        .iter()
        .map(|scenario| {
            let mut sc = scenario.clone();
            if spec.recompute_shocks {
                sc.magnitudes = shock_magnitudes(&synthetic, Some(&refit.residual_cov), &sc.indices, &sc.source)?;
            }
            Ok(compute_jirf(&vma, &refit.residual_cov, &refit.series, &sc)?.responses)
        })
        .collect()
}

/// Bootstraps the JIRF of `scenario` for a model fitted on `panel`.
pub fn bootstrap_jirf(
    fit: &VarFit,
    panel: &PricePanel,
    scenario: &ShockScenario,
    spec: &BootstrapSpec,
    config: &ElasticNetConfig,
) -> Result<JirfDistribution> {
    let mut all = bootstrap_jirfs(fit, panel, core::slice::from_ref(scenario), spec, config)?;
    Ok(all.remove(0))
}

/// Several scenarios sharing the same replicate refits. A replicate that
/// fails for any scenario is dropped for all of them.
pub fn bootstrap_jirfs(
    fit: &VarFit,
    panel: &PricePanel,
    scenarios: &[ShockScenario],
    spec: &BootstrapSpec,
    config: &ElasticNetConfig,
) -> Result<Vec<JirfDistribution>> {
    spec.validate()?;
    if scenarios.is_empty() {
        return Err(Error::EmptyScenario);
    }
    let outcomes = par::map_indexed(spec.replicates, |b| replicate(fit, panel, scenarios, spec, config, b));
    let mut draws: Vec<Vec<Matrix>> = scenarios.iter().map(|_| Vec::with_capacity(spec.replicates)).collect();
    let mut dropped = 0;
    for (b, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(per_scenario) => {
                for (d, r) in draws.iter_mut().zip(per_scenario) {
                    d.push(r);
                }
            }
            Err(e) => {
                log::warn!("bootstrap replicate {b} dropped: {e}");
                dropped += 1;
            }
        }
    }
    let kept = spec.replicates - dropped;
    if dropped as f64 > spec.max_drop_fraction * spec.replicates as f64 || kept < 2 {
        return Err(Error::TooManyDroppedReplicates { dropped, total: spec.replicates });
    }
    Ok(draws
        .into_iter()
        .map(|d| {
            let mut dist = summarize(&d, &fit.series, spec.confidence);
            dist.dropped = dropped;
            if spec.keep_draws {
                dist.draws = d;
            }
            dist
        })
        .collect())
}

/// Percentile summary of replicate response matrices.
pub fn summarize(draws: &[Matrix], series: &[SeriesId], confidence: f64) -> JirfDistribution {
    let (rows, cols) = draws[0].shape();
    let alpha = 1.0 - confidence;
    let mut mean = Matrix::zeros(rows, cols);
    let mut lower = Matrix::zeros(rows, cols);
    let mut upper = Matrix::zeros(rows, cols);
    let mut std_error = Matrix::zeros(rows, cols);
    let mut significant = Vec::with_capacity(rows);
    let mut cell = Vec::with_capacity(draws.len());
    let nb = draws.len() as f64;
    for h in 0..rows {
        let mut flags = Vec::with_capacity(cols);
        for j in 0..cols {
            cell.clear();
            cell.extend(draws.iter().map(|d| d[(h, j)]));
            mean[(h, j)] = stats::mean(&cell);
            std_error[(h, j)] = stats::sample_std(&cell) / libm::sqrt(nb);
            cell.sort_by(f64::total_cmp);
            lower[(h, j)] = stats::quantile_sorted(&cell, alpha / 2.0);
            upper[(h, j)] = stats::quantile_sorted(&cell, 1.0 - alpha / 2.0);
            flags.push(lower[(h, j)] > 0.0 || upper[(h, j)] < 0.0);
        }
        significant.push(flags);
    }
    JirfDistribution {
        series: series.to_vec(),
        confidence,
        replicates: draws.len(),
        dropped: 0,
        mean,
        lower,
        upper,
        std_error,
        significant,
        draws: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use alloc::vec;

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = replicate_rng(7, 3).random();
        let _: u64 = replicate_rng(7, 2).random();
        let b: u64 = replicate_rng(7, 3).random();
        assert_eq!(a, b);
        let c: u64 = replicate_rng(7, 4).random();
        assert_ne!(a, c);
    }

    #[test]
    fn resample_keeps_initial_rows_and_dynamics() {
        let values = Matrix::from_fn(30, 2, |t, j| libm::sin((t * (j + 2)) as f64));
        let panel = crate::simulate::panel_from_values(values);
        let phi = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let mut fit = VarFit::from_parts(panel.series.clone(), Vector::zeros(2), vec![phi.clone()], &panel.values).unwrap();
        fit.residuals.fill(0.25);
        let syn = resample_series(&fit, &panel, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(syn.values.row(0), panel.values.row(0));
        for t in 1..30 {
            let expect = &phi * syn.values.row(t - 1).transpose();
            assert!((syn.values.row(t).transpose() - expect).abs().max() < 1e-15);
        }
    }

    #[test]
    fn percentile_summary() {
        let series = vec![SeriesId::new("a", "b")];
        let draws: Vec<Matrix> = (1..=5).map(|k| Matrix::from_element(1, 1, k as f64)).collect();
        let d = summarize(&draws, &series, 0.5);
        assert_eq!(d.mean[(0, 0)], 3.0);
        assert_eq!(d.lower[(0, 0)], 2.0);
        assert_eq!(d.upper[(0, 0)], 4.0);
        assert!(d.significant[0][0]);
    }

    #[test]
    fn spec_validation() {
        assert!(BootstrapSpec::default().validate().is_ok());
        assert!(BootstrapSpec { confidence: 1.0, ..Default::default() }.validate().is_err());
        assert!(BootstrapSpec { replicates: 1, ..Default::default() }.validate().is_err());
    }
}
