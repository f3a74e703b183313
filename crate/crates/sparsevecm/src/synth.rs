//! Synthetic price panels from a cointegrated VECM(2).
//!
//! Each non-trend series shares a stochastic trend with one trend series
//! (`y_i - y_t` is stationary), so the long-run matrix
//! `Pi = -a B B'` has exactly the requested rank. Short-run dynamics
//! `Gamma_1` are diagonal plus a sparse set of small cross effects. The
//! log real prices are then inflated by a drifting CPI and reported with
//! optional gaps.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sparsevecm_core::linalg::{companion, serde_rows};
use sparsevecm_core::panel::{Month, PeriodSpec};
use sparsevecm_core::simulate::{self, standard_normal, SimRng};
use sparsevecm_core::RawObservation;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub commodities: usize,
    pub regions: usize,
    pub weeks: usize,
    /// Cointegration rank; defaults to one stochastic trend per commodity.
    pub rank: Option<usize>,
    /// Share of off-diagonal short-run coefficients that are zero.
    pub sparsity: f64,
    pub seed: u64,
    /// Probability that a weekly report is missing.
    pub missing: f64,
    /// Reports per (week, region, commodity) before averaging.
    pub reports_per_week: usize,
    /// Innovation standard deviation on the log scale.
    pub noise: f64,
    /// Monthly CPI growth.
    pub inflation: f64,
    pub start: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            commodities: 3,
            regions: 4,
            weeks: 300,
            rank: None,
            sparsity: 0.8,
            seed: 1,
            missing: 0.02,
            reports_per_week: 2,
            noise: 0.02,
            inflation: 0.002,
            start: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
        }
    }
}

/// Parameters of the generating process, for comparison with estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub series: Vec<String>,
    pub rank: usize,
    /// Series carrying the stochastic trends.
    pub trends: Vec<String>,
    #[serde(with = "serde_rows")]
    pub pi: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub gamma: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub sigma: DMatrix<f64>,
}

pub struct SynthData {
    pub prices: Vec<RawObservation>,
    pub cpi: BTreeMap<Month, f64>,
    pub truth: SynthTruth,
    /// Three equal consecutive periods covering the sample.
    pub periods: Vec<PeriodSpec>,
}

pub fn commodity_names(n: usize) -> Vec<String> {
    const NAMED: [&str; 3] = ["piglet", "hog", "pork"];
    if n <= NAMED.len() {
        NAMED[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|k| format!("c{k:02}")).collect()
    }
}

pub fn region_names(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("R{k:02}")).collect()
}

impl SynthSpec {
    pub fn series_count(&self) -> usize {
        self.commodities * self.regions
    }

    fn validate(&self) -> AppResult<usize> {
        let m = self.series_count();
        if m < 2 || self.weeks < 30 {
            return Err(AppError::Config("synthetic panel needs m >= 2 series and at least 30 weeks".into()));
        }
        let rank = self.rank.unwrap_or(m - self.commodities.min(m - 1).max(1));
        if rank >= m {
            return Err(AppError::Config(format!("rank {rank} must be below m = {m}")));
        }
        if !(0.0..=1.0).contains(&self.sparsity) || !(0.0..0.5).contains(&self.missing) {
            return Err(AppError::Config("sparsity must be in [0, 1] and missing in [0, 0.5)".into()));
        }
        if self.reports_per_week == 0 || !(self.noise > 0.0) {
            return Err(AppError::Config("reports per week and noise must be positive".into()));
        }
        Ok(rank)
    }
}

/// Trend series: commodity leaders (first region) first, then further
/// regions round-robin across commodities.
fn trend_indices(spec: &SynthSpec, count: usize) -> Vec<usize> {
    let (c, r) = (spec.commodities, spec.regions);
    let mut order = Vec::with_capacity(c * r);
    for j in 0..r {
        for k in 0..c {
            order.push(k * r + j);
        }
    }
    let mut trends: Vec<usize> = order.into_iter().take(count).collect();
    trends.sort_unstable();
    trends
}

fn long_run(spec: &SynthSpec, rank: usize, rng: &mut SimRng) -> (DMatrix<f64>, Vec<usize>) {
    let m = spec.series_count();
    let trends = trend_indices(spec, m - rank);
    let tied: Vec<usize> = (0..m).filter(|i| !trends.contains(i)).collect();
    let mut beta = DMatrix::zeros(m, rank);
    for (col, &i) in tied.iter().enumerate() {
        let block = i / spec.regions;
        let same: Vec<usize> = trends.iter().copied().filter(|t| t / spec.regions == block).collect();
        let pool = if same.is_empty() { &trends } else { &same };
        let t = pool[rng.random_range(0..pool.len())];
        beta[(i, col)] = 1.0;
        beta[(t, col)] = -1.0;
    }
    let btb = beta.tr_mul(&beta);
    let top = btb.symmetric_eigenvalues().max();
    let a = 0.3 / top;
    (-(&beta * beta.transpose()) * a, trends)
}

fn short_run(spec: &SynthSpec, rng: &mut SimRng) -> DMatrix<f64> {
    let m = spec.series_count();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.2
        } else if rng.random::<f64>() >= spec.sparsity {
            (rng.random::<f64>() - 0.5) * 0.2
        } else {
            0.0
        }
    })
}

fn within_commodity_cov(spec: &SynthSpec) -> DMatrix<f64> {
    let m = spec.series_count();
    let v = spec.noise * spec.noise;
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            v
        } else if i / spec.regions == j / spec.regions {
            0.4 * v
        } else {
            0.1 * v
        }
    })
}

fn explosive(phis: &[DMatrix<f64>]) -> bool {
    companion(phis).complex_eigenvalues().iter().any(|z| z.norm() > 1.0 + 1e-8)
}

pub fn generate(spec: &SynthSpec) -> AppResult<SynthData> {
    let rank = spec.validate()?;
    let m = spec.series_count();
    let mut rng = simulate::rng(spec.seed);
    let (pi, trend_idx) = long_run(spec, rank, &mut rng);
    let mut gamma = short_run(spec, &mut rng);
    let ident = DMatrix::identity(m, m);
    let mut phis = vec![&ident + &pi + &gamma, -&gamma];
    for _ in 0..40 {
        if !explosive(&phis) {
            break;
        }
        gamma *= 0.7;
        phis = vec![&ident + &pi + &gamma, -&gamma];
    }
    if explosive(&phis) {
        return Err(AppError::Config("could not build a non-explosive VECM with these settings".into()));
    }
    let sigma = within_commodity_cov(spec);
    let factor = sigma.clone().cholesky().expect("positive definite").l();
    let logs = simulate::simulate_var(&mut rng, &DVector::zeros(m), &phis, &factor, spec.weeks, 50);

    let commodities = commodity_names(spec.commodities);
    let regions = region_names(spec.regions);
    let label = |i: usize| format!("{}.{}", commodities[i / spec.regions], regions[i % spec.regions]);
    let base_price = |k: usize| match commodities[k].as_str() {
        "piglet" => 30.0,
        "hog" => 15.0,
        "pork" => 25.0,
        _ => 10.0 + 5.0 * k as f64,
    };

    let dates: Vec<NaiveDate> = (0..spec.weeks).map(|w| spec.start + Duration::weeks(w as i64)).collect();
    let mut cpi = BTreeMap::new();
    let first = Month::of(dates[0]);
    let last = Month::of(*dates.last().expect("weeks > 0") + Duration::days(6));
    let mut month = first;
    let mut k = 0;
    while month <= last {
        cpi.insert(month, 100.0 * (1.0 + spec.inflation).powi(k));
        k += 1;
        month = if month.month == 12 {
            Month { year: month.year + 1, month: 1 }
        } else {
            Month { year: month.year, month: month.month + 1 }
        };
    }

    let mut prices = Vec::new();
    for (t, monday) in dates.iter().enumerate() {
        for (r, region) in regions.iter().enumerate() {
            for (c, commodity) in commodities.iter().enumerate() {
                let i = c * spec.regions + r;
                let missing = rng.random::<f64>() < spec.missing;
                for _ in 0..spec.reports_per_week {
                    let day = *monday + Duration::days(rng.random_range(0..7));
                    let noise = 0.005 * standard_normal(&mut rng);
                    if missing {
                        continue;
                    }
                    let real = base_price(c) * (logs[(t, i)] + noise).exp();
                    let nominal = real * cpi[&Month::of(day)] / cpi[&first];
                    prices.push(RawObservation {
                        date: day.format("%Y-%m-%d").to_string(),
                        region: region.clone(),
                        commodity: commodity.clone(),
                        price: Some((nominal * 1e4).round() / 1e4),
                    });
                }
            }
        }
    }

    let third = spec.weeks / 3;
    let bounds = [0, third, 2 * third, spec.weeks];
    let periods = ["Pre", "Post1", "Post2"]
        .iter()
        .enumerate()
        .map(|(k, name)| PeriodSpec {
            name: name.to_string(),
            start: dates[bounds[k]],
            end: dates[bounds[k + 1] - 1] + Duration::days(6),
        })
        .collect();

    Ok(SynthData {
        prices,
        cpi,
        truth: SynthTruth {
            series: (0..m).map(label).collect(),
            rank,
            trends: trend_idx.iter().map(|i| label(*i)).collect(),
            pi,
            gamma,
            sigma,
        },
        periods,
    })
}

/// First month of the generated sample, used as the deflation base.
pub fn base_month(spec: &SynthSpec) -> Month {
    Month { year: spec.start.year(), month: spec.start.month() }
}
