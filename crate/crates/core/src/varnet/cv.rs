//! Rolling-origin cross-validation over the (lambda, gamma) grid.
//!
//! Fold `k` trains on the expanding prefix `0..w0 + k*step` of the
//! regression rows and scores the mean squared one-step-ahead forecast
//! error on the next `step` rows. Standardization is recomputed on every
//! training window; the lambda grid is shared so that scores line up.
//! A path that fails to converge at some lambda is cut there, and every
//! grid point from that lambda down is excluded from selection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::design::{LagDesign, Standardized};
use super::solver::{self, Penalty};
use super::{check_panel, ElasticNetConfig};
use crate::error::{Error, Result};
use crate::panel::PricePanel;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_end: usize,
    pub test_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `scores[g][l]`: mean MSFE across folds, `None` if any fold failed to
    /// converge at that grid point.
    pub scores: Vec<Vec<Option<f64>>>,
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub lambda: f64,
    pub gamma: f64,
    pub table: CvTable,
}

pub(crate) fn make_folds(rows: usize, config: &ElasticNetConfig) -> Result<Vec<Fold>> {
    let k = config.cv_folds;
    let initial = config.cv_initial_window.unwrap_or(rows / 2);
    if initial < 5 || initial >= rows {
        return Err(Error::InsufficientFolds(format!(
            "initial window {initial} does not fit in {rows} rows"
        )));
    }
    let step = config
        .cv_step
        .unwrap_or_else(|| (rows - initial) / k.max(1));
    if step == 0 {
        return Err(Error::InsufficientFolds(format!(
            "{rows} rows leave no test block after an initial window of {initial}"
        )));
    }
    let folds: Vec<Fold> = (0..k)
        .map(|f| Fold {
            train_end: initial + f * step,
            test_end: initial + (f + 1) * step,
        })
        .take_while(|f| f.test_end <= rows)
        .collect();
    if folds.len() < 3 {
        return Err(Error::InsufficientFolds(format!(
            "only {} complete folds (need 3)",
            folds.len()
        )));
    }
    Ok(folds)
}

/// Picks `(lambda, gamma)` minimising mean MSFE; ties go to the larger
/// lambda, then the larger gamma.
pub fn cross_validate(panel: &PricePanel, lags: usize, config: &ElasticNetConfig) -> Result<CvOutcome> {
    config.validate()?;
    check_panel(panel, lags)?;
    let design = LagDesign::new(&panel.values, lags, lags);
    let rows = design.rows();
    let folds = make_folds(rows, config)?;
    let m = panel.n_series();

    let full = Standardized::new(&design.x, &design.y, rows, config.standardize);
    let lambdas = config.lambda_grid(full.lambda_max(), rows, design.x.ncols());
    drop(full);
    let gammas = config.gammas.clone();
    let (nl, ng) = (lambdas.len(), gammas.len());

    // sse[fold][g][l] summed over equations
    let mut fold_scores: Vec<Vec<Vec<Option<f64>>>> = Vec::with_capacity(folds.len());
    for fold in &folds {
        let train = Standardized::new(&design.x, &design.y, fold.train_end, config.standardize);
        let test_rows = fold.test_end - fold.train_end;
        let per_eq = par::map_indexed(m, |i| {
            equation_path_errors(&train, &design, *fold, i, &lambdas, &gammas, config)
        });
        let mut scores = vec![vec![Some(0.0); nl]; ng];
        for eq in per_eq {
            for g in 0..ng {
                for l in 0..nl {
                    scores[g][l] = match (scores[g][l], eq[g][l]) {
                        (Some(a), Some(b)) => Some(a + b),
                        _ => None,
                    };
                }
            }
        }
        let denom = (test_rows * m) as f64;
        for row in scores.iter_mut() {
            for s in row.iter_mut() {
                *s = s.map(|v| v / denom);
            }
        }
        fold_scores.push(scores);
    }

    let mut scores = vec![vec![None; nl]; ng];
    for g in 0..ng {
        for l in 0..nl {
            let mut sum = 0.0;
            let mut ok = true;
            for f in &fold_scores {
                match f[g][l] {
                    Some(v) if v.is_finite() => sum += v,
                    _ => ok = false,
                }
            }
            scores[g][l] = ok.then(|| sum / folds.len() as f64);
        }
    }

    let dropped = scores.iter().flatten().filter(|s| s.is_none()).count();
    if dropped > 0 {
        log::warn!(
            "cv: {dropped} of {} grid points excluded (no convergence on some fold)",
            ng * nl
        );
    }

    // lambdas are descending; visit gammas from largest to smallest
    let mut g_order: Vec<usize> = (0..ng).collect();
    g_order.sort_by(|&a, &b| gammas[b].total_cmp(&gammas[a]));
    let mut best: Option<(usize, usize, f64)> = None;
    for l in 0..nl {
        for &g in &g_order {
            if let Some(s) = scores[g][l] {
                if best.is_none_or(|(_, _, b)| s < b) {
                    best = Some((g, l, s));
                }
            }
        }
    }
    let (g, l, _) = best.ok_or_else(|| {
        Error::InsufficientFolds("no grid point converged on every fold".into())
    })?;
    Ok(CvOutcome {
        lambda: lambdas[l],
        gamma: gammas[g],
        table: CvTable {
            lambdas,
            gammas,
            scores,
            folds,
        },
    })
}

/// Squared test errors of one equation along the lambda path for every
/// gamma, warm-starting down the path.
fn equation_path_errors(
    train: &Standardized,
    design: &LagDesign,
    fold: Fold,
    equation: usize,
    lambdas: &[f64],
    gammas: &[f64],
    config: &ElasticNetConfig,
) -> Vec<Vec<Option<f64>>> {
    let d = train.gram.ncols();
    let zty = train.zty_column(equation);
    let stop = config.stop_rule();
    let mut out = vec![vec![None; lambdas.len()]; gammas.len()];
    for (g, &gamma) in gammas.iter().enumerate() {
        let mut b = vec![0.0; d];
        for (l, &lambda) in lambdas.iter().enumerate() {
            let st = solver::solve(
                &train.gram,
                &zty,
                &train.usable,
                Penalty { lambda, gamma },
                stop,
                &mut b,
                None,
            );
            if !st.converged {
                // smaller lambdas only get harder; the rest of this path stays excluded
                log::debug!(
                    "cv: equation {equation} did not converge at lambda {lambda:e}, gamma {gamma}"
                );
                break;
            }
            let (c, slopes) = train.unscale(&b, equation);
            let mut sse = 0.0;
            for r in fold.train_end..fold.test_end {
                let mut pred = c;
                for (j, s) in slopes.iter().enumerate() {
                    if *s != 0.0 {
                        pred += s * design.x[(r, j)];
                    }
                }
                let e = design.y[(r, equation)] - pred;
                sse += e * e;
            }
            out[g][l] = Some(sse);
        }
    }
    out
}
