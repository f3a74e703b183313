//! Seeded simulation of VAR processes.

use alloc::vec::Vec;
use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, Matrix, Vector};
use crate::panel::{PricePanel, SeriesId};

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            let v: f64 = rng.random();
            return libm::sqrt(-2.0 * libm::log(u)) * libm::cos(core::f64::consts::TAU * v);
        }
    }
}

pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    // fill row by row so the draw order is the reading order
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = standard_normal(rng);
        }
    }
    m
}

/// Simulates `t_len` observations of `Y_t = c + sum Phi_k Y_{t-k} + L z_t`
/// with `z_t` iid standard normal, after `burn` discarded steps from zero.
/// `noise_factor` is any `L` with `L L' = Sigma`.
pub fn simulate_var<R: Rng + ?Sized>(
    rng: &mut R,
    intercept: &Vector,
    phis: &[Matrix],
    noise_factor: &Matrix,
    t_len: usize,
    burn: usize,
) -> Matrix {
    let m = intercept.len();
    let p = phis.len();
    let total = t_len + burn + p;
    let mut y = Matrix::zeros(total, m);
    for t in p..total {
        let z = Vector::from_fn(m, |_, _| standard_normal(rng));
        let mut v = intercept + noise_factor * z;
        for (k, phi) in phis.iter().enumerate() {
            v += phi * y.row(t - k - 1).transpose();
        }
        y.set_row(t, &v.transpose());
    }
    y.rows(total - t_len, t_len).into_owned()
}

/// Random VAR(p) whose companion matrix has spectral radius `radius`
/// (rescaled uniformly across lags).
pub fn random_stable_var<R: Rng + ?Sized>(rng: &mut R, m: usize, p: usize, radius: f64) -> Vec<Matrix> {
    let mut phis: Vec<Matrix> = (0..p)
        .map(|k| normal_matrix(rng, m, m) / (libm::sqrt(m as f64) * (k + 1) as f64))
        .collect();
    // Scaling lag k by s^k scales companion eigenvalues by s.
    for _ in 0..50 {
        let r = linalg::spectral_radius(&linalg::companion(&phis));
        if (r - radius).abs() < 1e-12 || r == 0.0 {
            break;
        }
        let s = radius / r;
        for (k, phi) in phis.iter_mut().enumerate() {
            *phi *= libm::pow(s, (k + 1) as f64);
        }
    }
    phis
}

/// Wraps a T x m value matrix into a weekly panel starting 2018-01-01, with
/// series `s.r0`, `s.r1`, ... in a single commodity block.
pub fn panel_from_values(values: Matrix) -> PricePanel {
    let m = values.ncols();
    let series = (0..m)
        .map(|j| SeriesId::new("s", alloc::format!("r{j:03}")))
        .collect();
    panel_with_series(values, series)
}

pub fn panel_with_series(values: Matrix, series: Vec<SeriesId>) -> PricePanel {
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
    let dates = (0..values.nrows())
        .map(|k| start + Duration::days(7 * k as i64))
        .collect();
    PricePanel::new(dates, series, values).expect("consistent panel")
}
