//! Dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Ordinary least squares through a thin SVD, tolerant of rank deficiency.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coefficients: Vector,
    pub residuals: Vector,
    pub ssr: f64,
    /// Diagonal of the pseudo-inverse of `X'X`.
    pub xtx_inv_diag: Vector,
    pub rank: usize,
}

pub fn ols(x: &Matrix, y: &Vector) -> Ols {
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let k = x.ncols();
    let mut coefficients = Vector::zeros(k);
    let mut xtx_inv_diag = Vector::zeros(k);
    let mut rank = 0;
    for i in 0..s.len() {
        if s[i] <= cutoff {
            continue;
        }
        rank += 1;
        let uy = u.column(i).dot(y) / s[i];
        for j in 0..k {
            let vj = v_t[(i, j)];
            coefficients[j] += vj * uy;
            xtx_inv_diag[j] += vj * vj / (s[i] * s[i]);
        }
    }
    let residuals = y - x * &coefficients;
    let ssr = residuals.norm_squared();
    Ols {
        coefficients,
        residuals,
        ssr,
        xtx_inv_diag,
        rank,
    }
}

/// Inverse of a symmetric positive-definite matrix, or `None` when it is
/// indefinite or its condition number exceeds `max_condition`.
pub fn spd_inverse(a: &Matrix, max_condition: f64) -> Option<Matrix> {
    let eig = a.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) || hi / lo > max_condition {
        return None;
    }
    a.clone().cholesky().map(|c| c.inverse())
}

pub fn min_symmetric_eigenvalue(a: &Matrix) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Companion matrix of a VAR with lag matrices `phis` (each m x m).
pub fn companion(phis: &[Matrix]) -> Matrix {
    let p = phis.len();
    let m = phis.first().map_or(0, |f| f.nrows());
    let mut c = Matrix::zeros(m * p, m * p);
    for (k, phi) in phis.iter().enumerate() {
        c.view_mut((0, k * m), (m, m)).copy_from(phi);
    }
    for i in 0..m * p.saturating_sub(1) {
        c[(m + i, i)] = 1.0;
    }
    c
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max)
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Matrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

/// Serde adapter writing a matrix as an array of rows.
pub mod serde_rows {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(rows_to_matrix(&rows))
    }
}

/// Serde adapter for a list of matrices.
pub mod serde_rows_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Vec<Vec<f64>>> = ms.iter().map(matrix_to_rows).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Matrix>, D::Error> {
        let v = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(v.iter().map(|r| rows_to_matrix(r)).collect())
    }
}

/// Like [`serde_rows`] but writes `NaN` as `null`.
pub mod serde_rows_nan {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = m
            .row_iter()
            .map(|r| r.iter().map(|v| (!v.is_nan()).then_some(*v)).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        if rows.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        let plain: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            .collect();
        Ok(rows_to_matrix(&plain))
    }
}

/// Serde adapter for a boolean mask as an array of rows.
pub mod serde_mask {
    use super::*;
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<bool>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<bool>> = m.row_iter().map(|r| r.iter().cloned().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<bool>, D::Error> {
        let rows = Vec::<Vec<bool>>::deserialize(d)?;
        if rows.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(serde::de::Error::custom("ragged mask rows"));
        }
        let cols = rows.first().map_or(0, Vec::len);
        Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

/// Serde adapter writing a vector as a plain array.
pub mod serde_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_line() {
        let x = Matrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = Vector::from_fn(5, |i, _| 2.0 + 3.0 * i as f64);
        let fit = ols(&x, &y);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-12);
        assert!(fit.ssr < 1e-20);
        assert_eq!(fit.rank, 2);
    }

    #[test]
    fn spd_inverse_guards_singular() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inverse(&a, 1e12).is_none());
        let b = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
        let inv = spd_inverse(&b, 1e12).unwrap();
        let id = &b * inv;
        assert!((id - Matrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn companion_radius_of_scaled_identity() {
        let phi = Matrix::identity(3, 3) * 0.5;
        let c = companion(&[phi]);
        assert!((spectral_radius(&c) - 0.5).abs() < 1e-12);
    }
}
