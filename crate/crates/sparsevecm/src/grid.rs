//! Coefficient grids in commodity-major block layout.

use serde::{Deserialize, Serialize};
use sparsevecm_core::linalg::{serde_rows, Matrix};
use sparsevecm_core::VecmView;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridExport {
    pub matrix: String,
    pub period: String,
    pub labels: Vec<String>,
    pub commodities: Vec<String>,
    /// Regions per commodity block.
    pub block_size: usize,
    /// Row/column indices where a new commodity block starts.
    pub boundaries: Vec<usize>,
    #[serde(with = "serde_rows")]
    pub values: Matrix,
}

/// Values mapped for display: `magnitude = |v| / max|v|` in `[0, 1]` and
/// the sign separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRendering {
    pub matrix: String,
    pub period: String,
    pub max_abs: f64,
    pub magnitude: Vec<Vec<f64>>,
    pub sign: Vec<Vec<i8>>,
}

pub fn export_grid(vecm: &VecmView, which: &str, period: &str) -> AppResult<GridExport> {
    let values = vecm.matrix(which)?.clone();
    let labels: Vec<String> = vecm.series.iter().map(|s| s.label()).collect();
    let mut commodities: Vec<String> = Vec::new();
    for s in &vecm.series {
        if commodities.last() != Some(&s.commodity) {
            if commodities.contains(&s.commodity) {
                return Err(AppError::Config(format!("commodity `{}` is not contiguous", s.commodity)));
            }
            commodities.push(s.commodity.clone());
        }
    }
    let m = labels.len();
    let block_size = m / commodities.len().max(1);
    if block_size * commodities.len() != m
        || vecm.series.iter().enumerate().any(|(i, s)| s.commodity != commodities[i / block_size])
    {
        return Err(AppError::Config("commodity blocks have unequal sizes".into()));
    }
    let boundaries = (1..commodities.len()).map(|k| k * block_size).collect();
    Ok(GridExport {
        matrix: canonical_label(which),
        period: period.to_string(),
        labels,
        commodities,
        block_size,
        boundaries,
        values,
    })
}

fn canonical_label(which: &str) -> String {
    which.to_ascii_lowercase()
}

impl GridExport {
    pub fn rendering(&self) -> GridRendering {
        let max_abs = self.values.amax();
        let (r, c) = self.values.shape();
        let mut magnitude = vec![vec![0.0; c]; r];
        let mut sign = vec![vec![0i8; c]; r];
        for i in 0..r {
            for j in 0..c {
                let v = self.values[(i, j)];
                magnitude[i][j] = if max_abs > 0.0 { v.abs() / max_abs } else { 0.0 };
                sign[i][j] = if v > 0.0 {
                    1
                } else if v < 0.0 {
                    -1
                } else {
                    0
                };
            }
        }
        GridRendering { matrix: self.matrix.clone(), period: self.period.clone(), max_abs, magnitude, sign }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsevecm_core::linalg::Vector;
    use sparsevecm_core::{to_vecm, SeriesId, VarFit};

    fn view(commodities: &[&str], regions: &[&str], phi: Matrix) -> VecmView {
        let series: Vec<SeriesId> = commodities
            .iter()
            .flat_map(|c| regions.iter().map(move |r| SeriesId::new(*c, *r)))
            .collect();
        let m = series.len();
        let values = Matrix::from_fn(8, m, |t, j| ((t + 1) * (j + 2)) as f64);
        to_vecm(&VarFit::from_parts(series, Vector::zeros(m), vec![phi], &values).unwrap()).unwrap()
    }

    #[test]
    fn block_boundaries() {
        let v = view(&["piglet", "hog", "pork"], &["A", "B"], Matrix::identity(6, 6) * 0.5);
        let g = export_grid(&v, "Pi", "Pre").unwrap();
        assert_eq!(g.boundaries, vec![2, 4]);
        assert_eq!(g.block_size, 2);
        assert_eq!(g.labels[2], "hog.A");
        assert_eq!(g.matrix, "pi");
        let r = g.rendering();
        assert_eq!(r.max_abs, 0.5);
        assert_eq!(r.sign[0][0], -1);
        assert!(export_grid(&v, "gamma1", "Pre").is_err());
    }

    #[test]
    fn unit_root_var_gives_zero_grid() {
        let v = view(&["a", "b"], &["x"], Matrix::identity(2, 2));
        let g = export_grid(&v, "pi", "All").unwrap();
        assert!(g.values.iter().all(|x| *x == 0.0));
        assert!(g.rendering().magnitude.iter().flatten().all(|x| *x == 0.0));
    }
}
