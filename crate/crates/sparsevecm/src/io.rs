//! File formats: long price CSV, CPI CSV, wide panel CSV with a JSON
//! sidecar, JSON artifacts and JIRF tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sparsevecm_core::bootstrap::JirfDistribution;
use sparsevecm_core::linalg::Matrix;
use sparsevecm_core::panel::{parse_date, Month, Period, TransformLog};
use sparsevecm_core::{JirfResult, PricePanel, RawObservation, SeriesId};

use crate::error::{AppError, AppResult};

fn reader(path: &Path) -> AppResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn expect_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> AppResult<()> {
    let headers = rdr.headers().map_err(|e| AppError::csv(path, e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(AppError::schema(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// Long-form prices: `date,region,commodity,price`; an empty price is a
/// missing report.
pub fn read_prices(path: &Path) -> AppResult<Vec<RawObservation>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["date", "region", "commodity", "price"])?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AppError::csv(path, e))?;
        let price = match rec[3].trim() {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| {
                AppError::schema(path, format!("row {}: price `{s}` is not a number", k + 2))
            })?),
        };
        out.push(RawObservation {
            date: rec[0].to_string(),
            region: rec[1].to_string(),
            commodity: rec[2].to_string(),
            price,
        });
    }
    Ok(out)
}

pub fn write_prices(path: &Path, rows: &[RawObservation]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::csv(path, e))?;
    w.write_record(["date", "region", "commodity", "price"]).map_err(|e| AppError::csv(path, e))?;
    for r in rows {
        let price = r.price.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([r.date.as_str(), &r.region, &r.commodity, &price])
            .map_err(|e| AppError::csv(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Monthly CPI: `month,index` with `YYYY-MM` months.
pub fn read_cpi(path: &Path) -> AppResult<BTreeMap<Month, f64>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["month", "index"])?;
    let mut out = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AppError::csv(path, e))?;
        let month = Month::parse(&rec[0])
            .ok_or_else(|| AppError::schema(path, format!("row {}: bad month `{}`", k + 2, &rec[0])))?;
        let index: f64 = rec[1]
            .parse()
            .map_err(|_| AppError::schema(path, format!("row {}: bad index `{}`", k + 2, &rec[1])))?;
        out.insert(month, index);
    }
    Ok(out)
}

pub fn write_cpi(path: &Path, cpi: &BTreeMap<Month, f64>) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::csv(path, e))?;
    w.write_record(["month", "index"]).map_err(|e| AppError::csv(path, e))?;
    for (m, v) in cpi {
        w.write_record([m.to_string(), v.to_string()]).map_err(|e| AppError::csv(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Everything about a panel except its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSidecar {
    pub series: Vec<String>,
    /// Rows of the original missingness mask.
    pub missing: Vec<Vec<bool>>,
    pub periods: Vec<Period>,
    pub transform: TransformLog,
}

/// Writes `<stem>.csv` (wide: `date`, then one column per series) and
/// `<stem>.json`. Gaps are empty cells.
pub fn write_panel(dir: &Path, stem: &str, panel: &PricePanel) -> AppResult<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| AppError::csv(&csv_path, e))?;
    let mut header = vec![String::from("date")];
    header.extend(panel.labels());
    w.write_record(&header).map_err(|e| AppError::csv(&csv_path, e))?;
    for (t, date) in panel.dates.iter().enumerate() {
        let mut row = vec![date.to_string()];
        row.extend(panel.values.row(t).iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        w.write_record(&row).map_err(|e| AppError::csv(&csv_path, e))?;
    }
    w.flush().map_err(|e| AppError::io(&csv_path, e))?;
    let sidecar = PanelSidecar {
        series: panel.labels(),
        missing: panel.missing.row_iter().map(|r| r.iter().cloned().collect()).collect(),
        periods: panel.periods.clone(),
        transform: panel.transform.clone(),
    };
    write_json(&json_path, &sidecar)?;
    Ok((csv_path, json_path))
}

pub fn read_panel(csv_path: &Path, json_path: &Path) -> AppResult<PricePanel> {
    let sidecar: PanelSidecar = read_json(json_path)?;
    let mut rdr = reader(csv_path)?;
    let headers = rdr.headers().map_err(|e| AppError::csv(csv_path, e))?.clone();
    if headers.get(0) != Some("date") || headers.iter().skip(1).ne(sidecar.series.iter().map(String::as_str)) {
        return Err(AppError::schema(csv_path, "columns do not match the sidecar series list"));
    }
    let series = sidecar
        .series
        .iter()
        .map(|l| SeriesId::parse(l).ok_or_else(|| AppError::schema(json_path, format!("bad series label `{l}`"))))
        .collect::<AppResult<Vec<_>>>()?;
    let mut dates = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AppError::csv(csv_path, e))?;
        dates.push(
            parse_date(&rec[0]).ok_or_else(|| AppError::schema(csv_path, format!("row {}: bad date", k + 2)))?,
        );
        for cell in rec.iter().skip(1) {
            rows.push(if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse()
                    .map_err(|_| AppError::schema(csv_path, format!("row {}: bad value `{cell}`", k + 2)))?
            });
        }
    }
    let m = series.len();
    let values = Matrix::from_row_slice(dates.len(), m, &rows);
    let mut panel = PricePanel::new(dates, series, values)?;
    if sidecar.missing.len() != panel.n_times() || sidecar.missing.iter().any(|r| r.len() != m) {
        return Err(AppError::schema(json_path, "mask shape does not match the panel"));
    }
    panel.missing = nalgebra::DMatrix::from_fn(panel.n_times(), m, |i, j| sidecar.missing[i][j]);
    panel.periods = sidecar.periods;
    panel.transform = sidecar.transform;
    Ok(panel)
}

/// Pretty JSON with a trailing newline; floats use the shortest
/// round-trip representation.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> AppResult<T> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

/// Rows are horizons, columns are series.
pub fn write_jirf_csv(path: &Path, result: &JirfResult) -> AppResult<()> {
    write_horizon_table(path, &result.series, &result.responses)
}

pub fn write_horizon_table(path: &Path, series: &[SeriesId], m: &Matrix) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::csv(path, e))?;
    let mut header = vec![String::from("horizon")];
    header.extend(series.iter().map(SeriesId::label));
    w.write_record(&header).map_err(|e| AppError::csv(path, e))?;
    for h in 0..m.nrows() {
        let mut row = vec![h.to_string()];
        row.extend(m.row(h).iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| AppError::csv(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Raw bootstrap draws as `replicate,horizon,series,value`.
pub fn write_draws_csv(path: &Path, dist: &JirfDistribution) -> AppResult<()> {
    let file = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let labels: Vec<String> = dist.series.iter().map(SeriesId::label).collect();
    let io = |e| AppError::io(path, e);
    writeln!(out, "replicate,horizon,series,value").map_err(io)?;
    for (b, d) in dist.draws.iter().enumerate() {
        for h in 0..d.nrows() {
            for (j, label) in labels.iter().enumerate() {
                writeln!(out, "{b},{h},{label},{}", d[(h, j)]).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

pub fn sha256_file(path: &Path) -> AppResult<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
