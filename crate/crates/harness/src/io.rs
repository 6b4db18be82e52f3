//! Plain-text matrix files and result tables.
//!
//! A matrix file is headerless CSV, one matrix row per line. Its dimensions
//! live in a sidecar `<file>.dims` holding `rows = ..` and `cols = ..`; the
//! sidecar is always written and, when present, checked on read.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::config::KvConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::LimitsRow;
use crate::metrics::SweepRow;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".dims");
    PathBuf::from(s)
}

fn matrix_err(path: &Path, msg: impl Into<String>) -> HarnessError {
    HarnessError::Matrix {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Shortest representation that parses back to the same `f64`.
fn exact(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| exact(v)))?;
    }
    w.flush()?;
    let mut side = File::create(sidecar_path(path))?;
    writeln!(side, "rows = {}\ncols = {}", m.nrows(), m.ncols())?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| matrix_err(path, e.to_string()))?;
    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| matrix_err(path, e.to_string()))?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(matrix_err(
                    path,
                    format!("row {} has {} entries, expected {c}", rows + 1, rec.len()),
                ))
            }
            _ => {}
        }
        for field in rec.iter() {
            data.push(field.parse().map_err(|_| {
                matrix_err(path, format!("row {}: `{field}` is not a number", rows + 1))
            })?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| matrix_err(path, "empty file"))?;
    let side = sidecar_path(path);
    if side.exists() {
        let mut kv = KvConfig::from_file(&side)?;
        let (mut r_exp, mut c_exp) = (rows, cols);
        kv.take("rows", &mut r_exp)?;
        kv.take("cols", &mut c_exp)?;
        kv.finish()?;
        if (r_exp, c_exp) != (rows, cols) {
            return Err(matrix_err(
                path,
                format!("sidecar says {r_exp}x{c_exp}, file holds {rows}x{cols}"),
            ));
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Twelve significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        v.to_string()
    }
}

pub const SWEEP_HEADER: [&str; 9] = [
    "experiment",
    "solver",
    "param_name",
    "param_value",
    "trials",
    "mean_nmse",
    "success_rate",
    "ci_halfwidth",
    "mean_wall_time_s",
];

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.solver.clone(),
            r.param_name.clone(),
            fmt_sig(r.param_value),
            r.trials.to_string(),
            fmt_sig(r.mean_nmse),
            fmt_sig(r.success_rate),
            fmt_sig(r.ci_halfwidth),
            fmt_sig(r.mean_wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const LIMITS_HEADER: [&str; 5] = ["N", "error_rate", "ci_low", "ci_high", "threshold"];

pub fn write_limits_csv<W: Write>(out: W, rows: &[LimitsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LIMITS_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fmt_sig(r.error_rate),
            fmt_sig(r.ci_low),
            fmt_sig(r.ci_high),
            r.threshold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize into memory; handy for reproducibility checks.
pub fn sweep_csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

pub fn limits_csv_string(rows: &[LimitsRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_limits_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}
