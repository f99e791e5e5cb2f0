//! CSV and JSON files read and written by the harness.
//!
//! Floats are written in Rust's shortest round-trip form, so re-reading a file
//! reproduces the values exactly.

use std::fs;
use std::path::Path;

use carma_levy_core::{DMatrix, GmmResult, IncrementSample, SampledSeries};
use serde::Serialize;

use crate::error::HarnessError;
use crate::experiment::{ReplicationRow, Status};

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// JSON form of a GMM fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmResultJson {
    pub theta: Vec<f64>,
    /// Asymptotic covariance of `√N (θ̂ - θ₀)`.
    pub sigma: Vec<Vec<f64>>,
    pub criterion: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub dropped: usize,
    pub converged: bool,
    pub flagged: bool,
    pub n_used: usize,
    pub iterations: usize,
    pub restarts: usize,
    pub weighting: Vec<Vec<f64>>,
}

impl GmmResultJson {
    pub fn new(res: &GmmResult, n: usize, h: f64) -> Self {
        Self {
            theta: res.theta.clone(),
            sigma: matrix_rows(&res.sigma),
            criterion: res.criterion,
            n,
            h,
            dropped: res.dropped,
            converged: res.converged,
            flagged: res.flagged,
            n_used: res.n_used,
            iterations: res.iterations,
            restarts: res.restarts,
            weighting: matrix_rows(&res.weighting),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

/// Columns `n, dL_1..dL_m` and, with ground truth, `dL_true_1..dL_true_m`.
pub fn write_increments_csv(
    path: &Path,
    estimate: &IncrementSample,
    truth: Option<&IncrementSample>,
) -> Result<(), HarnessError> {
    let m = estimate.dim();
    let mut w = csv_writer(path)?;
    let mut header = vec!["n".to_string()];
    header.extend((1..=m).map(|i| format!("dL_{i}")));
    if truth.is_some() {
        header.extend((1..=m).map(|i| format!("dL_true_{i}")));
    }
    w.write_record(&header)?;
    for (n, x) in estimate.iter().enumerate() {
        let mut rec = vec![(n + 1).to_string()];
        rec.extend(x.iter().map(f64::to_string));
        if let Some(t) = truth {
            rec.extend(t.get(n).iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn parse(field: &str, path: &Path) -> Result<f64, HarnessError> {
    field.trim().parse().map_err(|_| {
        HarnessError::Config(format!("{}: '{field}' is not a number", path.display()))
    })
}

/// Reads the columns whose header is `{prefix}1`, `{prefix}2`, … in order.
fn read_columns(path: &Path, prefix: &str) -> Result<(usize, Vec<f64>), HarnessError> {
    let mut r = csv_reader(path)?;
    let headers = r.headers()?.clone();
    let mut cols = Vec::new();
    while let Some(i) = headers.iter().position(|h| h == format!("{prefix}{}", cols.len() + 1)) {
        cols.push(i);
    }
    if cols.is_empty() {
        return Err(HarnessError::Config(format!(
            "{}: no '{prefix}1' column",
            path.display()
        )));
    }
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for &c in &cols {
            values.push(parse(rec.get(c).unwrap_or(""), path)?);
        }
    }
    Ok((cols.len(), values))
}

/// Estimated increments from a file written by [`write_increments_csv`].
pub fn read_increments_csv(path: &Path) -> Result<IncrementSample, HarnessError> {
    let (m, values) = read_columns(path, "dL_")?;
    IncrementSample::new(m, 1.0, values)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Columns `k, t, y_1..y_d`.
pub fn write_series_csv(path: &Path, series: &SampledSeries) -> Result<(), HarnessError> {
    let d = series.dim();
    let mut w = csv_writer(path)?;
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("y_{i}")));
    w.write_record(&header)?;
    for k in 0..series.len() {
        let mut rec = vec![k.to_string(), (k as f64 / series.per_unit() as f64).to_string()];
        rec.extend(series.get(k).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// `(d, values)` from a file written by [`write_series_csv`].
pub fn read_series_csv(path: &Path) -> Result<(usize, Vec<f64>), HarnessError> {
    read_columns(path, "y_")
}

/// One row per replication: identifiers, status, estimate and recovery error.
pub fn write_replications_csv(
    path: &Path,
    rows: &[ReplicationRow],
    r: usize,
) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["h", "replication", "stream", "status", "stage", "message"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=r).map(|i| format!("theta_{i}")));
    header.extend(["dropped", "converged", "recovery_error"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.h.to_string(),
            row.replication.to_string(),
            row.stream.to_string(),
        ];
        match &row.status {
            Status::Ok => rec.extend(["ok".into(), String::new(), String::new()]),
            Status::Failed { stage, message } => {
                rec.extend(["failed".into(), stage.to_string(), message.clone()])
            }
        }
        match &row.theta {
            Some(t) => rec.extend(t.iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n(String::new(), r)),
        }
        rec.push(row.dropped.map(|d| d.to_string()).unwrap_or_default());
        rec.push(row.converged.map(|c| c.to_string()).unwrap_or_default());
        rec.push(row.recovery_error.map(|e| e.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inc.csv");
        let est = IncrementSample::scalar(vec![0.1, 2.0 / 3.0, 1e-300]).unwrap();
        let truth = IncrementSample::scalar(vec![0.2, 0.7, 1.0]).unwrap();
        write_increments_csv(&path, &est, Some(&truth)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("n,dL_1,dL_true_1\n1,0.1,0.2\n"));
        assert_eq!(read_increments_csv(&path).unwrap(), est);
    }
}
