//! Sampled scan data and its CSV representation.
//!
//! CSV files have a single header row and comma-separated decimal columns.
//! The first column is `detuning_mhz` (2π × MHz) or `tau_us`; the second is
//! `counts`, `reflectivity` or `cooperativity`. An optional third column
//! `sigma` carries per-point standard deviations in the units of the second.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{mhz, to_mhz};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Detuning in rad/s.
    Detuning,
    /// Delay in seconds.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    /// Detected photon counts, averaged over `exposures` repetitions.
    Counts,
    /// Reflectivity or cooperativity normalized to a reference level.
    Normalized,
}

/// Ordered samples from a scan, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrace {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub axis: Axis,
    pub kind: TraceKind,
    /// Number of repetitions averaged into each `y` value.
    pub exposures: u32,
    /// Per-point standard deviations of `y`, when known.
    pub sigma: Option<Vec<f64>>,
    pub seed: u64,
    pub provenance: String,
}

impl ScanTrace {
    pub fn new(x: Vec<f64>, y: Vec<f64>, axis: Axis, kind: TraceKind) -> Result<Self> {
        let t = ScanTrace {
            x,
            y,
            axis,
            kind,
            exposures: 1,
            sigma: None,
            seed: 0,
            provenance: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_provenance(mut self, seed: u64, provenance: impl Into<String>) -> Self {
        self.seed = seed;
        self.provenance = provenance.into();
        self
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        self.sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.sigma {
            if s.len() != self.y.len() || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::domain("sigma must hold one positive value per sample"));
            }
        }
        if self.x.len() != self.y.len() {
            return Err(Error::domain(format!(
                "trace has {} x values but {} y values",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::domain("trace contains non-finite values"));
        }
        let increasing = self.x.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.x.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::domain("trace x values must be strictly monotone"));
        }
        if self.kind == TraceKind::Counts && self.y.iter().any(|&v| v < 0.0) {
            return Err(Error::domain("count trace has negative values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Default least-squares weights: `1/σ²` when sigmas are present, else
    /// Poisson `1/var` for counts (the mean of `exposures` draws has variance
    /// `mean/exposures`), else uniform.
    pub fn default_weights(&self) -> Vec<f64> {
        if let Some(s) = &self.sigma {
            return s.iter().map(|v| 1.0 / (v * v)).collect();
        }
        match self.kind {
            TraceKind::Counts => {
                let n = self.exposures.max(1) as f64;
                self.y.iter().map(|&y| n / (y * n).max(1.0) * n).collect()
            }
            TraceKind::Normalized => vec![1.0; self.len()],
        }
    }

    fn column_names(&self) -> (&'static str, &'static str) {
        let x = match self.axis {
            Axis::Detuning => "detuning_mhz",
            Axis::Time => "tau_us",
        };
        let y = match (self.kind, self.axis) {
            (TraceKind::Counts, _) => "counts",
            (TraceKind::Normalized, Axis::Detuning) => "reflectivity",
            (TraceKind::Normalized, Axis::Time) => "cooperativity",
        };
        (x, y)
    }

    fn x_to_display(&self, x: f64) -> f64 {
        match self.axis {
            Axis::Detuning => to_mhz(x),
            Axis::Time => x * 1e6,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (xn, yn) = self.column_names();
        let mut w = csv::Writer::from_writer(out);
        match &self.sigma {
            Some(s) => {
                w.write_record([xn, yn, "sigma"]).map_err(csv_io)?;
                for ((&x, &y), &e) in self.x.iter().zip(&self.y).zip(s) {
                    w.write_record([format!("{}", self.x_to_display(x)), format!("{y}"), format!("{e}")])
                        .map_err(csv_io)?;
                }
            }
            None => {
                w.write_record([xn, yn]).map_err(csv_io)?;
                for (&x, &y) in self.x.iter().zip(&self.y) {
                    w.write_record([format!("{}", self.x_to_display(x)), format!("{y}")])
                        .map_err(csv_io)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, source_name: &str) -> Result<Self> {
        let table = read_table(input, source_name)?;
        let axis = match table.headers[0].as_str() {
            "detuning_mhz" => Axis::Detuning,
            "tau_us" => Axis::Time,
            other => {
                return Err(Error::data(
                    source_name,
                    1,
                    1,
                    format!("first column must be detuning_mhz or tau_us, found {other:?}"),
                ))
            }
        };
        let kind = match table.headers.get(1).map(String::as_str) {
            Some("counts") => TraceKind::Counts,
            Some("reflectivity") | Some("cooperativity") => TraceKind::Normalized,
            other => {
                return Err(Error::data(
                    source_name,
                    1,
                    2,
                    format!("second column must be counts, reflectivity or cooperativity, found {other:?}"),
                ))
            }
        };
        let x = table
            .column(0)
            .map(|v| match axis {
                Axis::Detuning => mhz(v),
                Axis::Time => v * 1e-6,
            })
            .collect();
        let y = table.column(1).collect();
        let sigma = table.index_of("sigma").map(|i| table.column(i).collect());
        let t = ScanTrace {
            x,
            y,
            axis,
            kind,
            exposures: 1,
            sigma,
            seed: 0,
            provenance: format!("read from {source_name}"),
        };
        t.validate().map_err(|e| Error::data(source_name, 2, 1, e.to_string()))?;
        Ok(t)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// A numeric CSV table with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Reads a header + numeric-rows CSV, reporting malformed cells by line and column.
pub fn read_table<R: Read>(input: R, source_name: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::data(source_name, 1, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(Error::data(source_name, 1, 1, "expected at least two columns"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::data(source_name, line, 1, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(Error::data(
                source_name,
                line,
                rec.len().min(headers.len()) + 1,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::data(source_name, line, col + 1, format!("not a number: {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::data(source_name, line, col + 1, "non-finite value"));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data(source_name, 2, 1, "no data rows"));
    }
    Ok(Table { headers, rows })
}

/// Writes a numeric table with the given header.
pub fn write_table<W: Write>(out: W, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers).map_err(csv_io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v}"))).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone_x() {
        let r = ScanTrace::new(vec![0.0, 2.0, 1.0], vec![1.0; 3], Axis::Detuning, TraceKind::Normalized);
        assert!(r.is_err());
    }

    #[test]
    fn csv_round_trip_keeps_values() {
        let t = ScanTrace::new(
            vec![mhz(-1.0), mhz(0.0), mhz(2.5)],
            vec![0.9, 0.2, 0.95],
            Axis::Detuning,
            TraceKind::Normalized,
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("detuning_mhz,reflectivity\n"));
        let back = ScanTrace::read_csv(&buf[..], "mem").unwrap();
        for (a, b) in back.x.iter().zip(&t.x) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        assert_eq!(back.y, t.y);
    }

    #[test]
    fn malformed_cell_reports_position() {
        let text = "tau_us,cooperativity\n0,1.0\n1,abc\n";
        match ScanTrace::read_csv(text.as_bytes(), "in.csv") {
            Err(Error::Data { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_header_rejected() {
        let text = "freq,counts\n0,1\n";
        assert!(matches!(ScanTrace::read_csv(text.as_bytes(), "x"), Err(Error::Data { .. })));
    }
}
