use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::Deserialize;

use crate::io::{create, wrap_io, IoError};
use crate::numfmt::g17;

use super::config::Case;

/// One `(n, seed)` run of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub case: Case,
    pub m: usize,
    pub nu: f64,
    pub n: usize,
    pub seed: u64,
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    /// `max |f^n - f|` over vertices and snapshot times.
    pub sup_error: Option<f64>,
    /// Why the row failed, if it did.
    pub error: Option<String>,
}

/// Seed-averaged error at one `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryPoint {
    pub n: usize,
    pub mean_error: f64,
    pub ok_rows: usize,
    pub failed_rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub per_n: Vec<SummaryPoint>,
    /// Least-squares slope of `log(mean error)` against `log(log n / n)`.
    pub slope: Option<f64>,
    /// `min(ν, 1/2) / ((1 + ν) m)`, printed for comparison only.
    pub theoretical_exponent: Option<f64>,
}

impl Summary {
    pub fn from_rows(rows: &[ConvergenceRow]) -> Summary {
        let mut per_n: Vec<SummaryPoint> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for r in rows {
            let k = match per_n.iter().position(|p| p.n == r.n) {
                Some(k) => k,
                None => {
                    per_n.push(SummaryPoint {
                        n: r.n,
                        mean_error: f64::NAN,
                        ok_rows: 0,
                        failed_rows: 0,
                    });
                    sums.push(0.0);
                    per_n.len() - 1
                }
            };
            match r.sup_error {
                Some(e) if r.error.is_none() => {
                    per_n[k].ok_rows += 1;
                    sums[k] += e;
                }
                _ => per_n[k].failed_rows += 1,
            }
        }
        for (p, s) in per_n.iter_mut().zip(&sums) {
            if p.ok_rows > 0 {
                p.mean_error = s / p.ok_rows as f64;
            }
        }
        per_n.sort_by_key(|p| p.n);
        let pts: Vec<(f64, f64)> = per_n
            .iter()
            .filter(|p| p.ok_rows > 0 && p.mean_error > 0.0 && p.n >= 2)
            .map(|p| {
                let n = p.n as f64;
                ((n.ln() / n).ln(), p.mean_error.ln())
            })
            .collect();
        let theoretical_exponent = rows.first().map(|r| r.nu.min(0.5) / ((1.0 + r.nu) * r.m as f64));
        Summary {
            per_n,
            slope: least_squares_slope(&pts),
            theoretical_exponent,
        }
    }

    /// Mean error strictly decreasing in `n`, except for up to
    /// `allowed_inversions` adjacent increases.
    pub fn decreasing_with_inversions(&self, allowed_inversions: usize) -> bool {
        if self.per_n.iter().any(|p| p.ok_rows == 0) {
            return false;
        }
        let inversions = self
            .per_n
            .windows(2)
            .filter(|w| !(w[1].mean_error < w[0].mean_error))
            .count();
        inversions <= allowed_inversions
    }

    /// Human-readable summary, one line per `n` plus the slope.
    pub fn to_text(&self) -> String {
        let mut s = String::from("n,mean_sup_error,ok_rows,failed_rows\n");
        for p in &self.per_n {
            s.push_str(&format!("{},{},{},{}\n", p.n, g17(p.mean_error), p.ok_rows, p.failed_rows));
        }
        match self.slope {
            Some(v) => s.push_str(&format!("fitted slope vs log(log n / n): {}\n", g17(v))),
            None => s.push_str("fitted slope: insufficient points\n"),
        }
        if let Some(t) = self.theoretical_exponent {
            s.push_str(&format!("theoretical exponent: {}\n", g17(t)));
        }
        s
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub summary: Summary,
    /// Wall-clock seconds per row. Kept in memory only, so emitted reports
    /// stay byte-identical across runs.
    pub wall_times: Vec<f64>,
}

impl PartialEq for ConvergenceReport {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.summary == other.summary
    }
}

impl ConvergenceReport {
    pub fn from_rows(rows: Vec<ConvergenceRow>) -> Self {
        let summary = Summary::from_rows(&rows);
        ConvergenceReport {
            rows,
            summary,
            wall_times: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

impl ReportFormat {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(ReportFormat::Csv),
            "json-lines" | "jsonl" => Some(ReportFormat::JsonLines),
            _ => None,
        }
    }

    /// Guesses from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => ReportFormat::JsonLines,
            _ => ReportFormat::Csv,
        }
    }
}

pub const CSV_HEADER: &str = "case,m,nu,n,seed,eps,dt,sup_error,status";

fn opt(x: Option<f64>) -> String {
    x.map(g17).unwrap_or_default()
}

fn json_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => g17(v),
        _ => "null".into(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn status(row: &ConvergenceRow) -> &str {
    row.error.as_deref().unwrap_or("ok")
}

pub fn write_report(out: &mut impl Write, report: &ConvergenceReport, format: ReportFormat) -> io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.case.name(),
                    r.m,
                    g17(r.nu),
                    r.n,
                    r.seed,
                    opt(r.eps),
                    opt(r.dt),
                    opt(r.sup_error),
                    csv_field(status(r))
                )?;
            }
        }
        ReportFormat::JsonLines => {
            for r in &report.rows {
                writeln!(
                    out,
                    "{{\"case\":\"{}\",\"m\":{},\"nu\":{},\"n\":{},\"seed\":{},\"eps\":{},\"dt\":{},\"sup_error\":{},\"status\":{}}}",
                    r.case.name(),
                    r.m,
                    g17(r.nu),
                    r.n,
                    r.seed,
                    json_num(r.eps),
                    json_num(r.dt),
                    json_num(r.sup_error),
                    serde_json::to_string(status(r)).expect("strings serialize")
                )?;
            }
        }
    }
    out.flush()
}

/// Writes the rows of `report`; the summary is recomputed on parse.
pub fn emit_report(report: &ConvergenceReport, format: ReportFormat, path: &Path) -> Result<(), IoError> {
    let mut out = create(path)?;
    write_report(&mut out, report, format).map_err(wrap_io(path))
}

#[derive(Deserialize)]
struct RawRow {
    case: String,
    m: usize,
    nu: f64,
    n: usize,
    seed: u64,
    eps: Option<f64>,
    dt: Option<f64>,
    sup_error: Option<f64>,
    status: String,
}

impl RawRow {
    fn into_row(self, path: &Path) -> Result<ConvergenceRow, IoError> {
        let case = Case::from_name(&self.case).ok_or_else(|| IoError::format(path, format!("unknown case {:?}", self.case)))?;
        Ok(ConvergenceRow {
            case,
            m: self.m,
            nu: self.nu,
            n: self.n,
            seed: self.seed,
            eps: self.eps,
            dt: self.dt,
            sup_error: self.sup_error,
            error: (self.status != "ok").then_some(self.status),
        })
    }
}

pub fn parse_report(path: &Path, format: ReportFormat) -> Result<ConvergenceReport, IoError> {
    let mut rows = Vec::new();
    match format {
        ReportFormat::Csv => {
            let mut rdr = crate::io::csv_reader(path)?;
            for rec in rdr.deserialize::<RawRow>() {
                let raw = rec.map_err(|source| IoError::Csv {
                    path: path.to_path_buf(),
                    source,
                })?;
                rows.push(raw.into_row(path)?);
            }
        }
        ReportFormat::JsonLines => {
            let file = std::fs::File::open(path).map_err(wrap_io(path))?;
            for line in io::BufReader::new(file).lines() {
                let line = line.map_err(wrap_io(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRow = serde_json::from_str(&line).map_err(|e| IoError::format(path, e.to_string()))?;
                rows.push(raw.into_row(path)?);
            }
        }
    }
    Ok(ConvergenceReport::from_rows(rows))
}
