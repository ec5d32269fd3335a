//! CSV formats.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use subnyq_core::experiments::{CompressionPoint, Method, SnrDb, SummaryRow, SweepSummary, TrialRecord};
use subnyq_core::signal::{DualChannelObservation, Scenario};

use crate::error::{CliError, Result};

pub const TRIAL_HEADER: [&str; 12] = [
    "snr_db",
    "compression",
    "method",
    "trial",
    "tone_idx",
    "f_true_hz",
    "f_hat_hz",
    "a_true",
    "a_hat",
    "phi_true_rad",
    "phi_hat_rad",
    "matched",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "snr_db",
    "compression",
    "method",
    "rmse_f_rel",
    "rmse_a_rel",
    "rmse_phi_rad",
    "miss_rate",
    "crb_rel",
    "rmse_over_crb",
];

pub const ESTIMATE_HEADER: [&str; 8] = [
    "method",
    "f_hat",
    "a_hat",
    "phi_hat",
    "ratio",
    "f_ratio",
    "fold_index",
    "mirror",
];

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_observation<W: Write>(w: &mut csv::Writer<W>, obs: &DualChannelObservation) -> Result<()> {
    w.write_record(["t", "x", "xdot"])?;
    for i in 0..obs.len() {
        w.write_record([fmt_f64(obs.times[i]), fmt_f64(obs.x[i]), fmt_f64(obs.xdot[i])])?;
    }
    w.flush().map_err(|e| CliError::io("<observation>", e))?;
    Ok(())
}

/// Reads `t, x, xdot` columns (any order, extra columns ignored).
pub fn read_observation(path: &Path) -> Result<DualChannelObservation> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let (ct, cx, cd) = (col("t")?, col("x")?, col("xdot")?);
    let (mut t, mut x, mut xd) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Usage(format!("{}: bad number in row {}", path.display(), t.len() + 2)))
        };
        let row = (num(ct)?, num(cx)?, num(cd)?);
        t.push(row.0);
        x.push(row.1);
        xd.push(row.2);
    }
    DualChannelObservation::from_samples(t, x, xd).map_err(CliError::InvalidConfig)
}

pub fn write_truth<W: Write>(w: &mut csv::Writer<W>, scenario: &Scenario) -> Result<()> {
    w.write_record(["tone_idx", "f_hz", "a", "phi_rad"])?;
    for (i, t) in scenario.tones.iter().enumerate() {
        w.write_record([
            i.to_string(),
            fmt_f64(t.frequency),
            fmt_f64(t.amplitude),
            fmt_f64(t.phase),
        ])?;
    }
    Ok(())
}

/// One row of the estimate schema; fold columns stay empty for OMP.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub method: Method,
    pub f_hat: f64,
    pub a_hat: f64,
    pub phi_hat: f64,
    pub ratio: Option<f64>,
    pub f_ratio: Option<f64>,
    pub fold_index: Option<u32>,
    pub mirror: Option<bool>,
}

pub fn write_estimates<W: Write>(w: &mut csv::Writer<W>, rows: &[EstimateRow]) -> Result<()> {
    w.write_record(ESTIMATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            fmt_f64(r.f_hat),
            fmt_f64(r.a_hat),
            fmt_f64(r.phi_hat),
            opt(r.ratio),
            opt(r.f_ratio),
            r.fold_index.map(|m| m.to_string()).unwrap_or_default(),
            r.mirror.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(())
}

pub fn write_trial_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(TRIAL_HEADER)?;
    Ok(())
}

/// One row per true tone.
pub fn write_trial<W: Write>(w: &mut csv::Writer<W>, rec: &TrialRecord) -> Result<()> {
    for (i, t) in rec.tones.iter().enumerate() {
        w.write_record([
            rec.snr_db.to_string(),
            fmt_f64(rec.compression),
            rec.method.to_string(),
            rec.trial.to_string(),
            i.to_string(),
            fmt_f64(t.f_true),
            opt(t.f_hat),
            fmt_f64(t.a_true),
            opt(t.a_hat),
            fmt_f64(t.phi_true),
            opt(t.phi_hat),
            t.matched().to_string(),
        ])?;
    }
    Ok(())
}

pub fn write_summary_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(SUMMARY_HEADER)?;
    Ok(())
}

pub fn write_summary_row<W: Write>(w: &mut csv::Writer<W>, row: &SummaryRow) -> Result<()> {
    w.write_record([
        row.snr_db.to_string(),
        compression_text(row.compression),
        row.method.to_string(),
        fmt_f64(row.rmse_f_rel),
        fmt_f64(row.rmse_a_rel),
        fmt_f64(row.rmse_phi_rad),
        fmt_f64(row.miss_rate),
        fmt_f64(row.crb_rel),
        fmt_f64(row.rmse_over_crb),
    ])?;
    Ok(())
}

fn compression_text(c: CompressionPoint) -> String {
    match c {
        CompressionPoint::Fixed(v) => fmt_f64(v),
        CompressionPoint::Drawn { lo, hi } => format!("{}:{}", fmt_f64(lo), fmt_f64(hi)),
    }
}

fn parse_compression(s: &str) -> Option<CompressionPoint> {
    match s.split_once(':') {
        Some((lo, hi)) => Some(CompressionPoint::Drawn {
            lo: lo.parse().ok()?,
            hi: hi.parse().ok()?,
        }),
        None => s.parse().ok().map(CompressionPoint::Fixed),
    }
}

/// Reads a summary CSV back. Trial and matched-tone counts are not part
/// of the file and come back as zero.
pub fn read_summary(path: &Path) -> Result<SweepSummary> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut idx = [0usize; 9];
    for (k, name) in SUMMARY_HEADER.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))?;
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| {
            CliError::Usage(format!("{}: row {}: bad `{col}` value", path.display(), line + 2))
        };
        let field = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(SUMMARY_HEADER[k]));
        let snr = num(0)?;
        let method = match field(2) {
            "sngem" => Method::Sngem,
            "omp" => Method::Omp,
            _ => return Err(bad("method")),
        };
        rows.push(SummaryRow {
            point: line,
            snr_db: SnrDb(snr),
            compression: parse_compression(field(1)).ok_or_else(|| bad("compression"))?,
            method,
            trials: 0,
            matched_tones: 0,
            rmse_f_rel: num(3)?,
            rmse_a_rel: num(4)?,
            rmse_phi_rad: num(5)?,
            miss_rate: num(6)?,
            crb_rel: num(7)?,
            rmse_over_crb: num(8)?,
        });
    }
    Ok(SweepSummary { rows })
}
