//! Metric report export as CSV or `key = value` text.
//!
//! Numbers are printed with 6 significant digits. Columns are fixed and every
//! row carries the config hash of the run that produced it.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::MetricReport;

pub const COLUMNS: [&str; 10] = [
    "label",
    "config_hash",
    "forgetting_similarity",
    "forgotten",
    "per_seed_l2",
    "ssim",
    "frechet_pre",
    "frechet_floor",
    "frechet_real",
    "n_seeds",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no reports to export")]
    Empty,
    #[error("I/O failure on {path}: {reason}")]
    IoFailure { path: PathBuf, reason: String },
    #[error("malformed report at record {record}: {reason}")]
    Parse { record: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    KvText,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::KvText => "txt",
        }
    }
}

/// `x` rounded to 6 significant digits, fixed-point for moderate magnitudes
/// and scientific otherwise, without trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') { fixed.trim_end_matches('0').trim_end_matches('.').to_string() } else { fixed }
    } else {
        let m = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
        format!("{m}e{exp}")
    }
}

fn values(r: &MetricReport) -> [String; 10] {
    [
        r.label.clone(),
        r.config_hash.clone(),
        fmt_sig(r.forgetting_similarity),
        r.forgotten.to_string(),
        fmt_sig(r.per_seed_l2),
        fmt_sig(r.ssim),
        fmt_sig(r.frechet_pre),
        fmt_sig(r.frechet_floor),
        fmt_sig(r.frechet_real),
        r.n_seeds.to_string(),
    ]
}

fn from_values(record: usize, v: &[&str]) -> Result<MetricReport, ReportError> {
    if v.len() != COLUMNS.len() {
        return Err(ReportError::Parse { record, reason: format!("expected {} fields, found {}", COLUMNS.len(), v.len()) });
    }
    let real = |k: usize| v[k].parse::<f64>().map_err(|_| ReportError::Parse { record, reason: format!("{} is not a number: `{}`", COLUMNS[k], v[k]) });
    Ok(MetricReport {
        label: v[0].to_string(),
        config_hash: v[1].to_string(),
        forgetting_similarity: real(2)?,
        forgotten: v[3].parse().map_err(|_| ReportError::Parse { record, reason: format!("forgotten is not a flag: `{}`", v[3]) })?,
        per_seed_l2: real(4)?,
        ssim: real(5)?,
        frechet_pre: real(6)?,
        frechet_floor: real(7)?,
        frechet_real: real(8)?,
        n_seeds: v[9].parse().map_err(|_| ReportError::Parse { record, reason: format!("n_seeds is not a count: `{}`", v[9]) })?,
    })
}

pub fn to_csv(reports: &[MetricReport]) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| ReportError::IoFailure { path: PathBuf::from("<memory>"), reason: e.to_string() };
    w.write_record(COLUMNS).map_err(wrap)?;
    for r in reports {
        w.write_record(values(r)).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::IoFailure { path: PathBuf::from("<memory>"), reason: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricReport>, ReportError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| ReportError::Parse { record: 0, reason: e.to_string() })?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(ReportError::Parse { record: 0, reason: "unexpected header".into() });
    }
    rd.records()
        .enumerate()
        .map(|(k, rec)| {
            let rec = rec.map_err(|e| ReportError::Parse { record: k + 1, reason: e.to_string() })?;
            from_values(k + 1, &rec.iter().collect::<Vec<_>>())
        })
        .collect()
}

/// One `[label]` block per report with `key = value` lines.
pub fn to_kv(reports: &[MetricReport]) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut out = String::new();
    for (k, r) in reports.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let v = values(r);
        out.push_str(&format!("[{}]\n", v[0]));
        for (name, value) in COLUMNS.iter().zip(&v).skip(1) {
            out.push_str(&format!("{name} = {value}\n"));
        }
    }
    Ok(out)
}

pub fn parse_kv(text: &str) -> Result<Vec<MetricReport>, ReportError> {
    let mut blocks: Vec<Vec<(String, String)>> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(label) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            blocks.push(vec![("label".into(), label.into())]);
        } else {
            let (k, v) = line.split_once('=').ok_or_else(|| ReportError::Parse { record: blocks.len(), reason: format!("bad line `{line}`") })?;
            blocks
                .last_mut()
                .ok_or_else(|| ReportError::Parse { record: 0, reason: "value before first [label]".into() })?
                .push((k.trim().into(), v.trim().into()));
        }
    }
    blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let fields: Vec<&str> = COLUMNS
                .iter()
                .map(|c| b.iter().find(|(n, _)| n == c).map(|(_, v)| v.as_str()).unwrap_or(""))
                .collect();
            from_values(k + 1, &fields)
        })
        .collect()
}

pub fn export_report(reports: &[MetricReport], fmt: ReportFormat, path: &Path) -> Result<(), ReportError> {
    let text = match fmt {
        ReportFormat::Csv => to_csv(reports)?,
        ReportFormat::KvText => to_kv(reports)?,
    };
    std::fs::write(path, text).map_err(|e| ReportError::IoFailure { path: path.to_path_buf(), reason: e.to_string() })
}
