//! CSV tables. Reals are written in their shortest round-trip form and
//! missing values as empty fields, so reading a written table gives back the
//! same rows.

use std::io::{Read, Write};
use std::path::Path;

use reshuffle::data::format_real;

use crate::error::CliError;

pub const TRAJECTORY_HEADER: [&str; 9] = [
    "method",
    "seed",
    "epoch",
    "inner_step",
    "global_step",
    "gamma",
    "f_value",
    "dist_sq",
    "grad_norm_sq",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "method",
    "epoch",
    "count",
    "f_mean",
    "f_ci",
    "dist_sq_mean",
    "dist_sq_ci",
    "grad_norm_sq_mean",
    "grad_norm_sq_ci",
];

pub const REPORT_HEADER: [&str; 11] = [
    "theorem",
    "method",
    "gamma",
    "epochs",
    "seeds",
    "rhs",
    "observed",
    "ci_halfwidth",
    "slack",
    "pass",
    "note",
];

pub const SWEEP_HEADER: [&str; 7] = [
    "tau",
    "gamma",
    "sigma_star_sq",
    "sigma_shuffle_est",
    "ci",
    "prop1_lower",
    "prop1_upper",
];

pub const DISTRIBUTION_HEADER: [&str; 4] = ["tau", "gamma", "sample", "value"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub inner_step: usize,
    pub global_step: u64,
    pub gamma: f64,
    pub f_value: Option<f64>,
    pub dist_sq: Option<f64>,
    pub grad_norm_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub epoch: usize,
    pub count: usize,
    pub f_mean: f64,
    pub f_ci: f64,
    pub dist_sq_mean: Option<f64>,
    pub dist_sq_ci: Option<f64>,
    pub grad_norm_sq_mean: f64,
    pub grad_norm_sq_ci: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub theorem: String,
    pub method: String,
    pub gamma: Option<f64>,
    pub epochs: usize,
    pub seeds: usize,
    pub rhs: Option<f64>,
    pub observed: Option<f64>,
    pub ci_halfwidth: Option<f64>,
    pub slack: f64,
    pub pass: bool,
    /// Refusal reason; empty for a completed check.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: usize,
    pub gamma: f64,
    pub sigma_star_sq: f64,
    pub sigma_shuffle_est: f64,
    pub ci: f64,
    pub prop1_lower: f64,
    pub prop1_upper: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

trait Row: Sized {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
    fn parse(fields: &Fields<'_>) -> Result<Self, String>;
}

/// Field access with typed parsing and column-named errors.
struct Fields<'a> {
    record: &'a csv::StringRecord,
    header: &'static [&'static str],
}

impl Fields<'_> {
    fn raw(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T, String> {
        let raw = self.raw(i);
        raw.parse()
            .map_err(|_| format!("column {}: cannot parse `{raw}`", self.header[i]))
    }

    fn opt_real(&self, i: usize) -> Result<Option<f64>, String> {
        if self.raw(i).is_empty() {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }

    fn text(&self, i: usize) -> String {
        self.raw(i).to_string()
    }
}

impl Row for TrajectoryRow {
    const HEADER: &'static [&'static str] = &TRAJECTORY_HEADER;

    fn fields(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            self.seed.to_string(),
            self.epoch.to_string(),
            self.inner_step.to_string(),
            self.global_step.to_string(),
            format_real(self.gamma),
            opt(self.f_value),
            opt(self.dist_sq),
            opt(self.grad_norm_sq),
        ]
    }

    fn parse(f: &Fields<'_>) -> Result<Self, String> {
        Ok(TrajectoryRow {
            method: f.text(0),
            seed: f.parse(1)?,
            epoch: f.parse(2)?,
            inner_step: f.parse(3)?,
            global_step: f.parse(4)?,
            gamma: f.parse(5)?,
            f_value: f.opt_real(6)?,
            dist_sq: f.opt_real(7)?,
            grad_norm_sq: f.opt_real(8)?,
        })
    }
}

impl Row for SummaryRow {
    const HEADER: &'static [&'static str] = &SUMMARY_HEADER;

    fn fields(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            self.epoch.to_string(),
            self.count.to_string(),
            format_real(self.f_mean),
            format_real(self.f_ci),
            opt(self.dist_sq_mean),
            opt(self.dist_sq_ci),
            format_real(self.grad_norm_sq_mean),
            format_real(self.grad_norm_sq_ci),
        ]
    }

    fn parse(f: &Fields<'_>) -> Result<Self, String> {
        Ok(SummaryRow {
            method: f.text(0),
            epoch: f.parse(1)?,
            count: f.parse(2)?,
            f_mean: f.parse(3)?,
            f_ci: f.parse(4)?,
            dist_sq_mean: f.opt_real(5)?,
            dist_sq_ci: f.opt_real(6)?,
            grad_norm_sq_mean: f.parse(7)?,
            grad_norm_sq_ci: f.parse(8)?,
        })
    }
}

impl Row for ReportRow {
    const HEADER: &'static [&'static str] = &REPORT_HEADER;

    fn fields(&self) -> Vec<String> {
        vec![
            self.theorem.clone(),
            self.method.clone(),
            opt(self.gamma),
            self.epochs.to_string(),
            self.seeds.to_string(),
            opt(self.rhs),
            opt(self.observed),
            opt(self.ci_halfwidth),
            format_real(self.slack),
            self.pass.to_string(),
            self.note.clone(),
        ]
    }

    fn parse(f: &Fields<'_>) -> Result<Self, String> {
        Ok(ReportRow {
            theorem: f.text(0),
            method: f.text(1),
            gamma: f.opt_real(2)?,
            epochs: f.parse(3)?,
            seeds: f.parse(4)?,
            rhs: f.opt_real(5)?,
            observed: f.opt_real(6)?,
            ci_halfwidth: f.opt_real(7)?,
            slack: f.parse(8)?,
            pass: f.parse(9)?,
            note: f.text(10),
        })
    }
}

impl Row for SweepRow {
    const HEADER: &'static [&'static str] = &SWEEP_HEADER;

    fn fields(&self) -> Vec<String> {
        vec![
            self.tau.to_string(),
            format_real(self.gamma),
            format_real(self.sigma_star_sq),
            format_real(self.sigma_shuffle_est),
            format_real(self.ci),
            format_real(self.prop1_lower),
            format_real(self.prop1_upper),
        ]
    }

    fn parse(f: &Fields<'_>) -> Result<Self, String> {
        Ok(SweepRow {
            tau: f.parse(0)?,
            gamma: f.parse(1)?,
            sigma_star_sq: f.parse(2)?,
            sigma_shuffle_est: f.parse(3)?,
            ci: f.parse(4)?,
            prop1_lower: f.parse(5)?,
            prop1_upper: f.parse(6)?,
        })
    }
}

fn write_rows<R: Row, W: Write>(out: W, rows: &[R]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Row, I: Read>(input: I) -> Result<Vec<R>, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(format!(
            "header mismatch: expected `{}`, found `{}`",
            R::HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut rows = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let fields = Fields {
            record: &record,
            header: R::HEADER,
        };
        // header is line 1
        rows.push(R::parse(&fields).map_err(|e| format!("line {}: {e}", k + 2))?);
    }
    Ok(rows)
}

fn to_bytes<R: Row>(rows: &[R]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory cannot fail");
    buf
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> Vec<u8> {
    to_bytes(rows)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    to_bytes(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> Vec<u8> {
    to_bytes(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    to_bytes(rows)
}

/// `(tau, gamma, samples)` per sweep row.
pub fn distribution_csv(rows: &[(usize, f64, Vec<f64>)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DISTRIBUTION_HEADER).expect("memory");
    for (tau, gamma, samples) in rows {
        for (k, v) in samples.iter().enumerate() {
            w.write_record([tau.to_string(), format_real(*gamma), k.to_string(), format_real(*v)])
                .expect("memory");
        }
    }
    w.into_inner().expect("memory")
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>, String> {
    read_rows(text.as_bytes())
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, String> {
    read_rows(text.as_bytes())
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, String> {
    read_rows(text.as_bytes())
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, String> {
    read_rows(text.as_bytes())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_summary_csv(&text).map_err(|message| CliError::Csv {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
