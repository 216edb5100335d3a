//! Persisted run artifacts: CSV tables plus one JSON summary.
//!
//! The CSV numeric columns are a deterministic function of the config, so a
//! rerun produces byte-identical tables. The JSON summary additionally holds
//! wall-clock timing, which is the one intentionally non-reproducible field.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::runner::{Counters, RunReport};

/// Outcome of one asserted check, echoed in the summary and printed by the
/// CLI as a PASS/FAIL line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AssertionResult {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        AssertionResult { name: name.to_string(), passed, detail }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status} {name}: {detail}", name = self.name, detail = self.detail)
    }
}

#[derive(Debug, Serialize)]
struct CountersOut {
    truncated_seeds: u32,
    degenerate_steps: u64,
    total_samples: u64,
    max_samples_per_seed: u64,
}

impl From<&Counters> for CountersOut {
    fn from(c: &Counters) -> Self {
        CountersOut {
            truncated_seeds: c.truncated_seeds,
            degenerate_steps: c.degenerate_steps,
            total_samples: c.total_samples,
            max_samples_per_seed: c.max_samples_per_seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    config_sha256: String,
    seeds: usize,
    counters: CountersOut,
    assertions: Option<&'a [AssertionResult]>,
    files: Vec<String>,
    wall_ms: u128,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn predictions_csv(report: &RunReport) -> String {
    let mut out = String::from("seed,k,zeta,g,oracle,abs_err\n");
    for run in &report.seed_runs {
        for p in &run.predictions {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.seed,
                p.k,
                p.zeta,
                p.g,
                fmt_opt(p.oracle),
                fmt_opt(p.abs_err()),
            ));
        }
    }
    out
}

pub fn events_csv(report: &RunReport) -> String {
    let mut out = String::from("seed,k,eta,zeta\n");
    for run in &report.seed_runs {
        for ev in &run.events {
            out.push_str(&format!("{},{},{},{}\n", run.seed, ev.k, ev.eta, ev.zeta));
        }
    }
    out
}

pub fn curves_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "k,n_seeds,median_abs_err,mean_sq_err,bayes_gap_sq,zeta_median,bound_log2,violation_rate,ceiling\n",
    );
    for row in &report.curves.rows {
        let bound = report
            .bound_rows
            .as_ref()
            .and_then(|rows| rows.iter().find(|b| b.k == row.k));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.k,
            row.n_seeds,
            fmt_opt(row.median_abs_err),
            fmt_opt(row.mean_sq_err),
            fmt_opt(row.bayes_gap_sq),
            row.zeta_median,
            fmt_opt(bound.map(|b| b.bound_log2)),
            fmt_opt(bound.map(|b| b.rate)),
            fmt_opt(bound.map(|b| b.ceiling)),
        ));
    }
    out
}

pub fn summary_json(report: &RunReport, assertions: Option<&[AssertionResult]>, files: &[PathBuf]) -> String {
    let summary = Summary {
        config: &report.config,
        config_sha256: report.config.sha256(),
        seeds: report.seed_runs.len(),
        counters: (&report.counters).into(),
        assertions,
        files: files.iter().map(|p| p.display().to_string()).collect(),
        wall_ms: report.wall_ms,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Write the requested formats into `dir`, creating it if needed. Returns
/// the paths written.
pub fn write_report(
    report: &RunReport,
    dir: &Path,
    formats: &[OutputFormat],
    assertions: Option<&[AssertionResult]>,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        for (name, content) in [
            ("predictions.csv", predictions_csv(report)),
            ("events.csv", events_csv(report)),
            ("curves.csv", curves_csv(report)),
        ] {
            let path = dir.join(name);
            let mut f = fs::File::create(&path)?;
            f.write_all(content.as_bytes())?;
            files.push(path);
        }
    }
    if formats.contains(&OutputFormat::Json) {
        let path = dir.join("summary.json");
        let mut f = fs::File::create(&path)?;
        f.write_all(summary_json(report, assertions, &files).as_bytes())?;
        files.push(path);
    }
    Ok(files)
}
