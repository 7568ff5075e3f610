//! Sweeps over `(policy, N, R)` and the CSV tables they produce.
//!
//! All tables share the long format
//!
//! ```text
//! policy,N,R,metric,mean,ci95_low,ci95_high
//! ```
//!
//! with one row per cell and metric. Infinite delays are written as `inf`.
//! The ideal scheduler only appears in the delay table.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::analytics::analytic_point;
use crate::engine::{run_experiment_with, Execution, MetricsReport, SimConfig};
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::stats::Estimate;

/// Version of the CSV column layout, bumped on any change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const METRICS_HEADER: [&str; 7] = ["policy", "N", "R", "metric", "mean", "ci95_low", "ci95_high"];
pub const ANALYTIC_HEADER: [&str; 6] = ["K", "R", "p_col", "e_ns", "e_ns_approx", "mean_rounds"];

pub const FIG4_COLLISION: &str = "fig4_collision.csv";
pub const FIG4_MSG2: &str = "fig4_msg2.csv";
pub const FIG5_ROUNDS: &str = "fig5_rounds.csv";
pub const ANALYTIC_CURVES: &str = "analytic_curves.csv";

/// The cartesian grid of a sweep, on top of a base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub n_values: Vec<u32>,
    pub r_values: Vec<u32>,
    pub policies: Vec<PolicyKind>,
    pub base: SimConfig,
}

impl SweepSpec {
    pub fn default_n_values() -> Vec<u32> {
        (1..=10).map(|i| 10 * i).collect()
    }

    pub fn default_r_values() -> Vec<u32> {
        vec![8, 16, 32]
    }

    /// The full reference sweep on top of `base`.
    pub fn reference(base: SimConfig) -> Self {
        Self {
            n_values: Self::default_n_values(),
            r_values: Self::default_r_values(),
            policies: PolicyKind::ALL.to_vec(),
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::invalid("n_values", "must not be empty"));
        }
        if self.r_values.is_empty() {
            return Err(Error::invalid("r_values", "must not be empty"));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("policies", "must not be empty"));
        }
        for cfg in self.cells() {
            cfg.validate().map_err(|e| Error::Cell {
                policy: cfg.policy.to_string(),
                n: cfg.n_devices,
                r: cfg.grid.r,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    /// One configuration per cell, ordered by policy, then R, then N.
    pub fn cells(&self) -> Vec<SimConfig> {
        let mut out = Vec::with_capacity(self.policies.len() * self.r_values.len() * self.n_values.len());
        for &policy in &self.policies {
            for &r in &self.r_values {
                for &n in &self.n_values {
                    let mut cfg = self.base.clone();
                    cfg.policy = policy;
                    cfg.grid.r = r;
                    cfg.n_devices = n;
                    out.push(cfg);
                }
            }
        }
        out
    }
}

/// Formats a value for the CSV tables.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        x.to_string()
    }
}

/// The `(metric, estimate)` rows each table takes from one report.
fn collision_rows(r: &MetricsReport) -> Vec<(&'static str, Estimate)> {
    vec![("collision_prob", r.collision_prob)]
}

fn msg2_rows(r: &MetricsReport) -> Vec<(&'static str, Estimate)> {
    vec![
        ("msg2_per_used_ao", r.msg2_per_used_ao),
        ("msg2_per_configured_ao", r.msg2_per_configured_ao),
    ]
}

fn rounds_rows(r: &MetricsReport) -> Vec<(&'static str, Estimate)> {
    vec![
        ("mean_paging_rounds_per_report", r.mean_paging_rounds_per_report),
        ("rounds_analytic", r.mean_paging_rounds_analytic),
    ]
}

/// Every metric of a single report, for `run` output.
pub fn all_rows(r: &MetricsReport) -> Vec<(&'static str, Estimate)> {
    let count = |x: u64| {
        let x = x as f64;
        Estimate {
            mean: x,
            ci95_low: x,
            ci95_high: x,
            samples: r.replicas,
        }
    };
    let mut rows = collision_rows(r);
    rows.extend(msg2_rows(r));
    rows.extend(rounds_rows(r));
    rows.push(("mean_attempters", r.mean_attempters));
    rows.push(("mean_eligible", r.mean_eligible));
    rows.push(("rounds_executed", count(r.rounds_executed)));
    rows.push(("attempts_total", count(r.attempts_total)));
    rows.push(("successes_total", count(r.successes_total)));
    rows
}

/// CSV writer for the long metric format.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink);
        inner.write_record(METRICS_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write_rows(&mut self, report: &MetricsReport, rows: &[(&str, Estimate)]) -> Result<()> {
        for (metric, e) in rows {
            self.inner.write_record([
                report.policy.as_str(),
                &report.n_devices.to_string(),
                &report.r.to_string(),
                metric,
                &format_value(e.mean),
                &format_value(e.ci95_low),
                &format_value(e.ci95_high),
            ])?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Writes the closed-form table for `K = 1..=k_max` and every `R`.
pub fn write_analytic_curves<W: Write>(sink: W, k_max: u32, r_values: &[u32]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink);
    w.write_record(ANALYTIC_HEADER)?;
    for &r in r_values {
        for k in 1..=k_max {
            let p = analytic_point(k, r);
            w.write_record([
                k.to_string(),
                r.to_string(),
                format_value(p.p_col),
                format_value(p.e_ns),
                format_value(p.e_ns_approx),
                format_value(p.mean_rounds),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// What a sweep wrote.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub cells: usize,
    pub files: Vec<String>,
    #[serde(skip)]
    pub reports: Vec<MetricsReport>,
}

/// Runs every cell and writes the figure tables into `out_dir`.
pub fn run_sweep(spec: &SweepSpec, out_dir: impl AsRef<Path>) -> Result<SweepSummary> {
    run_sweep_with(spec, out_dir, Execution::Parallel)
}

/// Cells run one after another in a fixed order, each with its replicas
/// spread over the worker pool; rows are flushed as each cell completes.
pub fn run_sweep_with(
    spec: &SweepSpec,
    out_dir: impl AsRef<Path>,
    execution: Execution,
) -> Result<SweepSummary> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let k_max = spec.n_values.iter().copied().max().unwrap_or(1);
    write_analytic_curves(
        BufWriter::new(File::create(out_dir.join(ANALYTIC_CURVES))?),
        k_max,
        &spec.r_values,
    )?;

    let mut collision = MetricsWriter::create(out_dir.join(FIG4_COLLISION))?;
    let mut msg2 = MetricsWriter::create(out_dir.join(FIG4_MSG2))?;
    let mut rounds = MetricsWriter::create(out_dir.join(FIG5_ROUNDS))?;
    let mut reports = Vec::new();
    for cfg in spec.cells() {
        let report = run_experiment_with(&cfg, execution).map_err(|e| Error::Cell {
            policy: cfg.policy.to_string(),
            n: cfg.n_devices,
            r: cfg.grid.r,
            source: Box::new(e),
        })?;
        if !report.policy.is_ideal() {
            collision.write_rows(&report, &collision_rows(&report))?;
            msg2.write_rows(&report, &msg2_rows(&report))?;
            collision.flush()?;
            msg2.flush()?;
        }
        rounds.write_rows(&report, &rounds_rows(&report))?;
        rounds.flush()?;
        reports.push(report);
    }
    Ok(SweepSummary {
        schema_version: CSV_SCHEMA_VERSION,
        cells: reports.len(),
        files: [FIG4_COLLISION, FIG4_MSG2, FIG5_ROUNDS, ANALYTIC_CURVES]
            .map(String::from)
            .to_vec(),
        reports,
    })
}
