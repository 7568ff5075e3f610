//! TOML configuration files.
//!
//! Every key is optional; omitted keys take the reference defaults. A file with
//! a `[sweep]` table describes a sweep over `(policy, N, R)`, otherwise a single
//! configuration.
//!
//! ```toml
//! seed = 7
//! n_devices = 40
//! policy = "eh_aware"
//! n_steps = 20000
//! n_runs = 25
//!
//! [grid]
//! r = 16
//!
//! [harvest]
//! kind = "constant"
//! current = 1e-4
//!
//! [sweep]
//! n_values = [10, 20, 30]
//! r_values = [8, 16]
//! policies = ["naive", "eh_aware"]
//! ```
//!
//! Unknown keys are rejected. Errors point at the offending line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{HarvestProfile, HarvestTrace, PowerProfile};
use crate::engine::{DivisorMode, InitialVoltage, OverflowEnergy, SimConfig};
use crate::error::{Error, Result};
use crate::policy::{PolicyKind, ReaderPrior};
use crate::protocol::AccessOccasionGrid;
use crate::sweep::SweepSpec;

/// Contents of a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Single(SimConfig),
    Sweep(SweepSpec),
}

impl ConfigFile {
    /// The single configuration, or the sweep's base configuration.
    pub fn base(&self) -> &SimConfig {
        match self {
            ConfigFile::Single(cfg) => cfg,
            ConfigFile::Sweep(spec) => &spec.base,
        }
    }

    pub fn base_mut(&mut self) -> &mut SimConfig {
        match self {
            ConfigFile::Single(cfg) => cfg,
            ConfigFile::Sweep(spec) => &mut spec.base,
        }
    }
}

/// Seeds above `i64::MAX` do not fit a TOML integer and are written as strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawSeed {
    Int(u64),
    Text(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum HarvestKind {
    Constant,
    Trace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarvest {
    kind: Option<HarvestKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    current: Option<f64>,
    /// CSV file, relative to the configuration file.
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    start: u32,
    stop: u32,
    #[serde(default = "one")]
    step: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_values: Option<Vec<u32>>,
    /// Inclusive range, an alternative to `n_values`.
    #[serde(skip_serializing_if = "Option::is_none")]
    n_range: Option<RawRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_values: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policies: Option<Vec<PolicyKind>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    r: Option<u32>,
    y: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<RawSeed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_devices: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_r2d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_runs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacitance_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divisor_mode: Option<DivisorMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_voltage: Option<InitialVoltage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reader_prior: Option<ReaderPrior>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ideal_overflow: Option<OverflowEnergy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<RawGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power: Option<PowerProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    harvest: Option<RawHarvest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<RawSweep>,
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: Some(path.to_path_buf()),
        line: None,
        message: format!("cannot read file: {e}"),
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, Some(base_dir)).map_err(|e| match e {
        Error::Config { path: None, line, message } => Error::Config {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })
}

/// Parses configuration text. Relative trace paths resolve against `base_dir`
/// (the working directory when `None`).
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<ConfigFile> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        path: None,
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    build(raw, text, base_dir).map_err(|e| locate(e, text))
}

fn build(raw: RawConfig, text: &str, base_dir: Option<&Path>) -> Result<ConfigFile> {
    let d = SimConfig::default();
    let seed = match raw.seed {
        None => d.seed,
        Some(RawSeed::Int(s)) => s,
        Some(RawSeed::Text(s)) => s
            .trim()
            .parse()
            .map_err(|_| Error::invalid("seed", format!("`{s}` is not a 64-bit unsigned integer")))?,
    };
    let grid = raw.grid.unwrap_or_default();
    let cfg = SimConfig {
        n_devices: raw.n_devices.unwrap_or(d.n_devices),
        grid: AccessOccasionGrid {
            r: grid.r.unwrap_or(d.grid.r),
            y: grid.y.unwrap_or(d.grid.y),
        },
        policy: raw.policy.unwrap_or(d.policy),
        p_r2d: raw.p_r2d.unwrap_or(d.p_r2d),
        step_seconds: raw.step_seconds.unwrap_or(d.step_seconds),
        n_steps: raw.n_steps.unwrap_or(d.n_steps),
        n_runs: raw.n_runs.unwrap_or(d.n_runs),
        seed,
        power: raw.power.unwrap_or(d.power),
        harvest: match raw.harvest {
            None => d.harvest,
            Some(h) => build_harvest(h, text, base_dir)?,
        },
        capacitance_range: raw.capacitance_range.unwrap_or(d.capacitance_range),
        divisor_mode: raw.divisor_mode.unwrap_or(d.divisor_mode),
        warmup_fraction: raw.warmup_fraction.unwrap_or(d.warmup_fraction),
        initial_voltage: raw.initial_voltage.unwrap_or(d.initial_voltage),
        reader_prior: raw.reader_prior.unwrap_or(d.reader_prior),
        ideal_overflow: raw.ideal_overflow.unwrap_or(d.ideal_overflow),
    };
    match raw.sweep {
        None => {
            cfg.validate()?;
            Ok(ConfigFile::Single(cfg))
        }
        Some(sweep) => {
            let n_values = match (sweep.n_values, sweep.n_range) {
                (Some(_), Some(_)) => {
                    return Err(Error::config("set either sweep.n_values or sweep.n_range, not both"))
                }
                (Some(v), None) => v,
                (None, Some(r)) => {
                    if r.step == 0 || r.start > r.stop {
                        return Err(Error::invalid(
                            "n_range",
                            "need start <= stop and step >= 1",
                        ));
                    }
                    (r.start..=r.stop).step_by(r.step as usize).collect()
                }
                (None, None) => SweepSpec::default_n_values(),
            };
            let spec = SweepSpec {
                n_values,
                r_values: sweep.r_values.unwrap_or_else(SweepSpec::default_r_values),
                policies: sweep.policies.unwrap_or_else(|| PolicyKind::ALL.to_vec()),
                base: cfg,
            };
            spec.validate()?;
            Ok(ConfigFile::Sweep(spec))
        }
    }
}

fn build_harvest(h: RawHarvest, text: &str, base_dir: Option<&Path>) -> Result<HarvestProfile> {
    let kind = h
        .kind
        .ok_or_else(|| Error::config("harvest: missing `kind` (\"constant\" or \"trace\")"))?;
    match kind {
        HarvestKind::Constant => {
            if h.path.is_some() || h.samples.is_some() {
                return Err(Error::config(
                    "harvest: `path` and `samples` only apply to kind = \"trace\"",
                ));
            }
            let current = h
                .current
                .ok_or_else(|| Error::config("harvest: kind = \"constant\" requires `current`"))?;
            HarvestProfile::constant(current)
        }
        HarvestKind::Trace => {
            if h.current.is_some() {
                return Err(Error::config("harvest: `current` only applies to kind = \"constant\""));
            }
            let trace = match (h.path, h.samples) {
                (Some(p), None) => {
                    let full = match base_dir {
                        Some(dir) if p.is_relative() => dir.join(&p),
                        _ => p.clone(),
                    };
                    HarvestTrace::from_csv_path(&full).map_err(|e| Error::Config {
                        path: None,
                        line: find_key_line(text, "path"),
                        message: format!("harvest trace {}: {e}", full.display()),
                    })?
                }
                (None, Some(samples)) => HarvestTrace::new(samples)?,
                _ => {
                    return Err(Error::config(
                        "harvest: kind = \"trace\" requires exactly one of `path` or `samples`",
                    ))
                }
            };
            Ok(HarvestProfile::Trace(trace))
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line assigning `key` (the last component of a dotted name).
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let key = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|line| {
        line.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Turns validation errors into config errors pointing at the key's line.
fn locate(err: Error, text: &str) -> Error {
    match err {
        Error::InvalidParameter { name, reason } => Error::Config {
            path: None,
            line: find_key_line(text, name),
            message: format!("invalid `{name}`: {reason}"),
        },
        Error::Trace(msg) => Error::Config {
            path: None,
            line: find_key_line(text, "samples"),
            message: format!("harvest trace: {msg}"),
        },
        Error::Cell { policy, n, r, source } => match locate(*source, text) {
            Error::Config { path, line, message } => Error::Config {
                path,
                line,
                message: format!("sweep cell (policy={policy}, N={n}, R={r}): {message}"),
            },
            other => other,
        },
        other => other,
    }
}

fn raw_of(cfg: &SimConfig) -> RawConfig {
    let seed = if cfg.seed <= i64::MAX as u64 {
        RawSeed::Int(cfg.seed)
    } else {
        RawSeed::Text(cfg.seed.to_string())
    };
    let harvest = match &cfg.harvest {
        HarvestProfile::Constant { current } => RawHarvest {
            kind: Some(HarvestKind::Constant),
            current: Some(*current),
            path: None,
            samples: None,
        },
        HarvestProfile::Trace(trace) => RawHarvest {
            kind: Some(HarvestKind::Trace),
            current: None,
            path: None,
            samples: Some(trace.samples().collect()),
        },
    };
    RawConfig {
        seed: Some(seed),
        n_devices: Some(cfg.n_devices),
        policy: Some(cfg.policy),
        p_r2d: Some(cfg.p_r2d),
        step_seconds: Some(cfg.step_seconds),
        n_steps: Some(cfg.n_steps),
        n_runs: Some(cfg.n_runs),
        capacitance_range: Some(cfg.capacitance_range),
        divisor_mode: Some(cfg.divisor_mode),
        warmup_fraction: Some(cfg.warmup_fraction),
        initial_voltage: Some(cfg.initial_voltage),
        reader_prior: Some(cfg.reader_prior),
        ideal_overflow: Some(cfg.ideal_overflow),
        grid: Some(RawGrid {
            r: Some(cfg.grid.r),
            y: Some(cfg.grid.y),
        }),
        power: Some(cfg.power),
        harvest: Some(harvest),
        sweep: None,
    }
}

fn to_toml(raw: &RawConfig) -> String {
    toml::to_string_pretty(raw).expect("configuration types always serialize to TOML")
}

/// Writes `cfg` as a complete TOML document. Trace harvest profiles are
/// written inline so the document stands alone.
pub fn emit(cfg: &SimConfig) -> String {
    to_toml(&raw_of(cfg))
}

/// Writes a sweep specification as a complete TOML document.
pub fn emit_sweep(spec: &SweepSpec) -> String {
    let mut raw = raw_of(&spec.base);
    raw.sweep = Some(RawSweep {
        n_values: Some(spec.n_values.clone()),
        n_range: None,
        r_values: Some(spec.r_values.clone()),
        policies: Some(spec.policies.clone()),
    });
    to_toml(&raw)
}

/// Writes whichever kind of configuration `file` holds.
pub fn emit_file(file: &ConfigFile) -> String {
    match file {
        ConfigFile::Single(cfg) => emit(cfg),
        ConfigFile::Sweep(spec) => emit_sweep(spec),
    }
}
