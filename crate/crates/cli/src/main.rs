//! `aiot-cbra`: run, sweep and inspect paging-triggered random access
//! simulations.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for runtime errors.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aiot_cbra::config::{emit, emit_sweep, parse_config, ConfigFile};
use aiot_cbra::engine::{run_experiment, run_replica_traced, write_trace_jsonl, SimConfig};
use aiot_cbra::sweep::{all_rows, run_sweep, write_analytic_curves, MetricsWriter, SweepSpec, ANALYTIC_CURVES};
use aiot_cbra::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aiot-cbra", version, about = "Paging-triggered CBRA simulator for energy-harvesting Ambient-IoT devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single configuration and write metrics.csv.
    Run {
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write every paging round of replica 0 as JSON lines to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Reproduce the figure tables over (policy, N, R).
    ///
    /// Without a config file the reference sweep runs with default settings.
    /// A config without a [sweep] table is swept over the reference grid.
    Sweep {
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the closed-form curves only.
    Analytic {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Largest contender count.
        #[arg(long, default_value_t = 100)]
        k_max: u32,
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 16, 32])]
        r: Vec<u32>,
    },
    /// Check a config file and print it with all defaults filled in.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, seed, out, trace } => {
            let mut cfg = match parse_config(&config)? {
                ConfigFile::Single(cfg) => cfg,
                ConfigFile::Sweep(_) => {
                    return Err(config_error(&config, "file describes a sweep; use `aiot-cbra sweep`"))
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run(&cfg, &out, trace.as_deref())
        }
        Command::Sweep { config, seed, out } => {
            let mut spec = match config {
                None => SweepSpec::reference(SimConfig::default()),
                Some(path) => match parse_config(&path)? {
                    ConfigFile::Sweep(spec) => spec,
                    ConfigFile::Single(cfg) => SweepSpec::reference(cfg),
                },
            };
            if let Some(seed) = seed {
                spec.base.seed = seed;
            }
            spec.validate()?;
            create_out(&out)?;
            std::fs::write(out.join("sweep.toml"), emit_sweep(&spec))?;
            let summary = run_sweep(&spec, &out)?;
            println!("{} cells written to {}", summary.cells, out.display());
            for file in &summary.files {
                println!("  {}", out.join(file).display());
            }
            Ok(())
        }
        Command::Analytic { out, k_max, r } => {
            if k_max == 0 || r.is_empty() || r.contains(&0) {
                return Err(Error::Config {
                    path: None,
                    line: None,
                    message: "--k-max and every --r value must be >= 1".into(),
                });
            }
            create_out(&out)?;
            let path = out.join(ANALYTIC_CURVES);
            write_analytic_curves(BufWriter::new(File::create(&path)?), k_max, &r)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Validate { config } => {
            match parse_config(&config)? {
                ConfigFile::Single(cfg) => {
                    eprintln!("ok: single configuration");
                    print!("{}", emit(&cfg));
                }
                ConfigFile::Sweep(spec) => {
                    eprintln!("ok: sweep with {} cells", spec.cells().len());
                    print!("{}", emit_sweep(&spec));
                }
            }
            Ok(())
        }
    }
}

fn config_error(path: &Path, message: &str) -> Error {
    Error::Config {
        path: Some(path.to_path_buf()),
        line: None,
        message: message.into(),
    }
}

fn create_out(out: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn run(cfg: &SimConfig, out: &Path, trace: Option<&Path>) -> Result<(), Error> {
    cfg.validate()?;
    create_out(out)?;
    std::fs::write(out.join("config.toml"), emit(cfg))?;
    let report = run_experiment(cfg)?;
    let rows = all_rows(&report);
    let mut writer = MetricsWriter::create(out.join("metrics.csv"))?;
    writer.write_rows(&report, &rows)?;
    writer.flush()?;

    if let Some(path) = trace {
        let (_, entries) = run_replica_traced(cfg, 0)?;
        write_trace_jsonl(BufWriter::new(File::create(path)?), &entries)?;
    }

    println!(
        "policy={} N={} R={} Y={} runs={} steps={}",
        report.policy, report.n_devices, report.r, report.y, report.replicas, cfg.n_steps
    );
    for (metric, e) in rows {
        println!(
            "  {metric:<32} {:>12.6}  [{:.6}, {:.6}]",
            e.mean, e.ci95_low, e.ci95_high
        );
    }
    Ok(())
}
