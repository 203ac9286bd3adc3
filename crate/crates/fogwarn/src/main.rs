//! Command-line front end: latency-distribution fitting, synthetic scenario
//! generation, scenario statistics, single runs, and parameter sweeps.

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};

use fogwarn::error::{Error, Result};
use fogwarn::sim::{self, RunConfig, SweepAxis, SweepConfig};
use fogwarn::stable::{fit, FitConfig};
use fogwarn::trajectory::{scenario_stats, synth_scenario, write_trajectories, SynthSpec};

#[derive(Parser)]
#[command(name = "fogwarn", about = "Fog-node vehicular collision warning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit stable-distribution parameters to a latency trace (one value in
    /// milliseconds per line; `#` comments ignored).
    Fit {
        trace: PathBuf,
    },
    /// Generate a synthetic scenario from a generator spec and write it in
    /// the canonical trajectory format.
    Gen {
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output trajectory file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print scenario statistics (vehicle count, mean speed, mean
    /// acceleration) for the scenario of a run config.
    Stats {
        config: PathBuf,
    },
    /// Execute one simulation run.
    Run {
        config: PathBuf,
    },
    /// Execute a parameter sweep defined by the config's [sweep] section.
    Sweep {
        config: PathBuf,
        /// Override the sweep axis, e.g. `loss_rate=0,0.03,0.06` or
        /// `headway=1,2,3,4,5`.
        #[arg(long)]
        axis: Option<String>,
    },
}

fn read_named(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn cmd_fit(trace: &Path) -> Result<()> {
    let text = read_named(trace)?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for field in line.split_whitespace() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("non-numeric latency value {field:?}"),
            })?;
            samples.push(v);
        }
    }
    let report = fit(&samples, &FitConfig::default())?;
    let p = report.params;
    println!("samples: {}", samples.len());
    println!("alpha: {:.5}", p.alpha);
    println!("beta: {:.5}", p.beta);
    println!("mu: {:.4}", p.mu);
    println!("sigma: {:.4}", p.sigma);
    println!(
        "iterations: {} converged: {} boundary_adjusted: {}",
        report.iterations_used, report.converged, report.boundary_adjusted
    );
    Ok(())
}

fn cmd_gen(spec_path: &Path, seed: u64, out: Option<&Path>) -> Result<()> {
    let spec: SynthSpec = toml::from_str(&read_named(spec_path)?)
        .map_err(|e| Error::Config(format!("{}: bad generator spec: {e}", spec_path.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = synth_scenario(&spec, &mut rng)?;
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &scenario.vehicles)?;
    match out {
        Some(path) => {
            fs::write(path, &buf)?;
            eprintln!("wrote {} vehicles to {}", scenario.vehicles.len(), path.display());
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn cmd_stats(config_path: &Path) -> Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    let scenario = cfg.build_scenario()?;
    let stats = scenario_stats(&scenario);
    println!("vehicle_count: {}", stats.vehicle_count);
    println!("avg_speed_kmh: {:.3}", stats.avg_speed);
    println!("avg_accel_mps2: {:.4}", stats.avg_accel);
    Ok(())
}

fn cmd_run(config_path: &Path) -> Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    let report = sim::run(&cfg)?;
    print!("{}", sim::report_text(&report));
    eprintln!("wall time: {:.3} s", report.wall_time.as_secs_f64());
    Ok(())
}

#[derive(serde::Deserialize)]
struct SweepFile {
    sweep: SweepConfig,
}

fn parse_axis_override(arg: &str) -> Result<SweepAxis> {
    let (name, list) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--axis wants name=v1,v2,..., got {arg:?}")))?;
    let floats = || -> Result<Vec<f64>> {
        list.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad axis value {s:?}")))
            })
            .collect()
    };
    match name.trim() {
        "headway" => Ok(SweepAxis::Headway { values: floats()? }),
        "loss_rate" | "loss" => Ok(SweepAxis::LossRate { values: floats()? }),
        "scenario" => Ok(SweepAxis::Scenario {
            values: list.split(',').map(|s| PathBuf::from(s.trim())).collect(),
        }),
        other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
    }
}

fn cmd_sweep(config_path: &Path, axis: Option<&str>) -> Result<()> {
    let text = read_named(config_path)?;
    let base = RunConfig::from_toml_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    let mut sweep_cfg = toml::from_str::<SweepFile>(&text)
        .map_err(|e| Error::Config(format!("{}: bad [sweep] section: {e}", config_path.display())))?
        .sweep;
    if let Some(arg) = axis {
        sweep_cfg.axis = parse_axis_override(arg)?;
    }
    let result = sim::sweep(&base, &sweep_cfg)?;
    print!("{}", result.to_csv());
    for (value, algorithm, err) in &result.failures {
        eprintln!("cell failed: {}={} {}: {err}", sweep_cfg.axis.name(), value, algorithm.name());
    }
    if !result.failures.is_empty() {
        return Err(Error::Config(format!("{} sweep cell(s) failed", result.failures.len())));
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit { trace } => cmd_fit(trace),
        Command::Gen { spec, seed, out } => cmd_gen(spec, *seed, out.as_deref()),
        Command::Stats { config } => cmd_stats(config),
        Command::Run { config } => cmd_run(config),
        Command::Sweep { config, axis } => cmd_sweep(config, axis.as_deref()),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
