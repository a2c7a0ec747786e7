use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trapopt::config::RunConfig;
use trapopt::harness::{self, HarnessError};

#[derive(Parser)]
#[command(name = "trapopt", version, about = "Closed-loop optimisation of simulated condensate transport ramps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise one ramp at the first configured duration.
    Optimize(Common),
    /// Optimise at each configured duration, warm-starting from the last.
    Sweep(Common),
    /// Induce sloshing and optimise a control window that removes it.
    Damping(Common),
    /// Write trajectory and interlaced far-field velocity traces.
    Trace {
        #[command(flatten)]
        common: Common,
        /// best.json from a run, or a JSON array of ramp parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Re-run a logged optimisation and check it matches bit for bit.
    Replay {
        /// Run directory holding manifest.json and log.jsonl.
        run: PathBuf,
    },
    /// Bin a detector event CSV (t_s,x_m,y_m) and evaluate its cost.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn fmt_cost(c: Option<f64>) -> String {
    c.map_or_else(|| "failed".to_string(), |v| format!("{v:.4e}"))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Optimize(common) => {
            let cfg = load(&common)?;
            let s = harness::cmd_optimize(&cfg)?;
            let failed = s.records.iter().filter(|r| r.failed).count();
            println!(
                "{} evaluations ({failed} failed), best cost {} -> {}",
                s.records.len(),
                fmt_cost(s.best().and_then(|b| b.cost)),
                s.dir.display()
            );
        }
        Command::Sweep(common) => {
            let cfg = load(&common)?;
            for row in harness::cmd_sweep(&cfg)? {
                println!(
                    "{:>8.1} ms  {:<22} best {}  ({} failed of {})  {}",
                    row.duration * 1e3,
                    row.kind,
                    fmt_cost(row.best_cost),
                    row.failed,
                    row.evaluations,
                    row.status
                );
            }
        }
        Command::Damping(common) => {
            let cfg = load(&common)?;
            let (_, r) = harness::cmd_damping(&cfg)?;
            println!(
                "cost {} -> {} (x{:.2}); x amplitude {:.2} mm -> {:.2} mm (x{:.2}); COM energy x{:.2}",
                fmt_cost(r.initial_cost),
                fmt_cost(r.final_cost),
                r.cost_ratio.unwrap_or(f64::NAN),
                r.initial_amplitude_x * 1e3,
                r.final_amplitude_x * 1e3,
                r.amplitude_ratio,
                r.energy_ratio
            );
        }
        Command::Trace { common, params } => {
            let cfg = load(&common)?;
            let p = params.as_deref().map(harness::read_params).transpose()?;
            let dir = harness::cmd_trace(&cfg, p.as_deref())?;
            println!("trace written to {}", dir.display());
        }
        Command::Replay { run } => {
            let r = harness::cmd_replay(&run)?;
            println!("replay ok: {} evaluations identical", r.evaluations);
        }
        Command::Ingest { common, events } => {
            let cfg = load(&common)?;
            let r = harness::cmd_ingest(&cfg, &events)?;
            println!(
                "{} events in {} pulses ({} outside any pulse), cost {}",
                r.events,
                r.pulses,
                r.dropped,
                fmt_cost(r.cost)
            );
        }
    }
    Ok(())
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config(_) | HarnessError::Invalid(_) => 2,
        HarnessError::Io { .. } => 3,
        HarnessError::ReplayMismatch { .. } => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
