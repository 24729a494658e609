use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mesoped::commands::{self, parse_populations};
use mesoped::{bundled, CliError, LoadedScenario, RunOptions};

/// Exit code for runs that stopped with agents still inside or never released.
const INCOMPLETE: u8 = 2;

#[derive(Parser)]
#[command(name = "mesoped", version, about = "Mesoscopic pedestrian simulator")]
struct Cli {
    /// Base directory for outputs when --out is not given.
    #[arg(long, global = true, env = "MESOPED_OUT", default_value = "mesoped-out")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write field, events and metrics.
    Run {
        /// Scenario file or bundled scenario name.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's max_steps (0 releases step-0 spawns only).
        #[arg(long)]
        steps: Option<u64>,
        /// Also write an ASCII density picture per step.
        #[arg(long)]
        snapshots: bool,
        /// Output directory (default: <out-root>/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the scenario's navigation field as CSV.
    ExportField {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average metrics over seeds for a range of populations.
    Sweep {
        scenario: String,
        #[arg(long, default_value = "1..50")]
        pop: String,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired sweep of a meso scenario and its 2x refined micro counterpart.
    Compare {
        meso: String,
        micro: String,
        #[arg(long, default_value = "1..50")]
        pop: String,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Flag populations whose travel times differ by more than this many seconds.
        #[arg(long)]
        band: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios.
    List,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    let root = cli.out_root;
    match cli.command {
        Command::Run {
            scenario,
            seed,
            steps,
            snapshots,
            out,
        } => {
            let loaded = LoadedScenario::load(&scenario)?;
            let out = out.unwrap_or_else(|| root.join(&loaded.config.name));
            let report = commands::run(&loaded, &RunOptions { seed, steps, snapshots }, &out)?;
            let m = &report.metrics;
            println!(
                "{}: {}/{} exited, avg travel time {} s, avg distance {} m -> {}",
                loaded.config.name,
                m.n_exited,
                m.n_agents as u32 + report.unspawned,
                fmt_opt(m.avg_travel_time_s),
                fmt_opt(m.avg_distance_m),
                out.display()
            );
            for (sink, n) in &m.per_exit_counts {
                println!("  exit {sink}: {n}");
            }
            if report.completed {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "incomplete after {} steps ({} inside, {} never released)",
                    report.steps,
                    m.n_agents - m.n_exited,
                    report.unspawned
                );
                Ok(ExitCode::from(INCOMPLETE))
            }
        }
        Command::ExportField { scenario, out } => {
            let loaded = LoadedScenario::load(&scenario)?;
            commands::export_field(&loaded, &out)?;
            println!("{}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            scenario,
            pop,
            seeds,
            out,
        } => {
            let loaded = LoadedScenario::load(&scenario)?;
            let pops = parse_populations(&pop)?;
            let out = out.unwrap_or_else(|| root.join(format!("{}-sweep", loaded.config.name)));
            let points = commands::sweep(&loaded, &pops, seeds, &out)?;
            println!("{}", out.join("metrics.csv").display());
            Ok(completion_code(points.iter().all(|p| p.completed)))
        }
        Command::Compare {
            meso,
            micro,
            pop,
            seeds,
            band,
            out,
        } => {
            let a = LoadedScenario::load(&meso)?;
            let b = LoadedScenario::load(&micro)?;
            let pops = parse_populations(&pop)?;
            let out = out.unwrap_or_else(|| root.join(format!("{}-vs-{}", a.config.name, b.config.name)));
            let cmp = commands::compare(&a, &b, &pops, seeds, &out)?;
            println!("{}", out.join("compare.csv").display());
            let outside = band.map(|b| cmp.outside_band(b)).unwrap_or_default();
            if !outside.is_empty() {
                eprintln!("travel times differ by more than {} s at populations {outside:?}", band.unwrap_or(0.0));
                return Ok(ExitCode::from(INCOMPLETE));
            }
            Ok(completion_code(cmp.meso.iter().chain(&cmp.micro).all(|p| p.completed)))
        }
        Command::List => {
            for name in bundled::names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn completion_code(completed: bool) -> ExitCode {
    if completed {
        ExitCode::SUCCESS
    } else {
        eprintln!("some runs did not complete");
        ExitCode::from(INCOMPLETE)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}
