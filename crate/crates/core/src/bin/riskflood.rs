use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use riskflood::ensemble;
use riskflood::experiment::{
    num, prepare, read_schedule, report, run_experiment, simulate_strategy, ExperimentConfig, ExperimentError,
};

#[derive(Parser)]
#[command(name = "riskflood", version, about = "Risk-averse waterflooding optimization experiments")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the permeability ensemble into <out>/ensemble.
    GenEnsemble { config: PathBuf },
    /// Print per-member NPV of one strategy as CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        strategy: String,
        /// Control schedule CSV, required for optimized strategies.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Optimize one strategy and write its report.
    Optimize {
        config: PathBuf,
        #[arg(long)]
        strategy: String,
    },
    /// Run every strategy and write the full report.
    Run { config: PathBuf },
    /// Recompute the KPI tables of an output directory.
    Report { dir: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn execute(cli: &Cli) -> Result<bool, ExperimentError> {
    match &cli.command {
        Command::GenEnsemble { config } => {
            let config = load(config, cli)?;
            let e = ensemble::generate(&config.ensemble_spec())?;
            let dir = config.output_dir.join("ensemble");
            ensemble::save(&e, &dir)?;
            log(&format!("wrote {} members to {}", e.len(), dir.display()));
            Ok(true)
        }
        Command::Simulate { config, strategy, schedule } => {
            let config = load(config, cli)?;
            let s = config.strategy(strategy).ok_or_else(|| ExperimentError::UnknownStrategy(strategy.clone()))?;
            let schedule = schedule.as_deref().map(|p| read_schedule(p, config.control.q_max)).transpose()?;
            let p = prepare(&config)?;
            let npv = simulate_strategy(&p, &s, schedule.as_ref())?;
            println!("scenario,{}", s.name);
            for (i, v) in npv.iter().enumerate() {
                println!("{i},{}", num(*v));
            }
            Ok(true)
        }
        Command::Optimize { config, strategy } => {
            let config = load(config, cli)?;
            let summary = run_experiment(&config, Some(std::slice::from_ref(strategy)), &mut log)?;
            Ok(summary.succeeded())
        }
        Command::Run { config } => {
            let config = load(config, cli)?;
            let summary = run_experiment(&config, None, &mut log)?;
            Ok(summary.succeeded())
        }
        Command::Report { dir } => {
            let table = report(dir)?;
            log(&format!("recomputed KPI tables for {} strategies in {}", table.names.len(), dir.display()));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let usage = e.is_usage()
                || matches!(&e, ExperimentError::Io { path, .. } if matches!(&cli.command,
                    Command::GenEnsemble { config } | Command::Simulate { config, .. }
                    | Command::Optimize { config, .. } | Command::Run { config } if config == path));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
