//! Runs a reduced experiment from a config (default `configs/desk.json`
//! with fewer members and iterations) and prints the total-risk table.
//!
//! `cargo run --release --example experiment -- [config.json] [out_dir]`

use std::path::PathBuf;

use riskflood::experiment::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let text = include_str!("../configs/desk.json");
            let mut c = ExperimentConfig::from_json(text)?;
            c.ensemble.n_d = 6;
            c.solver.max_iters = 3;
            c
        }
    };
    let mut config = config;
    config.output_dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("riskflood-experiment"));

    let summary = run_experiment(&config, None, &mut |line| eprintln!("{line}"))?;
    print!("{}", std::fs::read_to_string(summary.dir.join("total_risk.csv"))?);
    if !summary.succeeded() {
        eprintln!("failed strategies: {:?}", summary.failures);
    }
    Ok(())
}
