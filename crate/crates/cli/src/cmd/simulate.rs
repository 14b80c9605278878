//! `pirate simulate`: run the closed-loop simulator from a config file.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use pirate_sim::config::SimConfig;
use pirate_sim::simcore::{run_sim, write_truth_csv};

use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct SimulateArgs {
    /// Simulation config (TOML with [workload], [network], [server]).
    #[arg(long = "config", value_name = "FILE")]
    pub config: PathBuf,
    /// Vantage-point trace output (ingest CSV format).
    #[arg(long = "out-trace", value_name = "FILE")]
    pub out_trace: PathBuf,
    /// Ground-truth records output (CSV).
    #[arg(long = "out-truth", value_name = "FILE")]
    pub out_truth: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long = "seed")]
    pub seed: Option<u64>,
}

pub fn run(args: SimulateArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Parse(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg = SimConfig::from_toml(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.workload.seed = seed;
    }
    let out = run_sim(&cfg.workload, &cfg.network, &cfg.server)?;

    let trace = BufWriter::new(File::create(&args.out_trace)?);
    pirate_core::ingest::write_csv(trace, &out.observations).map_err(anyhow::Error::from)?;
    let truth = BufWriter::new(File::create(&args.out_truth)?);
    write_truth_csv(truth, &out.truth).map_err(anyhow::Error::from)?;

    eprintln!(
        "simulated {} connections, {} requests, {} observations",
        out.connections_opened,
        out.truth.len(),
        out.observations.len()
    );
    RunManifest::new("simulate", &cfg)
        .input(Some(&args.config))
        .output(Some(&args.out_trace))
        .output(Some(&args.out_truth))
        .seed(cfg.workload.seed)
        .write(Some(&args.out_trace))?;
    Ok(())
}
