//! `pirate lbsim`: paired uniform vs latency-aware load-balancer runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use pirate_sim::config::LbConfig;
use pirate_sim::lbsim::run_lb_experiment;

use crate::manifest::RunManifest;
use crate::{CliError, CliResult, EstimatorFlags};

#[derive(Args)]
pub struct LbsimArgs {
    /// Experiment config (TOML with [lb], [client], [controller], [[servers]]).
    #[arg(long = "config", value_name = "FILE")]
    pub config: PathBuf,
    /// Report output path (stdout when omitted).
    #[arg(long = "out", value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Overrides the trial count from the config file.
    #[arg(long = "trials")]
    pub trials: Option<u32>,
    /// Overrides the seed from the config file.
    #[arg(long = "seed")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
}

pub fn run(args: LbsimArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Parse(format!("cannot read config {}: {e}", args.config.display())))?;
    let cfg = LbConfig::from_toml(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    let est_cfg = args.estimator.to_config().map_err(CliError::Parse)?;
    let mut spec = cfg.into_spec(est_cfg);
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let report = run_lb_experiment(&spec)?;

    let mut writer: BufWriter<Box<dyn Write>> = BufWriter::new(match &args.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout()),
    });
    serde_json::to_writer_pretty(&mut writer, &report).map_err(anyhow::Error::from)?;
    writeln!(writer)?;
    writer.flush()?;

    RunManifest::new(
        "lbsim",
        serde_json::json!({ "trials": spec.trials, "loads": spec.offered_loads, "servers": spec.servers.len() }),
    )
    .input(Some(&args.config))
    .output(args.out.as_deref())
    .seed(spec.seed)
    .write(args.out.as_deref())?;
    Ok(())
}
