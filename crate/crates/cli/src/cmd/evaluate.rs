//! `pirate evaluate`: error report of estimates against ground truth.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use pirate_core::estimator::EpochEstimate;
use pirate_sim::evaluate::evaluate;
use pirate_sim::simcore::parse_truth_csv;

use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Epoch estimates as JSON lines (from `estimate`).
    #[arg(long = "estimates", value_name = "FILE")]
    pub estimates: PathBuf,
    /// Ground-truth CSV (from `simulate`).
    #[arg(long = "truth", value_name = "FILE")]
    pub truth: PathBuf,
    /// Report output path (stdout when omitted).
    #[arg(long = "out", value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Include the per-epoch error rows in the report.
    #[arg(long = "per-epoch")]
    pub per_epoch: bool,
}

pub fn run(args: EvaluateArgs) -> CliResult {
    let est_file = File::open(&args.estimates)
        .map_err(|e| CliError::Parse(format!("cannot open {}: {e}", args.estimates.display())))?;
    let mut estimates: Vec<EpochEstimate> = Vec::new();
    for (i, line) in BufReader::new(est_file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Parse(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        estimates.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Parse(format!("estimates line {}: {e}", i + 1)))?,
        );
    }
    let truth_file = File::open(&args.truth)
        .map_err(|e| CliError::Parse(format!("cannot open {}: {e}", args.truth.display())))?;
    let truth = parse_truth_csv(BufReader::new(truth_file))
        .map_err(|e| CliError::Parse(format!("truth: {e}")))?;

    let mut report = evaluate(&estimates, &truth);
    if !args.per_epoch {
        report.per_epoch.clear();
    }
    let mut writer: BufWriter<Box<dyn Write>> = BufWriter::new(match &args.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout()),
    });
    serde_json::to_writer_pretty(&mut writer, &report).map_err(anyhow::Error::from)?;
    writeln!(writer)?;
    writer.flush()?;

    RunManifest::new("evaluate", serde_json::json!({ "per_epoch": args.per_epoch }))
        .input(Some(&args.estimates))
        .input(Some(&args.truth))
        .output(args.out.as_deref())
        .write(args.out.as_deref())?;
    Ok(())
}
