//! `pirate ablate`: approximation-ladder errors across pipeline depths.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use pirate_sim::ablate::run_ablation;
use pirate_sim::config::SimConfig;

use crate::manifest::RunManifest;
use crate::{CliError, CliResult, EstimatorFlags};

#[derive(Args)]
pub struct AblateArgs {
    /// Simulation config describing the base workload.
    #[arg(long = "config", value_name = "FILE")]
    pub config: PathBuf,
    /// Pipeline depths to sweep.
    #[arg(long = "depths", value_delimiter = ',', default_values_t = vec![4u32, 8, 16])]
    pub depths: Vec<u32>,
    /// Summary CSV output path (stdout when omitted).
    #[arg(long = "out", value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Raw per-epoch sample CSV output path.
    #[arg(long = "samples-out", value_name = "FILE")]
    pub samples_out: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long = "seed")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
}

pub fn run(args: AblateArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Parse(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg = SimConfig::from_toml(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.workload.seed = seed;
    }
    if args.depths.is_empty() {
        return Err(CliError::Parse("--depths must name at least one depth".into()));
    }
    let est_cfg = args.estimator.to_config().map_err(CliError::Parse)?;
    let report = run_ablation(&cfg, &est_cfg, &args.depths)?;

    let mut writer: BufWriter<Box<dyn Write>> = BufWriter::new(match &args.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout()),
    });
    writeln!(
        writer,
        "depth,arm,count,median_rel_pct,median_abs_rel_pct,p5_rel_pct,p10_rel_pct,p90_rel_pct,p95_rel_pct,p95_abs_rel_pct"
    )?;
    for row in &report.rows {
        let s = &row.summary;
        writeln!(
            writer,
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            row.depth,
            row.arm.label(),
            s.count,
            s.median_rel_pct,
            s.median_abs_rel_pct,
            s.p5_rel_pct,
            s.p10_rel_pct,
            s.p90_rel_pct,
            s.p95_rel_pct,
            s.p95_abs_rel_pct,
        )?;
    }
    writer.flush()?;

    if let Some(path) = &args.samples_out {
        let mut sw = BufWriter::new(File::create(path)?);
        writeln!(sw, "depth,arm,flow,anchor_ns,baseline_ns,technique_ns,rel_error_pct")?;
        for s in &report.samples {
            writeln!(
                sw,
                "{},{},{},{},{:.3},{:.3},{:.4}",
                s.depth, s.arm.label(), s.flow, s.anchor_ns, s.baseline_ns, s.technique_ns, s.rel_error_pct
            )?;
        }
        sw.flush()?;
    }

    RunManifest::new("ablate", serde_json::json!({ "depths": args.depths, "workload": cfg.workload }))
        .input(Some(&args.config))
        .output(args.out.as_deref())
        .output(args.samples_out.as_deref())
        .seed(cfg.workload.seed)
        .write(args.out.as_deref())?;
    Ok(())
}
