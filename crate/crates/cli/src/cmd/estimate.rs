//! `pirate estimate`: packet trace in, latency estimates out.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;

use clap::Args;
use indexmap::IndexMap;
use pirate_core::estimator::run_estimator;
use pirate_core::gapthresh::{BatchTracker, LatencySample};
use pirate_core::ingest::{self, FlowKey, KeyMode, PacketObservation};

use crate::manifest::RunManifest;
use crate::{Algorithm, CliError, CliResult, EstimatorFlags, KeyModeArg};

#[derive(Args)]
pub struct EstimateArgs {
    /// Input trace; pcap or CSV, detected by content.
    #[arg(long = "input", value_name = "FILE", required_unless_present = "csv")]
    pub input: Option<PathBuf>,
    /// Input trace, forced to the CSV format.
    #[arg(long = "csv", value_name = "FILE", conflicts_with = "input")]
    pub csv: Option<PathBuf>,
    /// Output path for JSON-lines records (stdout when omitted).
    #[arg(long = "out", value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
    #[arg(long = "algorithm", value_enum, default_value = "pirate")]
    pub algorithm: Algorithm,
    /// Fixed gap threshold in microseconds (fixed-threshold algorithm).
    #[arg(long = "delta-us")]
    pub delta_us: Option<f64>,
    /// MTU for full-size packet classification (pcap input).
    #[arg(long = "mtu", default_value_t = 1500)]
    pub mtu: u32,
    /// Flow key granularity (pcap input).
    #[arg(long = "key-mode", value_enum, default_value = "five-tuple")]
    pub key_mode: KeyModeArg,
}

pub fn run(args: EstimateArgs) -> CliResult {
    let cfg = args.estimator.to_config().map_err(CliError::Parse)?;
    let path = args.input.as_ref().or(args.csv.as_ref()).expect("clap enforces one input");
    let file = File::open(path)
        .map_err(|e| CliError::Parse(format!("cannot open input {}: {e}", path.display())))?;

    let observations = if args.csv.is_some() {
        parse_csv_file(file)?
    } else {
        let mut reader = BufReader::new(file);
        if looks_like_pcap(&mut reader)? {
            let key_mode = match args.key_mode {
                KeyModeArg::FiveTuple => KeyMode::FiveTuple,
                KeyModeArg::IpPair => KeyMode::IpPair,
            };
            let parsed = ingest::parse_pcap(reader, |_| true, key_mode, args.mtu)
                .map_err(|e| CliError::Parse(format!("pcap: {e}")))?;
            if parsed.skipped_frames > 0 {
                eprintln!("warning: skipped {} undissectable frames", parsed.skipped_frames);
            }
            parsed.observations
        } else {
            parse_csv_file(reader)?
        }
    };

    let mut writer: BufWriter<Box<dyn Write>> = BufWriter::new(match &args.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout()),
    });

    match args.algorithm {
        Algorithm::Pirate => {
            let records = run_estimator(observations, &cfg)
                .map_err(|e| CliError::Contract(e.to_string()))?;
            for rec in &records {
                serde_json::to_writer(&mut writer, rec).map_err(anyhow::Error::from)?;
                writeln!(writer)?;
            }
        }
        Algorithm::FixedThreshold => {
            let delta_us = args
                .delta_us
                .ok_or_else(|| CliError::Parse("--delta-us is required with --algorithm fixed-threshold".into()))?;
            let delta_ns = (delta_us * 1e3).round() as u64;
            if delta_ns == 0 {
                return Err(CliError::Parse("--delta-us must be positive".into()));
            }
            let mut trackers: IndexMap<FlowKey, BatchTracker> = IndexMap::new();
            for obs in &observations {
                let tracker = trackers.entry(obs.flow.clone()).or_default();
                if let Some(value_ns) = tracker
                    .observe(obs.timestamp_ns, delta_ns)
                    .map_err(|e| CliError::Contract(e.to_string()))?
                {
                    let rec = LatencySample {
                        flow: obs.flow.clone(),
                        value_ns,
                        emitted_at_ns: obs.timestamp_ns,
                    };
                    serde_json::to_writer(&mut writer, &rec).map_err(anyhow::Error::from)?;
                    writeln!(writer)?;
                }
            }
        }
    }
    writer.flush()?;

    RunManifest::new("estimate", EstimateManifest::from(&args))
        .input(args.input.as_deref())
        .input(args.csv.as_deref())
        .output(args.out.as_deref())
        .write(args.out.as_deref())?;
    Ok(())
}

#[derive(serde::Serialize)]
struct EstimateManifest {
    algorithm: &'static str,
    epoch_ms: f64,
    modes: usize,
    eps_floor_us: f64,
    eps_frac: f64,
    rto_floor_ms: f64,
    idle_floor_ms: f64,
    ack_coalescing: bool,
    mtu_marking: bool,
    delta_us: Option<f64>,
    mtu: u32,
    key_mode: &'static str,
}

impl From<&EstimateArgs> for EstimateManifest {
    fn from(a: &EstimateArgs) -> Self {
        EstimateManifest {
            algorithm: match a.algorithm {
                Algorithm::Pirate => "pirate",
                Algorithm::FixedThreshold => "fixed-threshold",
            },
            epoch_ms: a.estimator.epoch_ms,
            modes: a.estimator.modes,
            eps_floor_us: a.estimator.eps_floor_us,
            eps_frac: a.estimator.eps_frac,
            rto_floor_ms: a.estimator.rto_floor_ms,
            idle_floor_ms: a.estimator.idle_floor_ms,
            ack_coalescing: !a.estimator.no_ack_coalescing,
            mtu_marking: !a.estimator.no_mtu_marking,
            delta_us: a.delta_us,
            mtu: a.mtu,
            key_mode: match a.key_mode {
                KeyModeArg::FiveTuple => "five-tuple",
                KeyModeArg::IpPair => "ip-pair",
            },
        }
    }
}

fn looks_like_pcap(reader: &mut (impl BufRead + Seek)) -> Result<bool, CliError> {
    let mut magic = [0u8; 4];
    let n = reader.read(&mut magic).map_err(|e| CliError::Parse(e.to_string()))?;
    reader.seek(SeekFrom::Start(0)).map_err(|e| CliError::Parse(e.to_string()))?;
    if n < 4 {
        return Ok(false);
    }
    let le = u32::from_le_bytes(magic);
    let be = u32::from_be_bytes(magic);
    Ok([0xa1b2_c3d4, 0xa1b2_3c4d].contains(&le) || [0xa1b2_c3d4, 0xa1b2_3c4d].contains(&be))
}

fn parse_csv_file(reader: impl Read) -> Result<Vec<PacketObservation>, CliError> {
    ingest::parse_csv(BufReader::new(reader)).map_err(|e| CliError::Parse(format!("csv: {e}")))
}
