//! Command-line driver for passive latency estimation and its validation
//! harness.

mod cmd;
mod manifest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "pirate", version, about = "Passive one-directional response-latency estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-flow response latencies from a packet trace.
    Estimate(cmd::estimate::EstimateArgs),
    /// Run the closed-loop traffic simulator, emitting a trace and ground truth.
    Simulate(cmd::simulate::SimulateArgs),
    /// Compare epoch estimates against simulator ground truth.
    Evaluate(cmd::evaluate::EvaluateArgs),
    /// Paired uniform vs latency-aware load-balancer experiment.
    Lbsim(cmd::lbsim::LbsimArgs),
    /// Approximation-ladder errors across pipeline depths.
    Ablate(cmd::ablate::AblateArgs),
}

/// Estimator knobs shared by `estimate` and `ablate`.
#[derive(Args, Clone)]
pub struct EstimatorFlags {
    /// Measurement epoch length in milliseconds.
    #[arg(long = "epoch-ms", default_value_t = 100.0)]
    pub epoch_ms: f64,
    /// Maximum histogram modes per flow.
    #[arg(long = "modes", default_value_t = 10)]
    pub modes: usize,
    /// Absolute floor of the mode-proximity radius, microseconds.
    #[arg(long = "eps-floor-us", default_value_t = 5.0)]
    pub eps_floor_us: f64,
    /// Gap-relative fraction of the mode-proximity radius.
    #[arg(long = "eps-frac", default_value_t = 0.2)]
    pub eps_frac: f64,
    /// Modes at or above this mean are dropped as retransmission timeouts.
    #[arg(long = "rto-floor-ms", default_value_t = 200.0)]
    pub rto_floor_ms: f64,
    /// Gaps at or above this are classified as idle in reports.
    #[arg(long = "idle-floor-ms", default_value_t = 1000.0)]
    pub idle_floor_ms: f64,
    /// Keep pure ACKs in the gap stream.
    #[arg(long = "no-ack-coalescing")]
    pub no_ack_coalescing: bool,
    /// Ignore the full-MTU candidate-marking heuristic.
    #[arg(long = "no-mtu-marking")]
    pub no_mtu_marking: bool,
}

impl EstimatorFlags {
    pub fn to_config(&self) -> Result<pirate_core::EstimatorConfig, String> {
        let cfg = pirate_core::EstimatorConfig {
            epoch_ns: (self.epoch_ms * 1e6).round() as u64,
            rto_floor_ns: (self.rto_floor_ms * 1e6).round() as u64,
            idle_floor_ns: (self.idle_floor_ms * 1e6).round() as u64,
            ack_coalescing: !self.no_ack_coalescing,
            mtu_marking: !self.no_mtu_marking,
            mode_capacity: self.modes,
            epsilon: pirate_core::EpsilonPolicy {
                floor_ns: (self.eps_floor_us * 1e3).round() as u64,
                frac: self.eps_frac,
            },
        };
        cfg.validate()?;
        if !(1..=pirate_core::modehist::MAX_MODES).contains(&cfg.mode_capacity) {
            return Err(format!("--modes must be in 1..={}", pirate_core::modehist::MAX_MODES));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Pirate,
    FixedThreshold,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeyModeArg {
    FiveTuple,
    IpPair,
}

/// Failures mapped to process exit codes: parse errors exit 2, contract
/// violations and everything else exit 1.
pub enum CliError {
    Parse(String),
    Contract(String),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd::estimate::run(args),
        Command::Simulate(args) => cmd::simulate::run(args),
        Command::Evaluate(args) => cmd::evaluate::run(args),
        Command::Lbsim(args) => cmd::lbsim::run(args),
        Command::Ablate(args) => cmd::ablate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Contract(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
