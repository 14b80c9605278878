//! Passive response-latency estimation from one-directional packet timing.
//!
//! The library turns a client-to-server packet trace into per-flow latency
//! estimates without ever seeing the reverse path or transport payloads.
//! The pipeline is:
//!
//! 1. [`ingest`] parses pcap or CSV traces into [`ingest::PacketObservation`]s
//!    and demultiplexes them into flows.
//! 2. [`modehist`] maintains a bounded, dynamic-resolution histogram of
//!    inter-packet gaps (IPGs) per flow.
//! 3. [`estimator`] coalesces pure ACKs out of the gap stream, marks
//!    candidate inter-batch gaps, de-noises retransmission/idle modes, and
//!    emits one averaged latency estimate per flow per epoch via the
//!    proportional mode sum.
//! 4. [`gapthresh`] is the fixed-threshold baseline detector: it emits one
//!    sample per batch of packets separated by more than a configured gap.

pub mod estimator;
pub mod gapthresh;
pub mod ingest;
pub mod modehist;

pub use estimator::{EpochEstimate, EstimatorConfig, FlowEstimator};
pub use gapthresh::{BatchTracker, LatencySample};
pub use ingest::{FlowKey, KeyMode, PacketObservation};
pub use modehist::{EpsilonPolicy, Mode, ModeHistogram, ModeStat, UpdateOutcome};

/// Timestamp or duration in nanoseconds. All internal time arithmetic is
/// integer nanoseconds; fractional values only appear in final estimates.
pub type Ns = u64;

/// Raised when a caller violates a time-ordering contract, e.g. delivering
/// packets of one flow out of timestamp order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("contract violation: {0}")]
pub struct ContractViolation(pub String);
