//! Fixed-threshold causal-pair detection.
//!
//! Per flow, a packet arriving after an inter-packet gap strictly greater
//! than `delta` starts a new batch, and the interval since the previous
//! batch start is emitted as one response-latency sample. This is the
//! baseline detector; the mode-histogram estimator exists precisely because
//! no single `delta` works across deployments.

use crate::{ContractViolation, Ns};
use crate::ingest::FlowKey;

/// Per-flow batch tracking state. `time_last_batch <= time_last_pkt` holds
/// after initialization.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchTracker {
    time_last_batch: Ns,
    time_last_pkt: Ns,
    initialized: bool,
}

/// One emitted latency sample; `value_ns` is always strictly greater than
/// the detection threshold in force when it was produced.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LatencySample {
    #[serde(with = "crate::ingest::flow_as_string")]
    pub flow: FlowKey,
    pub value_ns: Ns,
    pub emitted_at_ns: Ns,
}

impl BatchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Processes one packet arrival at `now`, returning the new sample
    /// value if this packet starts a new batch.
    ///
    /// The first packet of a flow initializes both timestamps and emits
    /// nothing. An equal gap (`now - time_last_pkt == delta`) does not
    /// start a new batch.
    pub fn observe(&mut self, now: Ns, delta: Ns) -> Result<Option<Ns>, ContractViolation> {
        if !self.initialized {
            self.time_last_batch = now;
            self.time_last_pkt = now;
            self.initialized = true;
            return Ok(None);
        }
        if now < self.time_last_pkt {
            return Err(ContractViolation(format!(
                "packet at {now}ns arrived before previous packet at {}ns",
                self.time_last_pkt
            )));
        }
        let mut sample = None;
        if now - self.time_last_pkt > delta {
            sample = Some(now - self.time_last_batch);
            self.time_last_batch = now;
        }
        self.time_last_pkt = now;
        Ok(sample)
    }
}
