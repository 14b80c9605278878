//! Per-flow response-latency estimation.
//!
//! Each flow owns a [`ModeHistogram`] of inter-packet gaps. Pure ACKs are
//! coalesced out of the gap stream, gaps following a full-MTU packet are
//! excluded from inter-batch-gap candidacy, and at each epoch boundary the
//! histogram is de-noised (retransmission/idle modes removed) and collapsed
//! into one averaged latency estimate via the proportional mode sum:
//! with the inter-batch gap IBG being the largest surviving candidate mode,
//! the estimate is `sum over modes m (count_m / count_IBG) * mean_m` for
//! modes no larger than the IBG.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ingest::{FlowKey, PacketObservation};
use crate::modehist::{EpsilonPolicy, Mode, ModeHistogram, ModeStat};
use crate::{ContractViolation, Ns};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Length of one measurement epoch; one estimate is emitted per flow
    /// per epoch.
    pub epoch_ns: Ns,
    /// Modes with mean at or above this are attributed to retransmission
    /// timeouts or idle periods and removed before estimation.
    pub rto_floor_ns: Ns,
    /// Gaps at or above this are classified as idle in reports. Must be
    /// >= `rto_floor_ns`; plays no role in estimation itself.
    pub idle_floor_ns: Ns,
    /// Drop pure ACKs from the gap stream entirely.
    pub ack_coalescing: bool,
    /// Only gaps following a non-full-MTU packet may represent the IBG.
    pub mtu_marking: bool,
    pub mode_capacity: usize,
    pub epsilon: EpsilonPolicy,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            epoch_ns: 100_000_000,
            rto_floor_ns: 200_000_000,
            idle_floor_ns: 1_000_000_000,
            ack_coalescing: true,
            mtu_marking: true,
            mode_capacity: 10,
            epsilon: EpsilonPolicy::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epoch_ns == 0 {
            return Err("epoch must be positive".into());
        }
        if self.rto_floor_ns > self.idle_floor_ns {
            return Err("rto floor must not exceed idle floor".into());
        }
        Ok(())
    }
}

/// One per-flow, per-epoch latency estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEstimate {
    #[serde(with = "crate::ingest::flow_as_string")]
    pub flow: FlowKey,
    pub epoch_start_ns: Ns,
    pub epoch_end_ns: Ns,
    /// Absent when no mode survived de-noising (or the epoch saw no gaps).
    pub estimate_ns: Option<f64>,
    /// Full pre-denoise mode snapshot, ascending by mean.
    pub modes: Vec<ModeStat>,
    pub gaps_observed: u64,
    pub gaps_discarded: u64,
    /// Set on the final emission of a flow cut short by trace end.
    pub partial: bool,
}

/// Removes every mode whose mean is at or above the retransmission-timeout
/// floor; the remainder is returned unchanged.
pub fn denoise(modes: &[ModeStat], rto_floor_ns: Ns) -> Vec<ModeStat> {
    modes.iter().filter(|m| m.mean_ns < rto_floor_ns as f64).copied().collect()
}

/// Proportional mode sum over a de-noised snapshot (ascending by mean).
///
/// The inter-batch gap is the largest-mean candidate mode, or the largest
/// mode overall when nothing is flagged. Each mode up to the IBG
/// contributes its mean weighted by its frequency relative to the IBG;
/// modes above the IBG are excluded. Returns `None` on empty input.
pub fn proportional_mode_sum(modes: &[ModeStat]) -> Option<f64> {
    if modes.is_empty() {
        return None;
    }
    let ibg_idx = modes
        .iter()
        .rposition(|m| m.candidate)
        .unwrap_or(modes.len() - 1);
    let ibg_count = modes[ibg_idx].count as f64;
    Some(
        modes[..=ibg_idx]
            .iter()
            .map(|m| (m.count as f64 / ibg_count) * m.mean_ns)
            .sum(),
    )
}

/// Streaming per-flow estimator state.
///
/// Feed observations in timestamp order via [`FlowEstimator::on_packet`];
/// call [`FlowEstimator::finish`] at trace end for the final partial epoch.
#[derive(Debug, Clone)]
pub struct FlowEstimator {
    flow: FlowKey,
    hist: ModeHistogram,
    last_data_pkt_ns: Option<Ns>,
    last_pkt_was_full_mtu: bool,
    epoch_start_ns: Ns,
    gaps_in_epoch: u64,
}

impl FlowEstimator {
    pub fn new(flow: FlowKey, cfg: &EstimatorConfig) -> Self {
        FlowEstimator {
            flow,
            hist: ModeHistogram::new(cfg.mode_capacity, cfg.epsilon),
            last_data_pkt_ns: None,
            last_pkt_was_full_mtu: false,
            epoch_start_ns: 0,
            gaps_in_epoch: 0,
        }
    }

    pub fn flow(&self) -> &FlowKey {
        &self.flow
    }

    /// Processes one observation. Returns the finished epoch's estimate
    /// when this packet crosses an epoch boundary.
    ///
    /// With coalescing enabled a pure ACK is ignored entirely: it produces
    /// no gap, moves no timestamps, and cannot end an epoch.
    pub fn on_packet(
        &mut self,
        obs: &PacketObservation,
        cfg: &EstimatorConfig,
    ) -> Result<Option<EpochEstimate>, ContractViolation> {
        if cfg.ack_coalescing && obs.is_pure_ack {
            return Ok(None);
        }
        let now = obs.timestamp_ns;
        let Some(last) = self.last_data_pkt_ns else {
            self.last_data_pkt_ns = Some(now);
            self.last_pkt_was_full_mtu = obs.is_full_mtu;
            self.epoch_start_ns = now;
            return Ok(None);
        };
        if now < last {
            return Err(ContractViolation(format!(
                "flow {}: packet at {now}ns precedes previous packet at {last}ns",
                self.flow
            )));
        }

        // Close the running epoch before this packet's gap is counted; the
        // boundary-spanning gap belongs to the fresh epoch.
        let mut emitted = None;
        if now - self.epoch_start_ns >= cfg.epoch_ns {
            let record = self.end_epoch(self.epoch_start_ns + cfg.epoch_ns, false, cfg);
            let advance = (now - self.epoch_start_ns) / cfg.epoch_ns;
            self.epoch_start_ns += advance * cfg.epoch_ns;
            emitted = Some(record);
        }

        let gap = now - last;
        let candidate = !cfg.mtu_marking || !self.last_pkt_was_full_mtu;
        self.hist.update(gap, candidate);
        self.gaps_in_epoch += 1;
        self.last_data_pkt_ns = Some(now);
        self.last_pkt_was_full_mtu = obs.is_full_mtu;
        Ok(emitted)
    }

    /// Emits the final partial epoch at trace end, if the flow ever carried
    /// a counted packet.
    pub fn finish(&mut self, cfg: &EstimatorConfig) -> Option<EpochEstimate> {
        let last = self.last_data_pkt_ns.take()?;
        Some(self.end_epoch(last, true, cfg))
    }

    fn end_epoch(&mut self, epoch_end_ns: Ns, partial: bool, cfg: &EstimatorConfig) -> EpochEstimate {
        let modes = self.hist.snapshot();
        let estimate_ns = proportional_mode_sum(&denoise(&modes, cfg.rto_floor_ns));
        debug_assert_eq!(self.gaps_in_epoch, self.hist.total_offered());
        let record = EpochEstimate {
            flow: self.flow.clone(),
            epoch_start_ns: self.epoch_start_ns,
            epoch_end_ns,
            estimate_ns,
            modes,
            gaps_observed: self.gaps_in_epoch,
            gaps_discarded: self.hist.discarded(),
            partial,
        };
        self.hist.reset();
        self.gaps_in_epoch = 0;
        record
    }

    /// Serializes the per-flow state into the compact fixed layout used to
    /// budget memory: 24 header bytes plus 23 per mode (u64 min, u32 span,
    /// u32 count, 7-byte sum). Spans above ~4.29s and sums above 2^56-1 ns
    /// saturate.
    pub fn encode_compact(&self) -> Vec<u8> {
        let modes = self.hist.modes();
        let mut out = Vec::with_capacity(24 + 23 * modes.len());
        out.push(modes.len() as u8);
        let mut flags = 0u8;
        if self.last_pkt_was_full_mtu {
            flags |= 1;
        }
        if self.last_data_pkt_ns.is_some() {
            flags |= 2;
        }
        out.push(flags);
        let mut candidate_bits = 0u16;
        for (i, m) in modes.iter().enumerate() {
            if m.ibg_candidate {
                candidate_bits |= 1 << i;
            }
        }
        out.extend_from_slice(&candidate_bits.to_le_bytes());
        out.extend_from_slice(&(self.hist.discarded().min(u32::MAX as u64) as u32).to_le_bytes());
        out.extend_from_slice(&self.epoch_start_ns.to_le_bytes());
        out.extend_from_slice(&self.last_data_pkt_ns.unwrap_or(0).to_le_bytes());
        for m in modes {
            out.extend_from_slice(&m.min_ns.to_le_bytes());
            let span = (m.max_ns - m.min_ns).min(u32::MAX as u64) as u32;
            out.extend_from_slice(&span.to_le_bytes());
            out.extend_from_slice(&m.count.to_le_bytes());
            let sum = m.sum_ns.min((1 << 56) - 1);
            out.extend_from_slice(&sum.to_le_bytes()[..7]);
        }
        out
    }

    /// Rebuilds flow state from [`FlowEstimator::encode_compact`] output.
    pub fn decode_compact(flow: FlowKey, bytes: &[u8], cfg: &EstimatorConfig) -> Option<Self> {
        if bytes.len() < 24 {
            return None;
        }
        let mode_count = bytes[0] as usize;
        if bytes.len() != 24 + 23 * mode_count || mode_count > cfg.mode_capacity {
            return None;
        }
        let flags = bytes[1];
        let candidate_bits = u16::from_le_bytes(bytes[2..4].try_into().unwrap());
        let discarded = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let epoch_start_ns = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let last_data = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let mut modes = Vec::with_capacity(mode_count);
        for i in 0..mode_count {
            let at = 24 + 23 * i;
            let min_ns = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            let span = u32::from_le_bytes(bytes[at + 8..at + 12].try_into().unwrap());
            let count = u32::from_le_bytes(bytes[at + 12..at + 16].try_into().unwrap());
            let mut sum_bytes = [0u8; 8];
            sum_bytes[..7].copy_from_slice(&bytes[at + 16..at + 23]);
            modes.push(Mode {
                min_ns,
                max_ns: min_ns + span as u64,
                count,
                sum_ns: u64::from_le_bytes(sum_bytes),
                ibg_candidate: candidate_bits & (1 << i) != 0,
            });
        }
        let mut est = FlowEstimator::new(flow, cfg);
        est.hist.restore(&modes, discarded as u64);
        est.epoch_start_ns = epoch_start_ns;
        est.last_pkt_was_full_mtu = flags & 1 != 0;
        est.last_data_pkt_ns = (flags & 2 != 0).then_some(last_data);
        est.gaps_in_epoch = est.hist.total_offered();
        Some(est)
    }
}

/// Runs the estimator over an interleaved observation stream, demuxing
/// internally. Estimates are returned in emission order (epoch closures in
/// arrival order, then final partial epochs in first-seen flow order).
pub fn run_estimator(
    observations: impl IntoIterator<Item = PacketObservation>,
    cfg: &EstimatorConfig,
) -> Result<Vec<EpochEstimate>, ContractViolation> {
    let mut flows: IndexMap<FlowKey, FlowEstimator> = IndexMap::new();
    let mut out = Vec::new();
    for obs in observations {
        let est = flows
            .entry(obs.flow.clone())
            .or_insert_with_key(|k| FlowEstimator::new(k.clone(), cfg));
        if let Some(record) = est.on_packet(&obs, cfg)? {
            out.push(record);
        }
    }
    for est in flows.values_mut() {
        if let Some(record) = est.finish(cfg) {
            out.push(record);
        }
    }
    Ok(out)
}
