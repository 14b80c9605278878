use std::fmt;
use std::net::IpAddr;

use crate::Ns;

/// Serializes flow keys by display form; deserialization recovers a
/// synthetic key carrying that string.
pub mod flow_as_string {
    use super::FlowKey;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(flow: &FlowKey, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(flow)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FlowKey, D::Error> {
        Ok(FlowKey::synthetic(String::deserialize(d)?))
    }
}

/// How observations are grouped into flows.
///
/// `FiveTuple` gives the best separation when transport headers are
/// readable. `IpPair` keys on addresses alone and is the fallback for
/// tunneled or fragmented traffic where ports are invisible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyMode {
    #[default]
    FiveTuple,
    IpPair,
}

/// Identity of one unidirectional flow at the vantage point.
///
/// Port and protocol fields participate in equality and hashing only in
/// `FiveTuple` form; `IpPair` deliberately drops them. `Synthetic` carries
/// the opaque flow ids used by the CSV interchange format and the
/// simulator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FlowKey {
    FiveTuple {
        src_addr: IpAddr,
        dst_addr: IpAddr,
        src_port: u16,
        dst_port: u16,
        protocol: u8,
    },
    IpPair {
        src_addr: IpAddr,
        dst_addr: IpAddr,
    },
    Synthetic(String),
}

impl FlowKey {
    pub fn synthetic(id: impl Into<String>) -> Self {
        FlowKey::Synthetic(id.into())
    }

    /// Builds the key for a dissected packet under the requested mode.
    pub fn from_packet(mode: KeyMode, src_addr: IpAddr, dst_addr: IpAddr, src_port: u16, dst_port: u16, protocol: u8) -> Self {
        match mode {
            KeyMode::FiveTuple => FlowKey::FiveTuple { src_addr, dst_addr, src_port, dst_port, protocol },
            KeyMode::IpPair => FlowKey::IpPair { src_addr, dst_addr },
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKey::FiveTuple { src_addr, dst_addr, src_port, dst_port, protocol } => {
                write!(f, "p{protocol}:{src_addr}:{src_port}->{dst_addr}:{dst_port}")
            }
            FlowKey::IpPair { src_addr, dst_addr } => write!(f, "{src_addr}->{dst_addr}"),
            FlowKey::Synthetic(id) => f.write_str(id),
        }
    }
}

/// One forward-path packet as seen at the vantage point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketObservation {
    pub flow: FlowKey,
    /// Nanoseconds since trace start; non-decreasing within one parse pass.
    pub timestamp_ns: Ns,
    pub payload_len: u32,
    /// Transport-layer acknowledgment with no payload. Only set when TCP
    /// headers were parseable; defaults to false otherwise.
    pub is_pure_ack: bool,
    /// Total IP packet length equals the configured MTU.
    pub is_full_mtu: bool,
}
