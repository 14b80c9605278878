//! Trace ingestion: parsing, direction filtering, flow demultiplexing, and
//! per-packet classification (pure ACK, full MTU).

mod csv;
mod flow;
mod pcap;

pub use csv::{CSV_HEADER, CsvError, parse_csv, write_csv};
pub use flow::{FlowKey, KeyMode, PacketObservation, flow_as_string};
pub use pcap::{PcapError, PcapParseOutput, parse_pcap};

use indexmap::IndexMap;

/// Partitions a globally time-ordered observation stream into per-flow
/// sequences, preserving relative order. Map iteration order is first
/// appearance of each flow, so downstream output is deterministic.
pub fn demux(observations: impl IntoIterator<Item = PacketObservation>) -> IndexMap<FlowKey, Vec<PacketObservation>> {
    let mut flows: IndexMap<FlowKey, Vec<PacketObservation>> = IndexMap::new();
    for obs in observations {
        flows.entry(obs.flow.clone()).or_default().push(obs);
    }
    flows
}
