//! Minimal libpcap file reader.
//!
//! Accepts classic pcap files (not pcapng) with Ethernet link type, in
//! either byte order, with microsecond (magic `0xa1b2c3d4`) or nanosecond
//! (magic `0xa1b23c4d`) timestamps. Microsecond stamps are multiplied by
//! 1000. Timestamps are rebased to the first record so downstream epoch
//! arithmetic never sees wall-clock magnitudes.

use std::io::Read;
use std::net::IpAddr;

use etherparse::{NetSlice, SlicedPacket, TransportSlice};

use super::flow::{FlowKey, KeyMode, PacketObservation};

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;
const MAX_RECORD_LEN: u32 = 1 << 26;

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("malformed pcap header: {0}")]
    MalformedHeader(String),
    #[error("unsupported link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
    #[error("malformed record at offset {offset}: {reason}")]
    MalformedRecord { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of one parse pass over a capture file.
#[derive(Debug, Default)]
pub struct PcapParseOutput {
    /// Observations for packets matching the direction filter, in capture
    /// order with non-decreasing rebased timestamps.
    pub observations: Vec<PacketObservation>,
    /// Frames that could not be dissected (truncated, non-IP, non-TCP/UDP).
    pub skipped_frames: u64,
    /// Dissected packets rejected by the direction filter.
    pub filtered_out: u64,
}

struct FileFormat {
    big_endian: bool,
    nanosecond: bool,
}

/// Parses a pcap byte stream, keeping packets whose flow key satisfies
/// `filter`.
///
/// A malformed global header is fatal. Frames that cannot be dissected down
/// to TCP/UDP are skipped and counted, never fatal.
pub fn parse_pcap(
    mut reader: impl Read,
    filter: impl Fn(&FlowKey) -> bool,
    key_mode: KeyMode,
    mtu: u32,
) -> Result<PcapParseOutput, PcapError> {
    let mut header = [0u8; 24];
    reader
        .read_exact(&mut header)
        .map_err(|e| PcapError::MalformedHeader(format!("short global header: {e}")))?;

    let magic_le = u32::from_le_bytes(header[0..4].try_into().unwrap());
    let magic_be = u32::from_be_bytes(header[0..4].try_into().unwrap());
    let format = match (magic_le, magic_be) {
        (MAGIC_USEC, _) => FileFormat { big_endian: false, nanosecond: false },
        (MAGIC_NSEC, _) => FileFormat { big_endian: false, nanosecond: true },
        (_, MAGIC_USEC) => FileFormat { big_endian: true, nanosecond: false },
        (_, MAGIC_NSEC) => FileFormat { big_endian: true, nanosecond: true },
        _ => return Err(PcapError::MalformedHeader(format!("unknown magic {magic_le:#010x}"))),
    };
    let read_u32 = |bytes: &[u8]| -> u32 {
        let arr: [u8; 4] = bytes.try_into().unwrap();
        if format.big_endian { u32::from_be_bytes(arr) } else { u32::from_le_bytes(arr) }
    };
    let link_type = read_u32(&header[20..24]);
    if link_type != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(link_type));
    }

    let mut out = PcapParseOutput::default();
    let mut offset: u64 = 24;
    let mut first_ts: Option<u64> = None;
    let mut prev_ts: u64 = 0;
    let mut frame = Vec::new();
    loop {
        let mut rec = [0u8; 16];
        match read_exact_or_eof(&mut reader, &mut rec)? {
            ReadOutcome::Eof => break,
            ReadOutcome::Partial => {
                // Trailing garbage shorter than a record header.
                out.skipped_frames += 1;
                break;
            }
            ReadOutcome::Full => {}
        }
        let ts_sec = read_u32(&rec[0..4]) as u64;
        let ts_sub = read_u32(&rec[4..8]) as u64;
        let incl_len = read_u32(&rec[8..12]);
        if incl_len > MAX_RECORD_LEN {
            return Err(PcapError::MalformedRecord {
                offset,
                reason: format!("implausible captured length {incl_len}"),
            });
        }
        frame.resize(incl_len as usize, 0);
        if let Err(e) = reader.read_exact(&mut frame) {
            // File ends inside a record body: count and stop.
            let _ = e;
            out.skipped_frames += 1;
            break;
        }
        offset += 16 + incl_len as u64;

        let ts_ns = if format.nanosecond {
            ts_sec * 1_000_000_000 + ts_sub
        } else {
            ts_sec * 1_000_000_000 + ts_sub * 1000
        };
        let base = *first_ts.get_or_insert(ts_ns);
        // Captures occasionally carry tiny inversions; keep the output
        // sequence non-decreasing.
        let rebased = ts_ns.saturating_sub(base).max(prev_ts);
        prev_ts = rebased;

        match dissect(&frame, key_mode, mtu, rebased) {
            Some(obs) => {
                if filter(&obs.flow) {
                    out.observations.push(obs);
                } else {
                    out.filtered_out += 1;
                }
            }
            None => out.skipped_frames += 1,
        }
    }
    Ok(out)
}

enum ReadOutcome {
    Full,
    Partial,
    Eof,
}

fn read_exact_or_eof(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<ReadOutcome> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            return Ok(if filled == 0 { ReadOutcome::Eof } else { ReadOutcome::Partial });
        }
        filled += n;
    }
    Ok(ReadOutcome::Full)
}

fn dissect(frame: &[u8], key_mode: KeyMode, mtu: u32, timestamp_ns: u64) -> Option<PacketObservation> {
    let sliced = SlicedPacket::from_ethernet(frame).ok()?;
    let (src_addr, dst_addr, ip_total_len): (IpAddr, IpAddr, u32) = match sliced.net.as_ref()? {
        NetSlice::Ipv4(v4) => {
            let h = v4.header();
            (h.source_addr().into(), h.destination_addr().into(), h.total_len() as u32)
        }
        NetSlice::Ipv6(v6) => {
            let h = v6.header();
            (
                h.source_addr().into(),
                h.destination_addr().into(),
                40 + h.payload_length() as u32,
            )
        }
        _ => return None,
    };
    let (src_port, dst_port, protocol, payload_len, is_pure_ack) = match sliced.transport.as_ref()? {
        TransportSlice::Tcp(tcp) => {
            let payload = tcp.payload().len() as u32;
            (tcp.source_port(), tcp.destination_port(), 6u8, payload, tcp.ack() && payload == 0)
        }
        TransportSlice::Udp(udp) => {
            (udp.source_port(), udp.destination_port(), 17u8, udp.payload().len() as u32, false)
        }
        _ => return None,
    };
    Some(PacketObservation {
        flow: FlowKey::from_packet(key_mode, src_addr, dst_addr, src_port, dst_port, protocol),
        timestamp_ns,
        payload_len,
        is_pure_ack,
        is_full_mtu: ip_total_len == mtu,
    })
}
