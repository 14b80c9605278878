//! Synthetic trace interchange format.
//!
//! Exactly five columns, one packet per row, LF line endings, booleans as
//! 0/1:
//!
//! ```text
//! flow_id,timestamp_ns,payload_len,is_pure_ack,is_full_mtu
//! ```
//!
//! Rows must be sorted by `timestamp_ns` within each `flow_id`. The format
//! is deliberately strict (no quoting, no CRLF) because it is machine
//! written by the simulator and re-read bit-exactly.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::flow::{FlowKey, PacketObservation};

pub const CSV_HEADER: &str = "flow_id,timestamp_ns,payload_len,is_pure_ack,is_full_mtu";

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("line 1: expected header `{CSV_HEADER}`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: expected 5 columns, got {got}")]
    ColumnCount { line: usize, got: usize },
    #[error("line {line}: invalid {field}: `{value}`")]
    BadField { line: usize, field: &'static str, value: String },
    #[error("line {line}: timestamp regression for flow `{flow}` ({prev} then {cur})")]
    TimestampRegression { line: usize, flow: String, prev: u64, cur: u64 },
    #[error("empty input: missing header line")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses the 5-column trace format into observations, in file order.
///
/// Any malformed row is a fatal error naming the offending line (the header
/// is line 1).
pub fn parse_csv(reader: impl BufRead) -> Result<Vec<PacketObservation>, CsvError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(CsvError::Empty)??;
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(CsvError::BadHeader(header));
    }
    let mut out = Vec::new();
    let mut last_ts: HashMap<String, u64> = HashMap::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(CsvError::ColumnCount { line: lineno, got: cols.len() });
        }
        let flow_id = cols[0];
        let timestamp_ns: u64 = cols[1]
            .parse()
            .map_err(|_| CsvError::BadField { line: lineno, field: "timestamp_ns", value: cols[1].into() })?;
        let payload_len: u32 = cols[2]
            .parse()
            .map_err(|_| CsvError::BadField { line: lineno, field: "payload_len", value: cols[2].into() })?;
        let is_pure_ack = parse_bool(cols[3]).ok_or(CsvError::BadField { line: lineno, field: "is_pure_ack", value: cols[3].into() })?;
        let is_full_mtu = parse_bool(cols[4]).ok_or(CsvError::BadField { line: lineno, field: "is_full_mtu", value: cols[4].into() })?;

        if let Some(&prev) = last_ts.get(flow_id)
            && timestamp_ns < prev {
                return Err(CsvError::TimestampRegression {
                    line: lineno,
                    flow: flow_id.to_string(),
                    prev,
                    cur: timestamp_ns,
                });
            }
        last_ts.insert(flow_id.to_string(), timestamp_ns);
        out.push(PacketObservation {
            flow: FlowKey::synthetic(flow_id),
            timestamp_ns,
            payload_len,
            is_pure_ack,
            is_full_mtu,
        });
    }
    Ok(out)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Writes observations in the 5-column format. Inverse of [`parse_csv`] for
/// synthetic flow keys; non-synthetic keys are written in display form.
pub fn write_csv(mut w: impl Write, observations: &[PacketObservation]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for obs in observations {
        writeln!(
            w,
            "{},{},{},{},{}",
            obs.flow,
            obs.timestamp_ns,
            obs.payload_len,
            obs.is_pure_ack as u8,
            obs.is_full_mtu as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_gives_empty_sequence() {
        let obs = parse_csv(CSV_HEADER.as_bytes()).unwrap();
        assert!(obs.is_empty());
    }

    #[test]
    fn single_row_maps_fields_directly() {
        let input = format!("{CSV_HEADER}\nf1,1000,1460,0,1\n");
        let obs = parse_csv(input.as_bytes()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].flow, FlowKey::synthetic("f1"));
        assert_eq!(obs[0].timestamp_ns, 1000);
        assert_eq!(obs[0].payload_len, 1460);
        assert!(!obs[0].is_pure_ack);
        assert!(obs[0].is_full_mtu);
    }

    #[test]
    fn per_flow_regression_is_fatal_and_names_line() {
        let input = format!("{CSV_HEADER}\nf1,2000,100,0,0\nf1,1000,100,0,0\n");
        let err = parse_csv(input.as_bytes()).unwrap_err();
        match err {
            CsvError::TimestampRegression { line, flow, .. } => {
                assert_eq!(line, 3);
                assert_eq!(flow, "f1");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn interleaved_flows_may_regress_globally() {
        // Per-flow ordering is required; cross-flow is not.
        let input = format!("{CSV_HEADER}\nf1,2000,100,0,0\nf2,1000,100,0,0\nf1,3000,100,0,0\n");
        let obs = parse_csv(input.as_bytes()).unwrap();
        assert_eq!(obs.len(), 3);
    }

    #[test]
    fn missing_column_names_line() {
        let input = format!("{CSV_HEADER}\nf1,1000,100,0\n");
        match parse_csv(input.as_bytes()).unwrap_err() {
            CsvError::ColumnCount { line: 2, got: 4 } => {}
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn non_numeric_timestamp_names_line() {
        let input = format!("{CSV_HEADER}\nf1,abc,100,0,0\n");
        match parse_csv(input.as_bytes()).unwrap_err() {
            CsvError::BadField { line: 2, field: "timestamp_ns", .. } => {}
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_header_is_fatal() {
        let input = "flow,ts\nf1,1\n";
        assert!(matches!(parse_csv(input.as_bytes()).unwrap_err(), CsvError::BadHeader(_)));
    }
}
