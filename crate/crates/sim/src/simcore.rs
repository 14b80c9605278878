//! Single-server simulation front end: runs the engine, and reads/writes
//! the trace and ground-truth interchange files.

use std::io::{BufRead, Write};

use crate::engine::{
    self, ArrivalModel, EngineConfig, GroundTruthRecord, NetworkSpec, NoHooks, ServerSpec, SimError,
    SimOutput, WorkloadSpec,
};

pub const TRUTH_HEADER: &str = "conn_id,req_id,req_sent_ns,last_resp_ns,trig_req_ns,req_to_res_ns,req_to_req_ns";

/// Runs one closed-loop simulation against a single server, yielding the
/// vantage trace and ground-truth records. Deterministic given the seed.
pub fn run_sim(workload: &WorkloadSpec, net: &NetworkSpec, server: &ServerSpec) -> Result<SimOutput, SimError> {
    let cfg = EngineConfig {
        workload: workload.clone(),
        net: net.clone(),
        servers: vec![server.clone()],
        arrivals: ArrivalModel::AllAtStart,
        initial_weights: Vec::new(),
        tick_interval_ns: None,
    };
    engine::run(&cfg, &mut NoHooks)
}

/// Writes ground truth as CSV with empty fields for absent options.
pub fn write_truth_csv(mut w: impl Write, records: &[GroundTruthRecord]) -> std::io::Result<()> {
    writeln!(w, "{TRUTH_HEADER}")?;
    for r in records {
        let trig = r.trig_req_ns.map_or(String::new(), |v| v.to_string());
        let rtr = r.req_to_req_ns.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.conn_id, r.req_id, r.req_sent_ns, r.last_resp_ns, trig, r.req_to_res_ns, rtr
        )?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum TruthCsvError {
    #[error("line 1: expected header `{TRUTH_HEADER}`")]
    BadHeader,
    #[error("line {0}: malformed ground-truth row")]
    BadRow(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_truth_csv(reader: impl BufRead) -> Result<Vec<GroundTruthRecord>, TruthCsvError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(TruthCsvError::BadHeader)??;
    if header.trim_end_matches('\r') != TRUTH_HEADER {
        return Err(TruthCsvError::BadHeader);
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(TruthCsvError::BadRow(lineno));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| TruthCsvError::BadRow(lineno));
        let opt = |s: &str| -> Result<Option<u64>, TruthCsvError> {
            if s.is_empty() { Ok(None) } else { num(s).map(Some) }
        };
        out.push(GroundTruthRecord {
            conn_id: num(cols[0])?,
            req_id: num(cols[1])?,
            req_sent_ns: num(cols[2])?,
            last_resp_ns: num(cols[3])?,
            trig_req_ns: opt(cols[4])?,
            req_to_res_ns: num(cols[5])?,
            req_to_req_ns: opt(cols[6])?,
        });
    }
    Ok(out)
}

/// With loss disabled every sent packet is observed at the vantage point.
pub fn observation_conservation(out: &SimOutput) -> bool {
    out.observations.len() as u64 == out.packets_sent
}
