//! Approximation-ladder evaluation across pipeline depths.
//!
//! Three successive approximations are compared, each against the previous
//! rung: (1) causal-pair delay (req-to-req) against true response latency
//! (req-to-res), both from ground truth, aggregated per estimator epoch;
//! (2) the fixed-threshold prominent-gap detector, with its threshold set
//! per connection to 0.6x the connection's true mean latency. Each of its
//! emitted samples is paired with the causal-pair delays whose triggered
//! requests fired inside the sample's span, so a correctly classified
//! batch boundary scores exactly zero and a fused boundary scores the
//! whole missed period; (3) the full mode-histogram estimator against
//! per-epoch prominent-gap means.

use std::collections::HashMap;

use pirate_core::estimator::{EstimatorConfig, run_estimator};
use pirate_core::gapthresh::BatchTracker;
use serde::Serialize;

use crate::config::SimConfig;
use crate::engine::SimError;
use crate::evaluate::{ErrorSummary, summarize};
use crate::simcore::run_sim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    ReqToReqVsReqToRes,
    ProminentGapVsReqToReq,
    PirateVsProminentGap,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::ReqToReqVsReqToRes, Arm::ProminentGapVsReqToReq, Arm::PirateVsProminentGap];

    pub fn label(&self) -> &'static str {
        match self {
            Arm::ReqToReqVsReqToRes => "req-to-req_vs_req-to-res",
            Arm::ProminentGapVsReqToReq => "prominent-gap_vs_req-to-req",
            Arm::PirateVsProminentGap => "pirate_vs_prominent-gap",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSample {
    pub depth: u32,
    pub arm: Arm,
    pub flow: String,
    /// Epoch start for the epoch-aggregated arms, sample emission time for
    /// the per-sample prominent-gap arm.
    pub anchor_ns: u64,
    pub baseline_ns: f64,
    pub technique_ns: f64,
    pub rel_error_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSummary {
    pub depth: u32,
    pub arm: Arm,
    pub summary: ErrorSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub depths: Vec<u32>,
    pub rows: Vec<ArmSummary>,
    pub samples: Vec<ArmSample>,
}

impl AblationReport {
    pub fn summary_for(&self, depth: u32, arm: Arm) -> Option<&ErrorSummary> {
        self.rows.iter().find(|r| r.depth == depth && r.arm == arm).map(|r| &r.summary)
    }
}

/// Runs the ladder on one simulated workload per pipeline depth.
pub fn run_ablation(
    cfg: &SimConfig,
    est_cfg: &EstimatorConfig,
    depths: &[u32],
) -> Result<AblationReport, SimError> {
    let mut report = AblationReport { depths: depths.to_vec(), rows: Vec::new(), samples: Vec::new() };
    for &depth in depths {
        let mut workload = cfg.workload.clone();
        workload.pipeline_depth = depth;
        // Bootstrap a full pipeline so every depth runs saturated from the
        // first batch.
        workload.initial_requests = workload.initial_requests.max(depth);
        let out = run_sim(&workload, &cfg.network, &cfg.server)?;
        let estimates = run_estimator(out.observations.clone(), est_cfg)
            .map_err(|e| SimError::Config(format!("estimator rejected simulator trace: {e}")))?;

        // Ground truth per flow, sorted by send time.
        let mut truth: HashMap<String, Vec<(u64, u64, Option<u64>)>> = HashMap::new();
        for r in &out.truth {
            truth
                .entry(format!("c{}", r.conn_id))
                .or_default()
                .push((r.req_sent_ns, r.req_to_res_ns, r.req_to_req_ns));
        }
        for v in truth.values_mut() {
            v.sort_unstable();
        }

        // Prominent-gap samples per flow, with the per-connection
        // threshold of 0.6x the true mean latency.
        let mut pg: HashMap<String, Vec<(u64, u64)>> = HashMap::new();
        {
            let mut trackers: HashMap<String, (BatchTracker, u64)> = HashMap::new();
            for (flow, recs) in &truth {
                let mean_res = recs.iter().map(|(_, res, _)| *res as f64).sum::<f64>() / recs.len() as f64;
                trackers.insert(flow.clone(), (BatchTracker::new(), (0.6 * mean_res) as u64));
            }
            for obs in &out.observations {
                let flow = obs.flow.to_string();
                let Some((tracker, delta)) = trackers.get_mut(&flow) else { continue };
                if let Some(value) = tracker
                    .observe(obs.timestamp_ns, *delta)
                    .map_err(|e| SimError::Config(format!("gap tracker: {e}")))?
                {
                    pg.entry(flow).or_default().push((obs.timestamp_ns, value));
                }
            }
        }

        let mut arm_rel: HashMap<Arm, Vec<f64>> = HashMap::new();
        let mut arm_abs: HashMap<Arm, Vec<f64>> = HashMap::new();

        // Arm 2, per sample: each prominent-gap sample spans
        // (emitted_at - value, emitted_at]; the causal pairs whose
        // triggered request fired in that span are its baseline.
        for (flow, samples) in &pg {
            let Some(recs) = truth.get(flow) else { continue };
            let mut triggers: Vec<(u64, u64)> = recs
                .iter()
                .filter_map(|(sent, _, rtr)| rtr.map(|v| (sent + v, v)))
                .collect();
            triggers.sort_unstable();
            for &(emitted_at, value) in samples {
                let span_start = emitted_at.saturating_sub(value);
                let lo = triggers.partition_point(|(t, _)| *t <= span_start);
                let hi = triggers.partition_point(|(t, _)| *t <= emitted_at);
                let window = &triggers[lo..hi];
                if window.is_empty() {
                    continue;
                }
                let baseline = window.iter().map(|(_, v)| *v as f64).sum::<f64>() / window.len() as f64;
                let rel = 100.0 * (baseline - value as f64) / baseline;
                arm_rel.entry(Arm::ProminentGapVsReqToReq).or_default().push(rel);
                arm_abs.entry(Arm::ProminentGapVsReqToReq).or_default().push(baseline - value as f64);
                report.samples.push(ArmSample {
                    depth,
                    arm: Arm::ProminentGapVsReqToReq,
                    flow: flow.clone(),
                    anchor_ns: emitted_at,
                    baseline_ns: baseline,
                    technique_ns: value as f64,
                    rel_error_pct: rel,
                });
            }
        }

        for est in estimates.iter().filter(|e| !e.partial) {
            let flow = est.flow.to_string();
            let (start, end) = (est.epoch_start_ns, est.epoch_end_ns);
            let recs = truth.get(&flow).map(Vec::as_slice).unwrap_or(&[]);
            let lo = recs.partition_point(|(t, _, _)| *t < start);
            let hi = recs.partition_point(|(t, _, _)| *t < end);
            let window = &recs[lo..hi];
            let res_mean = mean(window.iter().map(|(_, res, _)| *res as f64));
            let req_mean = mean(window.iter().filter_map(|(_, _, rtr)| rtr.map(|v| v as f64)));
            let pg_samples = pg.get(&flow).map(Vec::as_slice).unwrap_or(&[]);
            let plo = pg_samples.partition_point(|(t, _)| *t < start);
            let phi = pg_samples.partition_point(|(t, _)| *t < end);
            let pg_mean = mean(pg_samples[plo..phi].iter().map(|(_, v)| *v as f64));

            let mut push = |arm: Arm, baseline: Option<f64>, technique: Option<f64>| {
                if let (Some(b), Some(t)) = (baseline, technique)
                    && b > 0.0 {
                        let rel = 100.0 * (b - t) / b;
                        arm_rel.entry(arm).or_default().push(rel);
                        arm_abs.entry(arm).or_default().push(b - t);
                        report.samples.push(ArmSample {
                            depth,
                            arm,
                            flow: flow.clone(),
                            anchor_ns: start,
                            baseline_ns: b,
                            technique_ns: t,
                            rel_error_pct: rel,
                        });
                    }
            };
            push(Arm::ReqToReqVsReqToRes, res_mean, req_mean);
            push(Arm::PirateVsProminentGap, pg_mean, est.estimate_ns);
        }

        for arm in Arm::ALL {
            let rel = arm_rel.remove(&arm).unwrap_or_default();
            let abs = arm_abs.remove(&arm).unwrap_or_default();
            report.rows.push(ArmSummary { depth, arm, summary: summarize(&rel, &abs) });
        }
    }
    Ok(report)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) }
}
