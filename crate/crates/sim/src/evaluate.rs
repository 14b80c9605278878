//! Accuracy evaluation of epoch estimates against simulator ground truth.
//!
//! For every complete epoch estimate, the baseline is the mean ground-truth
//! latency of requests sent inside that epoch window. Errors follow the
//! baseline-minus-technique convention: `abs = B - T`,
//! `rel = (B - T) / B` as a percentage, so overestimates come out negative.

use std::collections::HashMap;

use pirate_core::estimator::EpochEstimate;
use serde::Serialize;

use crate::engine::GroundTruthRecord;

#[derive(Debug, Clone, Serialize)]
pub struct EpochError {
    pub flow: String,
    pub epoch_start_ns: u64,
    pub epoch_end_ns: u64,
    pub estimate_ns: f64,
    pub truth_res_mean_ns: f64,
    pub truth_req_mean_ns: Option<f64>,
    pub abs_error_res_ns: f64,
    pub rel_error_res_pct: f64,
    pub abs_error_req_ns: Option<f64>,
    pub rel_error_req_pct: Option<f64>,
}

/// Distribution summary of one error population (all fields zero when the
/// population is empty; check `count`).
#[derive(Debug, Clone, Default, Serialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub median_rel_pct: f64,
    pub median_abs_rel_pct: f64,
    pub p5_rel_pct: f64,
    pub p10_rel_pct: f64,
    pub p90_rel_pct: f64,
    pub p95_rel_pct: f64,
    pub p95_abs_rel_pct: f64,
    pub within_15pct: f64,
    pub median_abs_error_ns: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub epochs_evaluated: usize,
    pub epochs_excluded_no_truth: usize,
    pub epochs_excluded_no_estimate: usize,
    pub epochs_excluded_partial: usize,
    pub vs_req_to_res: ErrorSummary,
    pub vs_req_to_req: ErrorSummary,
    pub per_epoch: Vec<EpochError>,
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(rel_pct: &[f64], abs_ns: &[f64]) -> ErrorSummary {
    if rel_pct.is_empty() {
        return ErrorSummary::default();
    }
    let mut rel = rel_pct.to_vec();
    rel.sort_by(f64::total_cmp);
    let mut rel_abs: Vec<f64> = rel_pct.iter().map(|v| v.abs()).collect();
    rel_abs.sort_by(f64::total_cmp);
    let mut abs_abs: Vec<f64> = abs_ns.iter().map(|v| v.abs()).collect();
    abs_abs.sort_by(f64::total_cmp);
    let within = rel_abs.iter().filter(|v| **v <= 15.0).count() as f64 / rel_abs.len() as f64;
    ErrorSummary {
        count: rel.len(),
        median_rel_pct: percentile(&rel, 50.0),
        median_abs_rel_pct: percentile(&rel_abs, 50.0),
        p5_rel_pct: percentile(&rel, 5.0),
        p10_rel_pct: percentile(&rel, 10.0),
        p90_rel_pct: percentile(&rel, 90.0),
        p95_rel_pct: percentile(&rel, 95.0),
        p95_abs_rel_pct: percentile(&rel_abs, 95.0),
        within_15pct: within,
        median_abs_error_ns: percentile(&abs_abs, 50.0),
    }
}

/// Joins epoch estimates with ground truth by flow and epoch window.
///
/// Partial epochs, estimate-absent epochs, and epochs with no overlapping
/// truth records are excluded and counted.
pub fn evaluate(estimates: &[EpochEstimate], truth: &[GroundTruthRecord]) -> ErrorReport {
    let mut by_flow: HashMap<String, Vec<&GroundTruthRecord>> = HashMap::new();
    for r in truth {
        by_flow.entry(format!("c{}", r.conn_id)).or_default().push(r);
    }
    for recs in by_flow.values_mut() {
        recs.sort_by_key(|r| r.req_sent_ns);
    }

    let mut report = ErrorReport {
        epochs_evaluated: 0,
        epochs_excluded_no_truth: 0,
        epochs_excluded_no_estimate: 0,
        epochs_excluded_partial: 0,
        vs_req_to_res: ErrorSummary::default(),
        vs_req_to_req: ErrorSummary::default(),
        per_epoch: Vec::new(),
    };
    let mut res_rel = Vec::new();
    let mut res_abs = Vec::new();
    let mut req_rel = Vec::new();
    let mut req_abs = Vec::new();

    for est in estimates {
        if est.partial {
            report.epochs_excluded_partial += 1;
            continue;
        }
        let Some(value) = est.estimate_ns else {
            report.epochs_excluded_no_estimate += 1;
            continue;
        };
        let flow = est.flow.to_string();
        let recs = by_flow.get(&flow).map(Vec::as_slice).unwrap_or(&[]);
        let lo = recs.partition_point(|r| r.req_sent_ns < est.epoch_start_ns);
        let hi = recs.partition_point(|r| r.req_sent_ns < est.epoch_end_ns);
        let window = &recs[lo..hi];
        if window.is_empty() {
            report.epochs_excluded_no_truth += 1;
            continue;
        }
        let res_mean = window.iter().map(|r| r.req_to_res_ns as f64).sum::<f64>() / window.len() as f64;
        let req_times: Vec<f64> = window.iter().filter_map(|r| r.req_to_req_ns).map(|v| v as f64).collect();
        let req_mean = if req_times.is_empty() {
            None
        } else {
            Some(req_times.iter().sum::<f64>() / req_times.len() as f64)
        };

        let abs_res = res_mean - value;
        let rel_res = 100.0 * abs_res / res_mean;
        res_rel.push(rel_res);
        res_abs.push(abs_res);
        let (abs_req, rel_req) = match req_mean {
            Some(m) if m > 0.0 => {
                let a = m - value;
                let r = 100.0 * a / m;
                req_rel.push(r);
                req_abs.push(a);
                (Some(a), Some(r))
            }
            _ => (None, None),
        };

        report.epochs_evaluated += 1;
        report.per_epoch.push(EpochError {
            flow,
            epoch_start_ns: est.epoch_start_ns,
            epoch_end_ns: est.epoch_end_ns,
            estimate_ns: value,
            truth_res_mean_ns: res_mean,
            truth_req_mean_ns: req_mean,
            abs_error_res_ns: abs_res,
            rel_error_res_pct: rel_res,
            abs_error_req_ns: abs_req,
            rel_error_req_pct: rel_req,
        });
    }
    report.vs_req_to_res = summarize(&res_rel, &res_abs);
    report.vs_req_to_req = summarize(&req_rel, &req_abs);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use pirate_core::ingest::FlowKey;

    fn estimate(flow: &str, start: u64, end: u64, value: Option<f64>) -> EpochEstimate {
        EpochEstimate {
            flow: FlowKey::synthetic(flow),
            epoch_start_ns: start,
            epoch_end_ns: end,
            estimate_ns: value,
            modes: Vec::new(),
            gaps_observed: 0,
            gaps_discarded: 0,
            partial: false,
        }
    }

    fn rec(conn: u64, sent: u64, res: u64) -> GroundTruthRecord {
        GroundTruthRecord {
            conn_id: conn,
            req_id: 0,
            req_sent_ns: sent,
            last_resp_ns: sent + res,
            trig_req_ns: Some(sent + res),
            req_to_res_ns: res,
            req_to_req_ns: Some(res),
        }
    }

    #[test]
    fn exact_estimate_has_zero_error() {
        let est = [estimate("c0", 0, 1000, Some(100.0))];
        let truth = [rec(0, 10, 100), rec(0, 500, 100)];
        let report = evaluate(&est, &truth);
        assert_eq!(report.epochs_evaluated, 1);
        assert_eq!(report.per_epoch[0].rel_error_res_pct, 0.0);
        assert_eq!(report.per_epoch[0].abs_error_res_ns, 0.0);
    }

    #[test]
    fn error_sign_is_baseline_minus_technique() {
        // Estimate 110 against truth mean 100: absolute -10, relative -10%.
        let est = [estimate("c0", 0, 1000, Some(110.0))];
        let truth = [rec(0, 10, 100)];
        let report = evaluate(&est, &truth);
        assert_eq!(report.per_epoch[0].abs_error_res_ns, -10.0);
        assert_eq!(report.per_epoch[0].rel_error_res_pct, -10.0);
    }

    #[test]
    fn disjoint_ranges_exclude_everything() {
        let est = [estimate("c0", 0, 1000, Some(100.0))];
        let truth = [rec(0, 5000, 100)];
        let report = evaluate(&est, &truth);
        assert_eq!(report.epochs_evaluated, 0);
        assert_eq!(report.epochs_excluded_no_truth, 1);
        assert_eq!(report.vs_req_to_res.count, 0);
    }

    #[test]
    fn absent_estimates_and_partials_are_counted() {
        let mut partial = estimate("c0", 0, 1000, Some(1.0));
        partial.partial = true;
        let est = [estimate("c0", 0, 1000, None), partial];
        let truth = [rec(0, 10, 100)];
        let report = evaluate(&est, &truth);
        assert_eq!(report.epochs_evaluated, 0);
        assert_eq!(report.epochs_excluded_no_estimate, 1);
        assert_eq!(report.epochs_excluded_partial, 1);
    }

    #[test]
    fn window_selection_is_by_send_time() {
        let est = [estimate("c0", 1000, 2000, Some(200.0))];
        let truth = [rec(0, 999, 100), rec(0, 1000, 200), rec(0, 1999, 200), rec(0, 2000, 999)];
        let report = evaluate(&est, &truth);
        assert_eq!(report.per_epoch[0].truth_res_mean_ns, 200.0);
        assert_eq!(report.per_epoch[0].rel_error_res_pct, 0.0);
    }

    #[test]
    fn percentiles_are_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&v, 50.0), 5.0);
        assert_eq!(percentile(&v, 95.0), 10.0);
        assert_eq!(percentile(&v, 5.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 10.0);
    }
}
