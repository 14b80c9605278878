//! Acceptance suite: one test per acceptance criterion, each printing a
//! single pass/fail line (run with `-- --nocapture` to see them all).

use pirate_core::estimator::{EstimatorConfig, FlowEstimator, proportional_mode_sum, run_estimator};
use pirate_core::gapthresh::BatchTracker;
use pirate_core::ingest::{FlowKey, PacketObservation};
use pirate_core::modehist::{EpsilonPolicy, ModeHistogram, ModeStat};
use pirate_sim::ablate::{Arm, run_ablation};
use pirate_sim::config::SimConfig;
use pirate_sim::dist::DistSpec;
use pirate_sim::engine::{Dur, NetworkSpec, ReleaseDiscipline, ServerSpec, WorkloadSpec};
use pirate_sim::evaluate::evaluate;
use pirate_sim::lbctl::{ControllerConfig, ServerStats, WeightController, freshness};
use pirate_sim::lbsim::{ClientSpec, default_spec, run_lb_experiment};
use pirate_sim::simcore::run_sim;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

const US: u64 = 1_000;
const MS: u64 = 1_000_000;
const SEC: u64 = 1_000_000_000;

fn criterion(n: u32, name: &str, pass: bool, details: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {n:2} [{status}] {name}: {details}");
    assert!(pass, "criterion {n} ({name}) failed: {details}");
}

fn data(flow: &str, ts: u64) -> PacketObservation {
    PacketObservation {
        flow: FlowKey::synthetic(flow),
        timestamp_ns: ts,
        payload_len: 400,
        is_pure_ack: false,
        is_full_mtu: false,
    }
}

// 1. Worked-example exactness: modes (100us, 150us, 250us) with counts
//    (4, 2, 1) must yield exactly 950us.
#[test]
fn criterion_01_worked_example() {
    let stat = |mean_us: u64, count: u64| ModeStat {
        mean_ns: (mean_us * US) as f64,
        count,
        candidate: false,
    };
    let modes = vec![stat(100, 4), stat(150, 2), stat(250, 1)];
    let got = proportional_mode_sum(&modes);
    criterion(
        1,
        "proportional mode sum worked example",
        got == Some(950_000.0),
        format!("estimate = {got:?} ns, expected exactly 950000"),
    );
}

// 2. Fixed-threshold hand trace: delta=100us, arrivals 0/10/20/500/510/1000us
//    emit exactly two samples of 500us.
#[test]
fn criterion_02_gapthresh_hand_trace() {
    let mut tracker = BatchTracker::new();
    let mut samples = Vec::new();
    for t_us in [0u64, 10, 20, 500, 510, 1000] {
        if let Some(v) = tracker.observe(t_us * US, 100 * US).unwrap() {
            samples.push((v, t_us * US));
        }
    }
    let expected = vec![(500 * US, 500 * US), (500 * US, 1000 * US)];
    criterion(
        2,
        "fixed-threshold hand trace",
        samples == expected,
        format!("samples = {samples:?}"),
    );
}

// Straightforward reference transcription of the mode-update algorithm,
// deliberately unoptimized and independent of the library implementation.
mod reference {
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct RefMode {
        pub min: u64,
        pub max: u64,
        pub count: u32,
        pub sum: u64,
        pub candidate: bool,
    }

    pub struct RefHist {
        pub modes: Vec<RefMode>,
        pub capacity: usize,
        pub floor: u64,
        pub frac: f64,
        pub discarded: u64,
    }

    impl RefHist {
        pub fn new(capacity: usize, floor: u64, frac: f64) -> Self {
            RefHist { modes: Vec::new(), capacity, floor, frac, discarded: 0 }
        }

        pub fn update(&mut self, gap: u64, candidate: bool) {
            let eps = self.floor.max((self.frac * gap as f64) as u64);
            for i in 0..self.modes.len() {
                let left = self.modes[i].min;
                let right = self.modes[i].max;
                if left.saturating_sub(eps) <= gap && gap <= right.saturating_add(eps) {
                    self.modes[i].count += 1;
                    self.modes[i].sum += gap;
                    self.modes[i].candidate |= candidate;
                    if gap < left {
                        self.modes[i].min = gap;
                        if i > 0 && self.modes[i].min <= self.modes[i - 1].max.saturating_add(eps) {
                            self.merge(i - 1);
                        }
                    } else if gap > right {
                        self.modes[i].max = gap;
                        if i + 1 < self.modes.len()
                            && self.modes[i + 1].min <= self.modes[i].max.saturating_add(eps)
                        {
                            self.merge(i);
                        }
                    }
                    return;
                }
            }
            if self.modes.len() < self.capacity {
                let pos = self.modes.iter().position(|m| m.min > gap).unwrap_or(self.modes.len());
                self.modes.insert(pos, RefMode { min: gap, max: gap, count: 1, sum: gap, candidate });
            } else {
                self.discarded += 1;
            }
        }

        fn merge(&mut self, i: usize) {
            let b = self.modes.remove(i + 1);
            let a = &mut self.modes[i];
            a.max = a.max.max(b.max);
            a.count += b.count;
            a.sum += b.sum;
            a.candidate |= b.candidate;
        }
    }
}

// 3. Mode-histogram oracle equivalence over 1000 randomized gap streams.
#[test]
fn criterion_03_modehist_oracle_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x6d6f6465);
    let mut checked_updates = 0u64;
    for stream_idx in 0..1000u64 {
        let capacity = *[4usize, 10, 16].get(rng.random_range(0..3)).unwrap();
        let (floor, frac) = if rng.random_bool(0.5) {
            (rng.random_range(1_000..100_000u64), 0.0)
        } else {
            (5_000u64, 0.2)
        };
        let len = rng.random_range(1..=1000usize);

        // Mixed generators: clusters, uniform noise, occasional huge gaps.
        let n_clusters = rng.random_range(1..=8usize);
        let centers: Vec<u64> = (0..n_clusters).map(|_| rng.random_range(10_000..100_000_000u64)).collect();
        let gaps: Vec<(u64, bool)> = (0..len)
            .map(|_| {
                let gap = match rng.random_range(0..10u32) {
                    0..=5 => {
                        let c = centers[rng.random_range(0..n_clusters)];
                        let jitter = rng.random_range(0..=(c / 10).max(1));
                        if rng.random_bool(0.5) { c + jitter } else { c.saturating_sub(jitter) }
                    }
                    6..=8 => rng.random_range(0..10_000_000u64),
                    _ => rng.random_range(100_000_000..10_000_000_000u64),
                };
                (gap, rng.random_bool(0.3))
            })
            .collect();

        let mut hist = ModeHistogram::new(capacity, EpsilonPolicy { floor_ns: floor, frac });
        let mut oracle = reference::RefHist::new(capacity, floor, frac);
        for (i, &(gap, cand)) in gaps.iter().enumerate() {
            hist.update(gap, cand);
            oracle.update(gap, cand);
            let got: Vec<reference::RefMode> = hist
                .modes()
                .iter()
                .map(|m| reference::RefMode {
                    min: m.min_ns,
                    max: m.max_ns,
                    count: m.count,
                    sum: m.sum_ns,
                    candidate: m.ibg_candidate,
                })
                .collect();
            assert_eq!(
                got, oracle.modes,
                "stream {stream_idx} diverged after update {i} (gap {gap})"
            );
            assert_eq!(hist.discarded(), oracle.discarded, "stream {stream_idx} discard count");
            assert_eq!(hist.total_offered(), i as u64 + 1, "stream {stream_idx} conservation");
            checked_updates += 1;
        }
    }
    criterion(
        3,
        "mode-histogram oracle equivalence",
        true,
        format!("1000 streams, {checked_updates} updates bit-identical with conservation"),
    );
}

// Periodic batch trace for criterion 4: `segments` groups of whole epochs
// separated by idle pauses.
struct PeriodicTrace {
    b: u64,
    intra: u64,
    inter: u64,
    batches_per_epoch: u64,
    idle: u64,
}

impl PeriodicTrace {
    fn build(&self, epochs_per_segment: u64, segments: u64, with_acks: bool) -> Vec<PacketObservation> {
        let mut packets = Vec::new();
        let mut t = 0u64;
        for seg in 0..segments {
            for batch in 0..(epochs_per_segment * self.batches_per_epoch) {
                if batch > 0 {
                    t += self.inter;
                } else if seg > 0 {
                    t += self.idle;
                }
                packets.push(data("f", t));
                if with_acks {
                    packets.push(PacketObservation { is_pure_ack: true, payload_len: 0, ..data("f", t + US) });
                }
                for _ in 1..self.b {
                    t += self.intra;
                    packets.push(data("f", t));
                }
            }
        }
        packets
    }
}

// 4. Periodic-workload exactness with idle and ACK immunity.
#[test]
fn criterion_04_periodic_exactness() {
    let intra = 10 * US;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for b in [2u64, 4, 8] {
        for inter in [200 * US, 2 * MS, 50 * MS] {
            let period = (b - 1) * intra + inter;
            let m = ((100 * MS + period / 2) / period).max(10); // batches per epoch
            let cfg = EstimatorConfig { epoch_ns: m * period, ..EstimatorConfig::default() };
            // Idle congruent to the inter-batch gap modulo a whole number
            // of epochs keeps segment starts aligned to the epoch grid.
            let n_idle = SEC.div_ceil(period * m) * m;
            let idle = inter + n_idle * period;
            assert!(idle >= SEC);

            let trace = PeriodicTrace { b, intra, inter, batches_per_epoch: m, idle };
            let check = |packets: &[PacketObservation], label: &str| -> (f64, Vec<Option<f64>>) {
                let records = run_estimator(packets.to_vec(), &cfg).unwrap();
                let complete: Vec<_> = records.iter().filter(|r| !r.partial).collect();
                assert!(complete.len() >= 3, "{label}: too few epochs");
                let mut worst_here: f64 = 0.0;
                for rec in &complete {
                    let est = rec.estimate_ns.unwrap_or(f64::NAN);
                    let rel = (est - period as f64).abs() / period as f64;
                    assert!(
                        rel <= 1e-3,
                        "{label}: B={b} G={inter} epoch at {} estimated {est}, period {period} (rel {rel:.5})",
                        rec.epoch_start_ns
                    );
                    worst_here = worst_here.max(rel);
                }
                (worst_here, records.iter().map(|r| r.estimate_ns).collect())
            };

            let clean = trace.build(2, 2, false);
            let (w1, clean_ests) = check(&clean, "clean+idle");
            let acked = trace.build(2, 2, true);
            let (w2, acked_ests) = check(&acked, "acks+idle");
            assert_eq!(clean_ests, acked_ests, "interleaved pure ACKs changed estimates");
            worst = worst.max(w1).max(w2);
            cases += 1;
        }
    }
    criterion(
        4,
        "periodic-workload exactness",
        true,
        format!("{cases} (B, G) cases with idle >= 1s and interleaved ACKs; worst rel error {worst:.2e}"),
    );
}

fn depth1_workload(seed: u64) -> (WorkloadSpec, NetworkSpec, ServerSpec) {
    (
        WorkloadSpec {
            connections: 3,
            pipeline_depth: 1,
            release: ReleaseDiscipline::Eager,
            initial_requests: 1,
            request_size: 400,
            response_size: DistSpec::Constant(2_000.0),
            think_time: DistSpec::Constant(0.0),
            fanout: DistSpec::Constant(1.0),
            request_budget: None,
            duration: Dur(12 * SEC),
            seed,
        },
        NetworkSpec::default(),
        ServerSpec {
            service_time: DistSpec::Uniform(850_000.0, 1_150_000.0),
            capacity_schedule: Vec::new(),
        },
    )
}

fn run_accuracy(workload: &WorkloadSpec, net: &NetworkSpec, server: &ServerSpec) -> (f64, f64) {
    let out = run_sim(workload, net, server).unwrap();
    let estimates = run_estimator(out.observations.clone(), &EstimatorConfig::default()).unwrap();
    let report = evaluate(&estimates, &out.truth);
    assert!(report.epochs_evaluated > 100, "too few epochs: {}", report.epochs_evaluated);
    (report.vs_req_to_res.median_abs_rel_pct, report.vs_req_to_res.within_15pct)
}

// 5. End-to-end simulator accuracy at pipeline depths 1 and 4.
#[test]
fn criterion_05_end_to_end_accuracy() {
    let (w1, net1, srv1) = depth1_workload(5);
    let (median_d1, _) = run_accuracy(&w1, &net1, &srv1);

    // Depth 4: dependency-tree bursts, think <= 5% of the ~11ms latency.
    let w4 = WorkloadSpec {
        connections: 2,
        pipeline_depth: 4,
        release: ReleaseDiscipline::BatchDrain,
        initial_requests: 1,
        request_size: 400,
        response_size: DistSpec::Constant(2_000.0),
        think_time: DistSpec::Uniform(50_000.0, 200_000.0),
        fanout: DistSpec::Choice(vec![(0.0, 0.76), (4.0, 0.24)]),
        request_budget: None,
        duration: Dur(20 * SEC),
        seed: 5,
    };
    let net4 = NetworkSpec {
        fwd_owd: DistSpec::Constant(5_000_000.0),
        rev_owd: DistSpec::Constant(5_000_000.0),
        ..NetworkSpec::default()
    };
    let srv4 = ServerSpec {
        service_time: DistSpec::Uniform(150_000.0, 250_000.0),
        capacity_schedule: Vec::new(),
    };
    let (median_d4, within_d4) = run_accuracy(&w4, &net4, &srv4);

    criterion(
        5,
        "end-to-end accuracy",
        median_d1 <= 2.0 && median_d4 <= 5.0 && within_d4 >= 0.85,
        format!(
            "depth1 median |rel| {median_d1:.3}% (<=2%); depth4 median {median_d4:.3}% (<=5%), within +/-15%: {:.1}% (>=85%)",
            within_d4 * 100.0
        ),
    );
}

// 6. Robustness to 1% forward loss and 25% forward reordering.
#[test]
fn criterion_06_loss_reorder_robustness() {
    let (workload, net, server) = depth1_workload(5);
    let (clean, _) = run_accuracy(&workload, &net, &server);
    let lossy = NetworkSpec { fwd_loss_rate: 0.01, ..net.clone() };
    let (loss_med, _) = run_accuracy(&workload, &lossy, &server);
    let reordered = NetworkSpec { fwd_reorder_rate: 0.25, ..net.clone() };
    let (reorder_med, _) = run_accuracy(&workload, &reordered, &server);
    criterion(
        6,
        "loss/reorder robustness",
        loss_med <= clean + 5.0 && reorder_med <= clean + 5.0,
        format!(
            "median |rel|: clean {clean:.3}%, 1% loss {loss_med:.3}%, 25% reorder {reorder_med:.3}% (degradation cap 5pp)"
        ),
    );
}

fn lb_servers(slow: Option<usize>) -> Vec<ServerSpec> {
    (0..4)
        .map(|i| ServerSpec {
            service_time: DistSpec::Uniform(350_000.0, 650_000.0),
            capacity_schedule: if slow == Some(i) { vec![(Dur(0), 0.5)] } else { Vec::new() },
        })
        .collect()
}

fn lb_client() -> ClientSpec {
    ClientSpec {
        requests_per_conn: DistSpec::Constant(300.0),
        think_time: DistSpec::Constant((10 * MS) as f64),
        request_size: 400,
        response_size: DistSpec::Constant(2_000.0),
    }
}

// 7. Latency-aware weighting cuts p99 on a heterogeneous pool and is
//    neutral on a homogeneous one.
#[test]
fn criterion_07_lb_improvement() {
    let rps = 4900.0; // ~70% of heterogeneous capacity, ~61% of homogeneous
    let mut het = default_spec(lb_servers(Some(3)), vec![rps], 40 * SEC, 5, 42);
    het.client = lb_client();
    let het_report = run_lb_experiment(&het).unwrap();
    let het_point = &het_report.loads[0];

    let mut hom = default_spec(lb_servers(None), vec![rps], 40 * SEC, 5, 42);
    hom.client = lb_client();
    let hom_report = run_lb_experiment(&hom).unwrap();
    let hom_point = &hom_report.loads[0];

    criterion(
        7,
        "load-balancer tail-latency improvement",
        het_point.reduction_pct >= 20.0 && hom_point.reduction_pct.abs() <= 5.0,
        format!(
            "heterogeneous p99 reduction {:.1}% over 5 trials (min {:.1}%, >=20%); homogeneous {:.2}% (within +/-5%)",
            het_point.reduction_pct, het_point.reduction_min_pct, hom_point.reduction_pct
        ),
    );
}

// 8. Controller properties over 10,000 randomized invocations.
#[test]
fn criterion_08_controller_properties() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x6c6263746c);
    let mut invocations = 0u64;
    while invocations < 10_000 {
        let n = rng.random_range(2..=10usize);
        let cfg = ControllerConfig::default();
        let mut ctl = WeightController::new(cfg.clone());
        let total: f64 = rng.random_range(0.1..100.0);
        let mut weights: Vec<f64> = {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|w| w * total / s).collect()
        };
        for _ in 0..rng.random_range(1..=20usize) {
            let stats: Vec<ServerStats> = (0..n)
                .map(|i| {
                    let lat = if rng.random_bool(0.9) {
                        Some(rng.random_range(1e5..5e7))
                    } else {
                        None
                    };
                    ServerStats {
                        avg_latency_ns: lat,
                        requests_last_interval: rng.random_range(0..1000),
                        active_connections: rng.random_range(0..50),
                        weight: weights[i],
                        latency_fresh: lat.is_some() && rng.random_bool(0.8),
                    }
                })
                .collect();
            let decision = ctl.update(&stats);
            invocations += 1;

            // Conservation and non-negativity.
            let before: f64 = weights.iter().sum();
            let after: f64 = decision.weights.iter().sum();
            assert!(
                (after - before).abs() <= 1e-9 * before.max(1.0),
                "total weight drifted: {before} -> {after}"
            );
            assert!(decision.weights.iter().all(|w| *w >= 0.0), "negative weight: {:?}", decision.weights);

            // Gating: when a high set exists, only receivers at least as
            // fresh as every high server may gain weight.
            let defined: Vec<usize> = (0..n).filter(|&i| stats[i].avg_latency_ns.is_some()).collect();
            if !defined.is_empty() {
                let l_min = defined.iter().map(|&i| stats[i].avg_latency_ns.unwrap()).fold(f64::INFINITY, f64::min);
                let high: Vec<usize> = defined
                    .iter()
                    .copied()
                    .filter(|&i| stats[i].avg_latency_ns.unwrap() > cfg.alpha_high * l_min)
                    .collect();
                if !high.is_empty() {
                    let max_high_fresh = high
                        .iter()
                        .map(|&i| freshness(stats[i].requests_last_interval, stats[i].active_connections).unwrap_or(0.0))
                        .fold(0.0, f64::max);
                    for i in 0..n {
                        if decision.weights[i] > weights[i] + 1e-12 {
                            let f = freshness(stats[i].requests_last_interval, stats[i].active_connections);
                            assert!(
                                stats[i].latency_fresh && f.is_some_and(|f| f >= max_high_fresh),
                                "server {i} gained weight while under-fresh: {f:?} < {max_high_fresh}"
                            );
                        }
                    }
                }
            }

            // Scale invariance of set selection under power-of-two scaling.
            let k = rng.random_range(-6i32..=6);
            let scale = (2f64).powi(k);
            let scaled: Vec<ServerStats> = stats
                .iter()
                .map(|s| ServerStats { avg_latency_ns: s.avg_latency_ns.map(|v| v * scale), ..s.clone() })
                .collect();
            let mut ctl2 = WeightController::new(cfg.clone());
            let d2 = ctl2.update(&scaled);
            let mut ctl1 = WeightController::new(cfg.clone());
            let d1 = ctl1.update(&stats);
            assert_eq!(d1.donors, d2.donors, "donor set changed under x{scale}");
            assert_eq!(d1.receivers, d2.receivers, "receiver set changed under x{scale}");

            weights = decision.weights;
        }
    }
    criterion(
        8,
        "controller properties",
        true,
        format!("{invocations} randomized updates: conservation, non-negativity, freshness gating, scale invariance"),
    );
}

// 9. Serialized per-flow estimator state fits in 256 bytes at N=10.
#[test]
fn criterion_09_memory_bound() {
    let cfg = EstimatorConfig::default();
    assert_eq!(cfg.mode_capacity, 10);
    let mut est = FlowEstimator::new(FlowKey::synthetic("f"), &cfg);
    // Ten geometrically spaced gap clusters (x1.6 apart) stay disjoint
    // under the relative proximity radius and fill the histogram.
    let ladder: Vec<u64> = (0..10u32).map(|k| (50_000.0 * 1.6f64.powi(k as i32)) as u64).collect();
    let mut t = 0u64;
    let mut packets = 0;
    for round in 0..40u64 {
        for &gap in &ladder {
            t += gap + round % 3;
            est.on_packet(&data("f", t), &cfg).unwrap();
            packets += 1;
        }
    }
    let bytes = est.encode_compact();
    let full = bytes[0] as usize;
    let decoded = FlowEstimator::decode_compact(FlowKey::synthetic("f"), &bytes, &cfg).unwrap();
    criterion(
        9,
        "per-flow memory bound",
        full == 10 && bytes.len() <= 256 && decoded.encode_compact() == bytes,
        format!(
            "{} modes after {packets} packets serialize to {} bytes (cap 256), lossless round trip",
            full,
            bytes.len()
        ),
    );
}

// 10. Ablation ladder: p95 |relative error| of every arm is non-decreasing
//     in pipeline depth.
#[test]
fn criterion_10_ablation_direction() {
    let cfg = SimConfig {
        workload: WorkloadSpec {
            connections: 2,
            pipeline_depth: 4,
            release: ReleaseDiscipline::BatchDrain,
            initial_requests: 1,
            request_size: 1400,
            response_size: DistSpec::Constant(560.0),
            think_time: DistSpec::Uniform(0.0, 1_000_000.0),
            fanout: DistSpec::Constant(1.0),
            request_budget: None,
            duration: Dur(25 * SEC),
            seed: 8,
        },
        network: NetworkSpec {
            fwd_owd: DistSpec::Constant(5_000_000.0),
            rev_owd: DistSpec::Constant(5_000_000.0),
            link_rate_bps: 8_000_000,
            ..NetworkSpec::default()
        },
        server: ServerSpec {
            service_time: DistSpec::Lognormal { median: 400_000.0, sigma: 0.6 },
            capacity_schedule: Vec::new(),
        },
    };
    let est = EstimatorConfig { epoch_ns: 500 * MS, ..EstimatorConfig::default() };
    let depths = [4u32, 8, 16];
    let report = run_ablation(&cfg, &est, &depths).unwrap();

    let mut all_mono = true;
    let mut lines = Vec::new();
    for arm in Arm::ALL {
        let p95s: Vec<f64> = depths
            .iter()
            .map(|&d| report.summary_for(d, arm).unwrap().p95_abs_rel_pct)
            .collect();
        let counts: Vec<usize> = depths
            .iter()
            .map(|&d| report.summary_for(d, arm).unwrap().count)
            .collect();
        let mono = p95s.windows(2).all(|w| w[0] <= w[1]) && counts.iter().all(|c| *c > 20);
        all_mono &= mono;
        lines.push(format!(
            "{} p95={:?}",
            arm.label(),
            p95s.iter().map(|v| format!("{v:.2}%")).collect::<Vec<_>>()
        ));
    }
    criterion(
        10,
        "ablation tail direction",
        all_mono,
        format!("depths {{4,8,16}}: {}", lines.join("; ")),
    );
}
