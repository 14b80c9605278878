//! Star-topology load-balancer experiment harness.
//!
//! Connections arrive as a Poisson process, each issuing a budget of
//! single-in-flight requests against the server it was assigned at
//! arrival (layer-4 semantics: connections stick). Responses bypass the
//! vantage point; the estimator sees only forward packets and feeds the
//! weight controller, which steers new-connection assignment. Each load
//! point runs paired simulations (same seed, same arrival times, same
//! request trees) under uniform and latency-aware weighting, and reports
//! the p99 ground-truth latency of both arms.

use std::collections::HashMap;

use pirate_core::Ns;
use pirate_core::estimator::{EstimatorConfig, FlowEstimator};
use pirate_core::ingest::{FlowKey, PacketObservation};
use serde::Serialize;

use crate::dist::DistSpec;
use crate::engine::{
    self, ArrivalModel, Dur, EngineConfig, EngineHooks, NetworkSpec, NoHooks, ReleaseDiscipline,
    ServerSpec, SimError, SimOutput, TickServerStats, WorkloadSpec,
};
use crate::evaluate::percentile;
use crate::lbctl::{ControllerConfig, ServerStats, WeightController, WeightDecision};

#[derive(Debug, Clone)]
pub struct ClientSpec {
    pub requests_per_conn: DistSpec,
    pub think_time: DistSpec,
    pub request_size: u32,
    pub response_size: DistSpec,
}

impl Default for ClientSpec {
    fn default() -> Self {
        ClientSpec {
            requests_per_conn: DistSpec::Constant(20.0),
            think_time: DistSpec::Constant(200_000.0),
            request_size: 400,
            response_size: DistSpec::Constant(2_000.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbExperimentSpec {
    pub servers: Vec<ServerSpec>,
    /// Offered load sweep in requests/sec.
    pub offered_loads: Vec<f64>,
    pub controller: ControllerConfig,
    pub controller_interval_ns: Ns,
    pub duration_ns: Ns,
    pub trials: u32,
    pub seed: u64,
    pub client: ClientSpec,
    pub net: NetworkSpec,
    pub estimator: EstimatorConfig,
}

impl LbExperimentSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.servers.len() < 2 {
            return Err(SimError::Config("at least two servers are required".into()));
        }
        if self.offered_loads.is_empty() || self.offered_loads.iter().any(|l| *l <= 0.0) {
            return Err(SimError::Config("offered loads must be positive".into()));
        }
        if self.trials == 0 {
            return Err(SimError::Config("at least one trial is required".into()));
        }
        self.controller.validate().map_err(SimError::Config)?;
        self.estimator.validate().map_err(SimError::Config)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub p99_uniform_ns: f64,
    pub p99_aware_ns: f64,
    pub reduction_pct: f64,
    pub requests_uniform: usize,
    pub requests_aware: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadPoint {
    pub rps: f64,
    pub p99_uniform_ns: f64,
    pub p99_aware_ns: f64,
    /// Mean over trials of the per-trial p99 reduction.
    pub reduction_pct: f64,
    pub reduction_min_pct: f64,
    pub reduction_max_pct: f64,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightsSample {
    pub rps: f64,
    pub trial: u32,
    pub interval: u64,
    pub weights: Vec<f64>,
    pub donors: Vec<usize>,
    pub receivers: Vec<usize>,
    pub regressed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LbReport {
    pub loads: Vec<LoadPoint>,
    /// Controller decisions from the first trial of each load point.
    pub weights_timeseries: Vec<WeightsSample>,
}

/// Estimator-driven controller hooks for the aware arm.
struct AwareHooks {
    est_cfg: EstimatorConfig,
    estimators: HashMap<FlowKey, (usize, FlowEstimator)>,
    /// Per-flow estimates accumulated during the current interval.
    interval_estimates: HashMap<FlowKey, (usize, Vec<f64>)>,
    last_avg: Vec<Option<f64>>,
    controller: WeightController,
    decisions: Vec<WeightDecision>,
}

impl AwareHooks {
    fn new(servers: usize, est_cfg: EstimatorConfig, controller: ControllerConfig) -> Self {
        AwareHooks {
            est_cfg,
            estimators: HashMap::new(),
            interval_estimates: HashMap::new(),
            last_avg: vec![None; servers],
            controller: WeightController::new(controller),
            decisions: Vec::new(),
        }
    }

    fn record(&mut self, flow: &FlowKey, server: usize, estimate: Option<f64>) {
        if let Some(v) = estimate {
            self.interval_estimates.entry(flow.clone()).or_insert_with(|| (server, Vec::new())).1.push(v);
        }
    }
}

impl EngineHooks for AwareHooks {
    fn on_observation(&mut self, obs: &PacketObservation, server: usize) {
        let cfg = self.est_cfg.clone();
        let (_, est) = self
            .estimators
            .entry(obs.flow.clone())
            .or_insert_with(|| (server, FlowEstimator::new(obs.flow.clone(), &cfg)));
        match est.on_packet(obs, &cfg) {
            Ok(Some(epoch)) => self.record(&obs.flow.clone(), server, epoch.estimate_ns),
            Ok(None) => {}
            Err(_) => unreachable!("engine delivers per-flow packets in time order"),
        }
    }

    fn on_conn_closed(&mut self, conn: usize, server: usize, _now: Ns) {
        let flow = FlowKey::synthetic(format!("c{conn}"));
        if let Some((_, mut est)) = self.estimators.remove(&flow)
            && let Some(epoch) = est.finish(&self.est_cfg) {
                self.record(&flow, server, epoch.estimate_ns);
            }
    }

    fn on_tick(&mut self, _now: Ns, stats: &[TickServerStats]) -> Option<Vec<f64>> {
        let n = stats.len();
        // Flow-weighted per-server latency: average each flow's estimates,
        // then average flows per server.
        let mut per_server: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (_, (server, values)) in self.interval_estimates.drain() {
            let flow_mean = values.iter().sum::<f64>() / values.len() as f64;
            per_server[server].push(flow_mean);
        }
        let controller_stats: Vec<ServerStats> = (0..n)
            .map(|s| {
                let fresh = !per_server[s].is_empty();
                if fresh {
                    let mean = per_server[s].iter().sum::<f64>() / per_server[s].len() as f64;
                    self.last_avg[s] = Some(mean);
                }
                ServerStats {
                    avg_latency_ns: self.last_avg[s],
                    requests_last_interval: stats[s].requests_last_interval,
                    active_connections: stats[s].active_connections,
                    weight: stats[s].weight,
                    latency_fresh: fresh,
                }
            })
            .collect();
        let decision = self.controller.update(&controller_stats);
        let weights = decision.weights.clone();
        self.decisions.push(decision);
        Some(weights)
    }
}

fn engine_config(spec: &LbExperimentSpec, rps: f64, seed: u64, ticks: bool) -> EngineConfig {
    let conns_per_sec = rps / spec.client.requests_per_conn.mean().max(1.0);
    EngineConfig {
        workload: WorkloadSpec {
            connections: 1,
            pipeline_depth: 1,
            release: ReleaseDiscipline::Eager,
            initial_requests: 1,
            request_size: spec.client.request_size,
            response_size: spec.client.response_size.clone(),
            think_time: spec.client.think_time.clone(),
            fanout: DistSpec::Constant(1.0),
            request_budget: Some(spec.client.requests_per_conn.clone()),
            duration: Dur(spec.duration_ns),
            seed,
        },
        net: spec.net.clone(),
        servers: spec.servers.clone(),
        arrivals: ArrivalModel::Poisson { conns_per_sec },
        initial_weights: Vec::new(),
        tick_interval_ns: ticks.then_some(spec.controller_interval_ns),
    }
}

fn p99_req_to_res(out: &SimOutput) -> f64 {
    let mut lat: Vec<f64> = out.truth.iter().map(|r| r.req_to_res_ns as f64).collect();
    lat.sort_by(f64::total_cmp);
    percentile(&lat, 99.0)
}

/// Runs one arm of one trial; `aware` switches the controller on.
pub fn run_arm(
    spec: &LbExperimentSpec,
    rps: f64,
    seed: u64,
    aware: bool,
) -> Result<(SimOutput, Vec<WeightDecision>), SimError> {
    let cfg = engine_config(spec, rps, seed, aware);
    if aware {
        let mut hooks = AwareHooks::new(spec.servers.len(), spec.estimator.clone(), spec.controller.clone());
        let out = engine::run(&cfg, &mut hooks)?;
        Ok((out, hooks.decisions))
    } else {
        let out = engine::run(&cfg, &mut NoHooks)?;
        Ok((out, Vec::new()))
    }
}

/// Full experiment: paired uniform/aware runs per load point and trial.
pub fn run_lb_experiment(spec: &LbExperimentSpec) -> Result<LbReport, SimError> {
    spec.validate()?;
    let mut report = LbReport { loads: Vec::new(), weights_timeseries: Vec::new() };
    for (li, &rps) in spec.offered_loads.iter().enumerate() {
        let mut trials = Vec::new();
        for t in 0..spec.trials {
            let seed = spec
                .seed
                .wrapping_add((li as u64) << 32)
                .wrapping_add(t as u64 + 1);
            let (uniform, _) = run_arm(spec, rps, seed, false)?;
            let (aware, decisions) = run_arm(spec, rps, seed, true)?;
            let p99_u = p99_req_to_res(&uniform);
            let p99_a = p99_req_to_res(&aware);
            let reduction = if p99_u > 0.0 { 100.0 * (p99_u - p99_a) / p99_u } else { 0.0 };
            if t == 0 {
                for d in &decisions {
                    report.weights_timeseries.push(WeightsSample {
                        rps,
                        trial: t,
                        interval: d.interval,
                        weights: d.weights.clone(),
                        donors: d.donors.clone(),
                        receivers: d.receivers.clone(),
                        regressed: d.regressed,
                    });
                }
            }
            trials.push(TrialResult {
                seed,
                p99_uniform_ns: p99_u,
                p99_aware_ns: p99_a,
                reduction_pct: reduction,
                requests_uniform: uniform.truth.len(),
                requests_aware: aware.truth.len(),
            });
        }
        let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
        let reductions: Vec<f64> = trials.iter().map(|t| t.reduction_pct).collect();
        report.loads.push(LoadPoint {
            rps,
            p99_uniform_ns: mean(|t| t.p99_uniform_ns),
            p99_aware_ns: mean(|t| t.p99_aware_ns),
            reduction_pct: reductions.iter().sum::<f64>() / reductions.len() as f64,
            reduction_min_pct: reductions.iter().copied().fold(f64::INFINITY, f64::min),
            reduction_max_pct: reductions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            trials,
        });
    }
    Ok(report)
}

/// Convenience constructor used by tests and the acceptance harness.
pub fn default_spec(servers: Vec<ServerSpec>, loads: Vec<f64>, duration_ns: Ns, trials: u32, seed: u64) -> LbExperimentSpec {
    LbExperimentSpec {
        servers,
        offered_loads: loads,
        controller: ControllerConfig::default(),
        controller_interval_ns: 1_000_000_000,
        duration_ns,
        trials,
        seed,
        client: ClientSpec::default(),
        net: NetworkSpec::default(),
        estimator: EstimatorConfig::default(),
    }
}
