//! Deterministic discrete-event engine for closed-loop request/response
//! traffic over an asymmetric path.
//!
//! Clients issue requests subject to a pipeline depth and a dependency
//! tree: each completed response spawns `fanout` child requests after a
//! think-time delay, and an idle connection fetches a fresh root. Requests
//! cross a client-to-vantage segment (serialization, one-way delay,
//! optional tap loss and reordering) and enter a processor-sharing server;
//! responses serialize back to the client and their last byte closes the
//! loop. Only forward-path packets are observable, mirroring direct server
//! return.
//!
//! Determinism: all randomness flows from the workload seed through named
//! ChaCha streams, and per-request parameters are keyed by the request's
//! position in the dependency tree rather than by event order. Two runs
//! that differ only in server assignment therefore see identical
//! connection arrival times and request trees.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use pirate_core::Ns;
use pirate_core::ingest::{FlowKey, PacketObservation};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;

/// Work remaining below this many nanoseconds-of-service counts as done.
const EPS_WORK: f64 = 1e-3;

const CONN_SALT: u64 = 0x636f_6e6e;
const BUDGET_SALT: u64 = 0x6275_6467;
const ROOT_SALT: u64 = 0x726f_6f74;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix64(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// When a connection may move backlog requests into the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReleaseDiscipline {
    /// Send whenever a pipeline slot is free.
    #[default]
    Eager,
    /// Burst-then-pause: send only once every outstanding request has
    /// completed and every triggered request has been generated, then fill
    /// the pipeline in one shot.
    BatchDrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub connections: u32,
    /// Maximum outstanding requests per connection.
    pub pipeline_depth: u32,
    pub release: ReleaseDiscipline,
    /// Root requests issued when a connection opens. More than one
    /// bootstraps that many parallel dependency chains.
    pub initial_requests: u32,
    pub request_size: u32,
    pub response_size: DistSpec,
    pub think_time: DistSpec,
    /// Children spawned per completed response.
    pub fanout: DistSpec,
    /// Per-connection request budget; unlimited when absent.
    pub request_budget: Option<DistSpec>,
    pub duration: Dur,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            connections: 1,
            pipeline_depth: 4,
            release: ReleaseDiscipline::Eager,
            initial_requests: 1,
            request_size: 400,
            response_size: DistSpec::Constant(2_000.0),
            think_time: DistSpec::Constant(0.0),
            fanout: DistSpec::Constant(1.0),
            request_budget: None,
            duration: Dur(10_000_000_000),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub fwd_owd: DistSpec,
    pub rev_owd: DistSpec,
    /// Probability a forward packet is invisible at the vantage tap. The
    /// packet still reaches the server, so the closed loop keeps running
    /// without transport retransmission machinery.
    pub fwd_loss_rate: f64,
    /// Probability a forward packet is held back and delivered immediately
    /// after its successor on the link (an order swap).
    pub fwd_reorder_rate: f64,
    /// Serialization rate in bits/sec; 0 means infinitely fast links.
    pub link_rate_bps: u64,
    pub mtu: u32,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            fwd_owd: DistSpec::Constant(100_000.0),
            rev_owd: DistSpec::Constant(100_000.0),
            fwd_loss_rate: 0.0,
            fwd_reorder_rate: 0.0,
            link_rate_bps: 0,
            mtu: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSpec {
    /// Per-request service demand at unit rate; the server is processor
    /// sharing, so concurrent requests divide its capacity.
    pub service_time: DistSpec,
    /// Piecewise-constant capacity scale over time, e.g. CPU throttling.
    /// Entries are (start, scale), sorted by start; scale 1.0 before the
    /// first entry.
    pub capacity_schedule: Vec<(Dur, f64)>,
}

impl Default for ServerSpec {
    fn default() -> Self {
        ServerSpec { service_time: DistSpec::Constant(1_000_000.0), capacity_schedule: Vec::new() }
    }
}

/// Nanosecond duration that deserializes from strings with units ("100ms")
/// or bare nanosecond integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Dur(pub Ns);

impl<'de> Deserialize<'de> for Dur {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => crate::dist::parse_duration_ns(&s).map(Dur).map_err(D::Error::custom),
            Raw::Int(v) => Ok(Dur(v)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ArrivalModel {
    /// All connections open at time zero.
    AllAtStart,
    /// Connections open as a Poisson process until the workload duration.
    Poisson { conns_per_sec: f64 },
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workload: WorkloadSpec,
    pub net: NetworkSpec,
    pub servers: Vec<ServerSpec>,
    pub arrivals: ArrivalModel,
    /// Server-selection weights for new connections; uniform when empty.
    pub initial_weights: Vec<f64>,
    /// Interval between controller ticks; no ticks when absent.
    pub tick_interval_ns: Option<Ns>,
}

impl EngineConfig {
    pub fn single_server(workload: WorkloadSpec, net: NetworkSpec, server: ServerSpec) -> Self {
        EngineConfig {
            workload,
            net,
            servers: vec![server],
            arrivals: ArrivalModel::AllAtStart,
            initial_weights: Vec::new(),
            tick_interval_ns: None,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if self.servers.is_empty() {
            return fail("at least one server is required".into());
        }
        if let ArrivalModel::AllAtStart = self.arrivals
            && self.workload.connections == 0 {
                return fail("connections must be positive".into());
            }
        if let ArrivalModel::Poisson { conns_per_sec } = self.arrivals
            && conns_per_sec <= 0.0
        {
            return fail("connection arrival rate must be positive".into());
        }
        if self.workload.pipeline_depth == 0 {
            return fail("pipeline depth must be at least 1".into());
        }
        if self.workload.initial_requests == 0 {
            return fail("initial requests must be at least 1".into());
        }
        for rate in [self.net.fwd_loss_rate, self.net.fwd_reorder_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return fail(format!("loss/reorder rates must be within [0,1], got {rate}"));
            }
        }
        if !self.initial_weights.is_empty() {
            if self.initial_weights.len() != self.servers.len() {
                return fail("initial weights must match server count".into());
            }
            if self.initial_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                || self.initial_weights.iter().sum::<f64>() <= 0.0
            {
                return fail("initial weights must be non-negative with positive sum".into());
            }
        }
        for (i, s) in self.servers.iter().enumerate() {
            s.service_time.validate().map_err(|e| SimError::Config(format!("server {i}: {e}")))?;
            if !s.capacity_schedule.windows(2).all(|w| w[0].0 <= w[1].0) {
                return fail(format!("server {i}: capacity schedule must be sorted by time"));
            }
            if s.capacity_schedule.iter().any(|(_, scale)| !scale.is_finite() || *scale < 0.0) {
                return fail(format!("server {i}: capacity scales must be non-negative"));
            }
        }
        for d in [
            &self.workload.response_size,
            &self.workload.think_time,
            &self.workload.fanout,
            &self.net.fwd_owd,
            &self.net.rev_owd,
        ] {
            d.validate().map_err(SimError::Config)?;
        }
        if let Some(b) = &self.workload.request_budget {
            b.validate().map_err(SimError::Config)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("controller produced invalid weights at interval {interval}: {weights:?}")]
    InvalidWeights { interval: u64, weights: Vec<f64> },
}

/// Ground truth for one completed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub conn_id: u64,
    pub req_id: u64,
    pub req_sent_ns: Ns,
    pub last_resp_ns: Ns,
    /// Send time of the first request triggered by this response.
    pub trig_req_ns: Option<Ns>,
    pub req_to_res_ns: Ns,
    pub req_to_req_ns: Option<Ns>,
}

/// Per-server counters handed to the tick hook.
#[derive(Debug, Clone, PartialEq)]
pub struct TickServerStats {
    pub requests_last_interval: u64,
    pub active_connections: u64,
    pub weight: f64,
}

/// Observer interface for in-process consumers (the load-balancer harness).
pub trait EngineHooks {
    /// A packet became visible at the vantage point, bound for `server`.
    fn on_observation(&mut self, _obs: &PacketObservation, _server: usize) {}
    /// A connection finished (budget exhausted or drained past duration).
    fn on_conn_closed(&mut self, _conn: usize, _server: usize, _now: Ns) {}
    /// Periodic controller tick; return new selection weights to apply.
    fn on_tick(&mut self, _now: Ns, _stats: &[TickServerStats]) -> Option<Vec<f64>> {
        None
    }
}

/// Hook implementation that observes nothing.
pub struct NoHooks;

impl EngineHooks for NoHooks {}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    /// Vantage-point trace, globally non-decreasing in time.
    pub observations: Vec<PacketObservation>,
    /// One record per completed request, sorted by (conn, send order).
    pub truth: Vec<GroundTruthRecord>,
    pub packets_sent: u64,
    pub requests_sent: u64,
    pub connections_opened: u64,
}

#[derive(Debug)]
enum Event {
    ConnArrival,
    ConnStart { conn: usize },
    SpawnRelease { conn: usize, reqs: Vec<usize> },
    WireDeliver { req: usize, visible: bool },
    HeldFlush { token: u64 },
    PsRecompute { server: usize, version: u64 },
    CapacityStep { server: usize, idx: usize },
    ResponseDelivered { req: usize },
    Tick,
}

struct QItem {
    at: Ns,
    seq: u64,
    event: Event,
}

impl PartialEq for QItem {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for QItem {}
impl PartialOrd for QItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QItem {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct ReqState {
    conn: usize,
    path_key: u64,
    resp_size: u32,
    work_ns: f64,
    fanout: u32,
    think_ns: Ns,
    parent: Option<usize>,
    sent_ns: Option<Ns>,
    delivered_ns: Option<Ns>,
    trig_ns: Option<Ns>,
    req_id: u64,
}

struct Conn {
    seed: u64,
    server: usize,
    flow_key: FlowKey,
    backlog: VecDeque<usize>,
    outstanding: u32,
    pending_spawns: u32,
    created: u64,
    sent: u64,
    budget: Option<u64>,
    root_counter: u64,
    egress_free: Ns,
    last_arrival: Ns,
    // Responses are released to the client in request order, like a byte
    // stream would deliver them.
    next_resp_id: u64,
    parked_responses: BTreeMap<u64, usize>,
    closed: bool,
}

struct Held {
    token: u64,
    req: usize,
    visible: bool,
    natural: Ns,
}

struct PsServer {
    jobs: Vec<(usize, f64)>,
    rate: f64,
    last_update: Ns,
    version: u64,
    egress_free: Ns,
}

impl PsServer {
    fn advance(&mut self, now: Ns) {
        if now > self.last_update && !self.jobs.is_empty() && self.rate > 0.0 {
            let share = (now - self.last_update) as f64 * self.rate / self.jobs.len() as f64;
            for (_, rem) in &mut self.jobs {
                *rem -= share;
            }
        }
        self.last_update = self.last_update.max(now);
    }
}

struct Engine {
    workload: WorkloadSpec,
    net: NetworkSpec,
    server_specs: Vec<ServerSpec>,
    arrivals: ArrivalModel,
    duration: Ns,
    tick_interval: Option<Ns>,

    heap: BinaryHeap<Reverse<QItem>>,
    seq: u64,
    conns: Vec<Conn>,
    reqs: Vec<ReqState>,
    servers: Vec<PsServer>,
    weights: Vec<f64>,

    held: Option<Held>,
    hold_token: u64,
    hold_cap: Ns,

    net_rng: ChaCha12Rng,
    select_rng: ChaCha12Rng,
    arrival_rng: ChaCha12Rng,

    observations: Vec<PacketObservation>,
    packets_sent: u64,
    requests_sent: u64,
    interval_requests: Vec<u64>,
    active_conns: Vec<u64>,
    tick_index: u64,
    now: Ns,
}

/// Runs one simulation to completion.
pub fn run(cfg: &EngineConfig, hooks: &mut impl EngineHooks) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let n_servers = cfg.servers.len();
    let weights = if cfg.initial_weights.is_empty() {
        vec![1.0 / n_servers as f64; n_servers]
    } else {
        cfg.initial_weights.clone()
    };
    let seed = cfg.workload.seed;
    let hold_cap = ((2.0 * cfg.net.fwd_owd.mean()) as u64).max(1_000_000);
    let mut eng = Engine {
        workload: cfg.workload.clone(),
        net: cfg.net.clone(),
        server_specs: cfg.servers.clone(),
        arrivals: cfg.arrivals.clone(),
        duration: cfg.workload.duration.0,
        tick_interval: cfg.tick_interval_ns,
        heap: BinaryHeap::new(),
        seq: 0,
        conns: Vec::new(),
        reqs: Vec::new(),
        servers: cfg
            .servers
            .iter()
            .map(|s| PsServer {
                jobs: Vec::new(),
                rate: s.capacity_schedule.first().filter(|(t, _)| t.0 == 0).map_or(1.0, |(_, r)| *r),
                last_update: 0,
                version: 0,
                egress_free: 0,
            })
            .collect(),
        weights,
        held: None,
        hold_token: 0,
        hold_cap,
        net_rng: ChaCha12Rng::seed_from_u64(mix64(seed, 0x6e65_7477)),
        select_rng: ChaCha12Rng::seed_from_u64(mix64(seed, 0x7365_6c65)),
        arrival_rng: ChaCha12Rng::seed_from_u64(mix64(seed, 0x6172_7276)),
        observations: Vec::new(),
        packets_sent: 0,
        requests_sent: 0,
        interval_requests: vec![0; n_servers],
        active_conns: vec![0; n_servers],
        tick_index: 0,
        now: 0,
    };

    for (s, spec) in cfg.servers.iter().enumerate() {
        for (idx, (t, _)) in spec.capacity_schedule.iter().enumerate() {
            if t.0 > 0 {
                eng.schedule(t.0, Event::CapacityStep { server: s, idx });
            }
        }
    }
    match cfg.arrivals {
        ArrivalModel::AllAtStart => {
            for _ in 0..cfg.workload.connections {
                let id = eng.create_conn();
                eng.schedule(0, Event::ConnStart { conn: id });
            }
        }
        ArrivalModel::Poisson { conns_per_sec } => {
            let gap = DistSpec::Exp(1e9 / conns_per_sec).sample_ns(&mut eng.arrival_rng);
            if gap < eng.duration {
                eng.schedule(gap, Event::ConnArrival);
            }
        }
    }
    if let Some(interval) = eng.tick_interval {
        eng.schedule(interval, Event::Tick);
    }

    while let Some(Reverse(item)) = eng.heap.pop() {
        eng.now = item.at;
        eng.dispatch(item.at, item.event, hooks)?;
    }
    let end = eng.now;
    for c in 0..eng.conns.len() {
        if !eng.conns[c].closed {
            eng.close_conn(c, end, hooks);
        }
    }

    let mut truth: Vec<GroundTruthRecord> = eng
        .reqs
        .iter()
        .filter_map(|r| {
            let sent = r.sent_ns?;
            let delivered = r.delivered_ns?;
            Some(GroundTruthRecord {
                conn_id: r.conn as u64,
                req_id: r.req_id,
                req_sent_ns: sent,
                last_resp_ns: delivered,
                trig_req_ns: r.trig_ns,
                req_to_res_ns: delivered - sent,
                req_to_req_ns: r.trig_ns.map(|t| t - sent),
            })
        })
        .collect();
    truth.sort_by_key(|r| (r.conn_id, r.req_id));
    Ok(SimOutput {
        observations: eng.observations,
        truth,
        packets_sent: eng.packets_sent,
        requests_sent: eng.requests_sent,
        connections_opened: eng.conns.len() as u64,
    })
}

impl Engine {
    fn schedule(&mut self, at: Ns, event: Event) {
        self.seq += 1;
        self.heap.push(Reverse(QItem { at, seq: self.seq, event }));
    }

    fn dispatch(&mut self, now: Ns, event: Event, hooks: &mut impl EngineHooks) -> Result<(), SimError> {
        match event {
            Event::ConnArrival => {
                let id = self.create_conn();
                self.conn_start(id, now);
                // Next arrival; the chain stops at the workload duration.
                if let ArrivalModel::Poisson { conns_per_sec } = self.arrivals {
                    let gap = DistSpec::Exp(1e9 / conns_per_sec).sample_ns(&mut self.arrival_rng).max(1);
                    if now + gap < self.duration {
                        self.schedule(now + gap, Event::ConnArrival);
                    }
                }
            }
            Event::ConnStart { conn } => self.conn_start(conn, now),
            Event::SpawnRelease { conn, reqs } => {
                self.conns[conn].pending_spawns -= 1;
                self.conns[conn].backlog.extend(reqs);
                self.try_send(conn, now);
            }
            Event::WireDeliver { req, visible } => {
                let conn = self.reqs[req].conn;
                let server = self.conns[conn].server;
                self.interval_requests[server] += 1;
                if visible {
                    let obs = PacketObservation {
                        flow: self.conns[conn].flow_key.clone(),
                        timestamp_ns: now,
                        payload_len: self.workload.request_size,
                        is_pure_ack: false,
                        is_full_mtu: self.workload.request_size >= self.net.mtu,
                    };
                    hooks.on_observation(&obs, server);
                    self.observations.push(obs);
                }
                let work = self.reqs[req].work_ns.max(0.0);
                self.servers[server].advance(now);
                self.servers[server].jobs.push((req, work));
                self.reschedule_ps(server, now);
            }
            Event::HeldFlush { token } => {
                if self.held.as_ref().is_some_and(|h| h.token == token) {
                    let h = self.held.take().unwrap();
                    self.schedule(now.max(h.natural), Event::WireDeliver { req: h.req, visible: h.visible });
                }
            }
            Event::PsRecompute { server, version } => {
                if self.servers[server].version != version {
                    return Ok(());
                }
                self.servers[server].advance(now);
                let done: Vec<usize> = self.servers[server]
                    .jobs
                    .iter()
                    .filter(|(_, rem)| *rem <= EPS_WORK)
                    .map(|(req, _)| *req)
                    .collect();
                self.servers[server].jobs.retain(|(_, rem)| *rem > EPS_WORK);
                for req in done {
                    self.enqueue_response(server, req, now);
                }
                self.reschedule_ps(server, now);
            }
            Event::CapacityStep { server, idx } => {
                self.servers[server].advance(now);
                self.servers[server].rate = self.server_specs[server].capacity_schedule[idx].1;
                self.reschedule_ps(server, now);
            }
            Event::ResponseDelivered { req } => self.response_delivered(req, now, hooks),
            Event::Tick => {
                self.tick_index += 1;
                let stats: Vec<TickServerStats> = (0..self.servers.len())
                    .map(|s| TickServerStats {
                        requests_last_interval: self.interval_requests[s],
                        active_connections: self.active_conns[s],
                        weight: self.weights[s],
                    })
                    .collect();
                self.interval_requests.iter_mut().for_each(|c| *c = 0);
                if let Some(new_weights) = hooks.on_tick(now, &stats) {
                    let valid = new_weights.len() == self.servers.len()
                        && new_weights.iter().all(|w| w.is_finite() && *w >= 0.0)
                        && new_weights.iter().sum::<f64>() > 0.0;
                    if !valid {
                        return Err(SimError::InvalidWeights {
                            interval: self.tick_index,
                            weights: new_weights,
                        });
                    }
                    self.weights = new_weights;
                }
                let interval = self.tick_interval.unwrap();
                if now < self.duration {
                    self.schedule(now + interval, Event::Tick);
                }
            }
        }
        Ok(())
    }

    fn create_conn(&mut self) -> usize {
        let id = self.conns.len();
        let seed = mix64(self.workload.seed, CONN_SALT ^ (id as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        let server = self.pick_server();
        let budget = self.workload.request_budget.as_ref().map(|d| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix64(seed, BUDGET_SALT));
            d.sample_count(&mut rng).max(1)
        });
        self.conns.push(Conn {
            seed,
            server,
            flow_key: FlowKey::synthetic(format!("c{id}")),
            backlog: VecDeque::new(),
            outstanding: 0,
            pending_spawns: 0,
            created: 0,
            sent: 0,
            budget,
            root_counter: 0,
            egress_free: 0,
            last_arrival: 0,
            next_resp_id: 0,
            parked_responses: BTreeMap::new(),
            closed: false,
        });
        self.active_conns[server] += 1;
        id
    }

    fn pick_server(&mut self) -> usize {
        if self.servers.len() == 1 {
            return 0;
        }
        let total: f64 = self.weights.iter().sum();
        let mut draw = self.select_rng.random::<f64>() * total;
        for (i, w) in self.weights.iter().enumerate() {
            if draw < *w {
                return i;
            }
            draw -= w;
        }
        self.weights.len() - 1
    }

    fn conn_start(&mut self, conn: usize, now: Ns) {
        for _ in 0..self.workload.initial_requests {
            if !self.can_create(conn, now) {
                break;
            }
            let key = mix64(ROOT_SALT, self.conns[conn].root_counter);
            self.conns[conn].root_counter += 1;
            let req = self.create_request(conn, None, key);
            self.conns[conn].backlog.push_back(req);
        }
        // A connection that cannot create anything closes immediately.
        if self.conns[conn].backlog.is_empty() {
            self.conns[conn].closed = true;
            self.active_conns[self.conns[conn].server] -= 1;
            return;
        }
        self.try_send(conn, now);
    }

    fn can_create(&self, conn: usize, now: Ns) -> bool {
        now < self.duration && self.conns[conn].budget.is_none_or(|b| self.conns[conn].created < b)
    }

    fn create_request(&mut self, conn: usize, parent: Option<usize>, path_key: u64) -> usize {
        let c = &self.conns[conn];
        let mut rng = ChaCha12Rng::seed_from_u64(mix64(c.seed, path_key));
        let resp_size = self.workload.response_size.sample_ns(&mut rng).min(u32::MAX as u64) as u32;
        let work_ns = self.server_specs[c.server].service_time.sample(&mut rng).max(0.0);
        let fanout = self.workload.fanout.sample_count(&mut rng).min(u32::MAX as u64) as u32;
        let think_ns = self.workload.think_time.sample_ns(&mut rng);
        let idx = self.reqs.len();
        self.reqs.push(ReqState {
            conn,
            path_key,
            resp_size,
            work_ns,
            fanout,
            think_ns,
            parent,
            sent_ns: None,
            delivered_ns: None,
            trig_ns: None,
            req_id: 0,
        });
        self.conns[conn].created += 1;
        idx
    }

    fn try_send(&mut self, conn: usize, now: Ns) {
        if self.workload.release == ReleaseDiscipline::BatchDrain
            && (self.conns[conn].outstanding > 0 || self.conns[conn].pending_spawns > 0)
        {
            return;
        }
        while self.conns[conn].outstanding < self.workload.pipeline_depth
            && !self.conns[conn].backlog.is_empty()
        {
            let req = self.conns[conn].backlog.pop_front().unwrap();
            self.send_request(conn, req, now);
        }
    }

    fn send_request(&mut self, conn: usize, req: usize, now: Ns) {
        self.reqs[req].sent_ns = Some(now);
        self.reqs[req].req_id = self.conns[conn].sent;
        self.conns[conn].sent += 1;
        self.requests_sent += 1;
        if let Some(p) = self.reqs[req].parent
            && self.reqs[p].trig_ns.is_none() {
                self.reqs[p].trig_ns = Some(now);
            }
        self.conns[conn].outstanding += 1;
        self.packets_sent += 1;

        let tx = self.tx_ns(self.workload.request_size);
        let start = now.max(self.conns[conn].egress_free);
        let depart = start + tx;
        self.conns[conn].egress_free = depart;

        let visible = if self.net.fwd_loss_rate > 0.0 {
            self.net_rng.random::<f64>() >= self.net.fwd_loss_rate
        } else {
            true
        };
        let owd = self.net.fwd_owd.sample_ns(&mut self.net_rng);
        // The path is FIFO per connection; jitter stretches gaps but never
        // reorders by itself.
        let arrival = (depart + owd).max(self.conns[conn].last_arrival);
        self.conns[conn].last_arrival = arrival;

        let reorder = self.net.fwd_reorder_rate > 0.0
            && self.held.is_none()
            && self.net_rng.random::<f64>() < self.net.fwd_reorder_rate;
        if reorder {
            self.hold_token += 1;
            self.held = Some(Held { token: self.hold_token, req, visible, natural: arrival });
            self.schedule(arrival + self.hold_cap, Event::HeldFlush { token: self.hold_token });
        } else {
            self.schedule(arrival, Event::WireDeliver { req, visible });
            if let Some(h) = self.held.take() {
                // Held packet lands right behind the packet that overtook it.
                self.schedule(arrival.max(h.natural), Event::WireDeliver { req: h.req, visible: h.visible });
            }
        }
    }

    fn tx_ns(&self, bytes: u32) -> Ns {
        if self.net.link_rate_bps == 0 {
            0
        } else {
            (bytes as f64 * 8.0 * 1e9 / self.net.link_rate_bps as f64).round() as Ns
        }
    }

    fn reschedule_ps(&mut self, server: usize, now: Ns) {
        let srv = &mut self.servers[server];
        srv.version += 1;
        if srv.jobs.is_empty() || srv.rate <= 0.0 {
            return;
        }
        let min_rem = srv.jobs.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
        let dt = (min_rem.max(0.0) * srv.jobs.len() as f64 / srv.rate).ceil().max(1.0) as Ns;
        let version = srv.version;
        self.schedule(now + dt, Event::PsRecompute { server, version });
    }

    /// Parks a finished request until all earlier requests of its
    /// connection have responded, then releases the in-order prefix.
    fn enqueue_response(&mut self, server: usize, req: usize, now: Ns) {
        let conn = self.reqs[req].conn;
        let id = self.reqs[req].req_id;
        self.conns[conn].parked_responses.insert(id, req);
        while let Some(next) = {
            let c = &mut self.conns[conn];
            let key = c.next_resp_id;
            c.parked_responses.remove(&key)
        } {
            self.conns[conn].next_resp_id += 1;
            self.respond(server, next, now);
        }
    }

    fn respond(&mut self, server: usize, req: usize, now: Ns) {
        let resp_tx = self.tx_ns(self.reqs[req].resp_size);
        let srv = &mut self.servers[server];
        let start = now.max(srv.egress_free);
        let leave = start + resp_tx;
        srv.egress_free = leave;
        let rev = self.net.rev_owd.sample_ns(&mut self.net_rng);
        self.schedule(leave + rev, Event::ResponseDelivered { req });
    }

    fn response_delivered(&mut self, req: usize, now: Ns, hooks: &mut impl EngineHooks) {
        self.reqs[req].delivered_ns = Some(now);
        let conn = self.reqs[req].conn;
        self.conns[conn].outstanding -= 1;

        let think = self.reqs[req].think_ns;
        let fanout = self.reqs[req].fanout;
        let mut spawned = Vec::new();
        for j in 0..fanout {
            if !self.can_create(conn, now) {
                break;
            }
            let key = mix64(self.reqs[req].path_key, j as u64 + 1);
            let child = self.create_request(conn, Some(req), key);
            spawned.push(child);
        }
        if !spawned.is_empty() {
            self.conns[conn].pending_spawns += 1;
            self.schedule(now + think, Event::SpawnRelease { conn, reqs: spawned });
        } else if self.conns[conn].outstanding == 0
            && self.conns[conn].backlog.is_empty()
            && self.conns[conn].pending_spawns == 0
        {
            if self.can_create(conn, now) {
                // Dependency tree exhausted: fetch a fresh root, causally
                // triggered by this response.
                let key = mix64(ROOT_SALT, self.conns[conn].root_counter);
                self.conns[conn].root_counter += 1;
                let root = self.create_request(conn, Some(req), key);
                self.conns[conn].pending_spawns += 1;
                self.schedule(now + think, Event::SpawnRelease { conn, reqs: vec![root] });
            } else {
                self.close_conn(conn, now, hooks);
            }
        }
        self.try_send(conn, now);
    }

    fn close_conn(&mut self, conn: usize, now: Ns, hooks: &mut impl EngineHooks) {
        if self.conns[conn].closed {
            return;
        }
        self.conns[conn].closed = true;
        let server = self.conns[conn].server;
        self.active_conns[server] -= 1;
        hooks.on_conn_closed(conn, server, now);
    }
}
