//! Latency-aware server weight controller.
//!
//! Each interval, servers whose average latency exceeds the high watermark
//! (`alpha_high` times the smallest server latency) donate a latency-
//! proportional slice of their weight into a pool; servers below the low
//! watermark that have sufficient measurement freshness split the pool
//! evenly, capped per server, with any residue returned to the donors.
//! When nothing is high and latencies have been flat for `k` consecutive
//! intervals, weights drift back toward uniform.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub alpha_high: f64,
    pub alpha_low: f64,
    pub k_stable_intervals: u32,
    /// Fraction of a high-latency server's weight given up per interval.
    pub shift_fraction: f64,
    /// Cap on one server's gain per interval, as a fraction of total weight.
    pub increment_cap_fraction: f64,
    /// Fraction of the way each weight moves toward uniform per stable
    /// interval.
    pub equalize_step: f64,
    /// Relative per-server latency change below which an interval counts
    /// as unchanged.
    pub stability_tolerance: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            alpha_high: 1.5,
            alpha_low: 1.2,
            k_stable_intervals: 3,
            shift_fraction: 0.2,
            increment_cap_fraction: 0.1,
            equalize_step: 0.1,
            stability_tolerance: 0.05,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha_low > 1.0 && self.alpha_high > self.alpha_low) {
            return Err("need 1 < alpha_low < alpha_high".into());
        }
        for (name, v) in [
            ("shift_fraction", self.shift_fraction),
            ("increment_cap_fraction", self.increment_cap_fraction),
            ("equalize_step", self.equalize_step),
            ("stability_tolerance", self.stability_tolerance),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Per-server controller inputs for one interval.
#[derive(Debug, Clone)]
pub struct ServerStats {
    /// Representative average latency; retained from earlier intervals when
    /// the current one was silent.
    pub avg_latency_ns: Option<f64>,
    pub requests_last_interval: u64,
    pub active_connections: u64,
    pub weight: f64,
    /// Whether any latency estimate arrived this interval. Silent servers
    /// keep their last latency but may not receive weight.
    pub latency_fresh: bool,
}

/// Requests received last interval per active connection; `None` when the
/// server has no active connections (ineligible to receive weight).
pub fn freshness(requests_last_interval: u64, active_connections: u64) -> Option<f64> {
    if active_connections == 0 {
        None
    } else {
        Some(requests_last_interval as f64 / active_connections as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDecision {
    pub interval: u64,
    pub l_min_ns: Option<f64>,
    pub high_watermark_ns: Option<f64>,
    pub low_watermark_ns: Option<f64>,
    pub donors: Vec<usize>,
    pub receivers: Vec<usize>,
    pub regressed: bool,
    pub latencies_ns: Vec<Option<f64>>,
    pub weights: Vec<f64>,
}

/// Stateful controller: owns the stability streak across intervals.
#[derive(Debug, Clone)]
pub struct WeightController {
    cfg: ControllerConfig,
    prev_latencies: Vec<Option<f64>>,
    stable_intervals: u32,
    interval: u64,
}

impl WeightController {
    pub fn new(cfg: ControllerConfig) -> Self {
        WeightController { cfg, prev_latencies: Vec::new(), stable_intervals: 0, interval: 0 }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Computes the next weight vector. Total weight is conserved exactly
    /// and no weight ever becomes negative.
    pub fn update(&mut self, stats: &[ServerStats]) -> WeightDecision {
        self.interval += 1;
        let n = stats.len();
        let mut weights: Vec<f64> = stats.iter().map(|s| s.weight).collect();
        let latencies: Vec<Option<f64>> = stats.iter().map(|s| s.avg_latency_ns).collect();
        let total: f64 = weights.iter().sum();

        let mut decision = WeightDecision {
            interval: self.interval,
            l_min_ns: None,
            high_watermark_ns: None,
            low_watermark_ns: None,
            donors: Vec::new(),
            receivers: Vec::new(),
            regressed: false,
            latencies_ns: latencies.clone(),
            weights: weights.clone(),
        };

        let stable_now = n > 0
            && self.prev_latencies.len() == n
            && latencies.iter().enumerate().all(|(i, cur)| {
                match (self.prev_latencies.get(i).copied().flatten(), cur) {
                    (Some(p), Some(c)) if p > 0.0 => ((c - p) / p).abs() < self.cfg.stability_tolerance,
                    (Some(p), Some(c)) => *c == p,
                    _ => false,
                }
            });
        self.stable_intervals = if stable_now { self.stable_intervals + 1 } else { 0 };
        self.prev_latencies = latencies.clone();

        let defined: Vec<usize> = (0..n).filter(|&i| latencies[i].is_some()).collect();
        if n < 2 || defined.is_empty() {
            return decision;
        }

        let l_min = defined.iter().map(|&i| latencies[i].unwrap()).fold(f64::INFINITY, f64::min);
        let high_mark = self.cfg.alpha_high * l_min;
        let low_mark = self.cfg.alpha_low * l_min;
        decision.l_min_ns = Some(l_min);
        decision.high_watermark_ns = Some(high_mark);
        decision.low_watermark_ns = Some(low_mark);

        let high: Vec<usize> = defined.iter().copied().filter(|&i| latencies[i].unwrap() > high_mark).collect();
        let low: Vec<usize> = defined.iter().copied().filter(|&i| latencies[i].unwrap() < low_mark).collect();

        if high.is_empty() {
            if self.stable_intervals >= self.cfg.k_stable_intervals {
                let target = total / n as f64;
                for w in &mut weights {
                    *w += self.cfg.equalize_step * (target - *w);
                }
                decision.regressed = true;
            }
            decision.weights = weights;
            return decision;
        }

        // Donation proportional to each high server's share of high-set
        // latency.
        let high_lat_sum: f64 = high.iter().map(|&i| latencies[i].unwrap()).sum();
        let donations: Vec<(usize, f64)> = high
            .iter()
            .map(|&i| {
                let frac = latencies[i].unwrap() / high_lat_sum;
                (i, self.cfg.shift_fraction * weights[i] * frac)
            })
            .collect();
        let pool: f64 = donations.iter().map(|(_, d)| d).sum();
        decision.donors = high.clone();

        let max_high_freshness = high
            .iter()
            .map(|&i| freshness(stats[i].requests_last_interval, stats[i].active_connections).unwrap_or(0.0))
            .fold(0.0, f64::max);
        let receivers: Vec<usize> = low
            .iter()
            .copied()
            .filter(|&i| {
                stats[i].latency_fresh
                    && freshness(stats[i].requests_last_interval, stats[i].active_connections)
                        .is_some_and(|f| f >= max_high_freshness)
            })
            .collect();

        if receivers.is_empty() || pool <= 0.0 {
            decision.weights = weights;
            return decision;
        }
        decision.receivers = receivers.clone();

        let share = pool / receivers.len() as f64;
        let cap = self.cfg.increment_cap_fraction * total;
        let receipt = share.min(cap);
        for (i, d) in &donations {
            weights[*i] -= d;
        }
        for &i in &receivers {
            weights[i] += receipt;
        }
        let residual = pool - receipt * receivers.len() as f64;
        if residual > 0.0 {
            for (i, d) in &donations {
                weights[*i] += residual * (d / pool);
            }
        }
        decision.weights = weights;
        decision
    }
}
