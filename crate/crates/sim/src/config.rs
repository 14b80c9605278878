//! TOML configuration files for simulation and load-balancer experiments.
//!
//! Simulation config (`simulate`, `ablate`):
//!
//! ```toml
//! [workload]
//! connections = 2
//! pipeline_depth = 4
//! think_time = "uniform:50us,200us"
//! fanout = "choice:0@0.76,4@0.24"
//! duration = "20s"
//! seed = 5
//!
//! [network]
//! fwd_owd = "constant:5ms"
//! fwd_loss_rate = 0.01
//!
//! [server]
//! service_time = "uniform:150us,250us"
//! capacity_schedule = [["0s", 1.0], ["10s", 0.5]]
//! ```
//!
//! Load-balancer config (`lbsim`) adds `[lb]`, `[client]`, `[controller]`,
//! and one `[[servers]]` table per backend.

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::engine::{Dur, NetworkSpec, ServerSpec, SimError, WorkloadSpec};
use crate::lbctl::ControllerConfig;
use crate::lbsim::{ClientSpec, LbExperimentSpec};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub server: ServerSpec,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("config parse error: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbSection {
    pub offered_loads: Vec<f64>,
    pub duration: Dur,
    pub trials: u32,
    pub controller_interval: Dur,
    pub seed: u64,
}

impl Default for LbSection {
    fn default() -> Self {
        LbSection {
            offered_loads: vec![2000.0],
            duration: Dur(30_000_000_000),
            trials: 5,
            controller_interval: Dur(1_000_000_000),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientSection {
    pub requests_per_conn: DistSpec,
    pub think_time: DistSpec,
    pub request_size: u32,
    pub response_size: DistSpec,
}

impl Default for ClientSection {
    fn default() -> Self {
        let d = ClientSpec::default();
        ClientSection {
            requests_per_conn: d.requests_per_conn,
            think_time: d.think_time,
            request_size: d.request_size,
            response_size: d.response_size,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbConfig {
    #[serde(default)]
    pub lb: LbSection,
    #[serde(default)]
    pub client: ClientSection,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub servers: Vec<ServerSpec>,
}

impl LbConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("config parse error: {e}")))
    }

    pub fn into_spec(self, estimator: pirate_core::estimator::EstimatorConfig) -> LbExperimentSpec {
        LbExperimentSpec {
            servers: self.servers,
            offered_loads: self.lb.offered_loads,
            controller: self.controller,
            controller_interval_ns: self.lb.controller_interval.0,
            duration_ns: self.lb.duration.0,
            trials: self.lb.trials,
            seed: self.lb.seed,
            client: ClientSpec {
                requests_per_conn: self.client.requests_per_conn,
                think_time: self.client.think_time,
                request_size: self.client.request_size,
                response_size: self.client.response_size,
            },
            net: self.network,
            estimator,
        }
    }
}
