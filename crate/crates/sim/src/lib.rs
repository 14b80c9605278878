//! Validation side of the estimator: a deterministic closed-loop traffic
//! simulator producing vantage-point traces plus ground-truth latency
//! records, error evaluation against that ground truth, and a latency-aware
//! load-balancer weight controller with its star-topology harness.

pub mod ablate;
pub mod config;
pub mod dist;
pub mod engine;
pub mod evaluate;
pub mod lbctl;
pub mod lbsim;
pub mod simcore;
