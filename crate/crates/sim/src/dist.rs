//! Parseable scalar distributions for workload, network, and server
//! parameters.
//!
//! Config files give distributions as compact strings:
//!
//! ```text
//! constant:1ms
//! uniform:0.85ms,1.15ms
//! exp:500us
//! lognormal:1ms,0.3        # median, sigma
//! choice:0@0.8,4@0.2       # value@weight pairs
//! ```
//!
//! Duration-valued parameters accept `ns`/`us`/`ms`/`s` suffixes; bare
//! numbers are taken as-is (nanoseconds for durations, plain counts
//! elsewhere). Constant distributions never consume randomness, so
//! configurations that fix a parameter stay draw-for-draw aligned across
//! paired runs.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistSpec {
    Constant(f64),
    Uniform(f64, f64),
    /// Exponential with the given mean.
    Exp(f64),
    /// Lognormal parameterized by median and log-space sigma.
    Lognormal { median: f64, sigma: f64 },
    /// Weighted discrete choice over (value, weight) pairs.
    Choice(Vec<(f64, f64)>),
}

#[derive(Debug, thiserror::Error)]
#[error("invalid distribution `{input}`: {reason}")]
pub struct DistParseError {
    pub input: String,
    pub reason: String,
}

/// Parses a scalar that may carry a time-unit suffix, yielding nanoseconds
/// for suffixed values and the bare number otherwise.
pub fn parse_scalar(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, mult) = if let Some(p) = s.strip_suffix("ns") {
        (p, 1.0)
    } else if let Some(p) = s.strip_suffix("us") {
        (p, 1e3)
    } else if let Some(p) = s.strip_suffix("ms") {
        (p, 1e6)
    } else if let Some(p) = s.strip_suffix('s') {
        (p, 1e9)
    } else {
        (s, 1.0)
    };
    num.trim()
        .parse::<f64>()
        .map(|v| v * mult)
        .map_err(|e| format!("`{s}`: {e}"))
}

/// Parses a duration string with units into whole nanoseconds.
pub fn parse_duration_ns(s: &str) -> Result<u64, String> {
    let v = parse_scalar(s)?;
    if v < 0.0 {
        return Err(format!("duration `{s}` is negative"));
    }
    Ok(v.round() as u64)
}

impl DistSpec {
    pub fn constant_ns(v: u64) -> Self {
        DistSpec::Constant(v as f64)
    }

    pub fn parse(input: &str) -> Result<Self, DistParseError> {
        let err = |reason: String| DistParseError { input: input.to_string(), reason };
        let (kind, args) = input.split_once(':').unwrap_or((input, ""));
        let parts: Vec<&str> = if args.is_empty() { Vec::new() } else { args.split(',').collect() };
        let spec = match kind.trim() {
            "constant" => {
                if parts.len() != 1 {
                    return Err(err("constant takes one value".into()));
                }
                DistSpec::Constant(parse_scalar(parts[0]).map_err(err)?)
            }
            "uniform" => {
                if parts.len() != 2 {
                    return Err(err("uniform takes low,high".into()));
                }
                DistSpec::Uniform(parse_scalar(parts[0]).map_err(err)?, parse_scalar(parts[1]).map_err(err)?)
            }
            "exp" => {
                if parts.len() != 1 {
                    return Err(err("exp takes the mean".into()));
                }
                DistSpec::Exp(parse_scalar(parts[0]).map_err(err)?)
            }
            "lognormal" => {
                if parts.len() != 2 {
                    return Err(err("lognormal takes median,sigma".into()));
                }
                DistSpec::Lognormal {
                    median: parse_scalar(parts[0]).map_err(err)?,
                    sigma: parse_scalar(parts[1]).map_err(err)?,
                }
            }
            "choice" => {
                let mut pairs = Vec::new();
                for p in &parts {
                    let (v, w) = p
                        .split_once('@')
                        .ok_or_else(|| err(format!("choice entry `{p}` must be value@weight")))?;
                    pairs.push((parse_scalar(v).map_err(err)?, parse_scalar(w).map_err(err)?));
                }
                if pairs.is_empty() {
                    return Err(err("choice needs at least one value@weight".into()));
                }
                DistSpec::Choice(pairs)
            }
            other => return Err(err(format!("unknown distribution kind `{other}`"))),
        };
        spec.validate().map_err(err)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            DistSpec::Constant(v) => {
                if *v < 0.0 {
                    return Err("constant must be non-negative".into());
                }
            }
            DistSpec::Uniform(lo, hi) => {
                if *lo < 0.0 || hi < lo {
                    return Err("uniform needs 0 <= low <= high".into());
                }
            }
            DistSpec::Exp(mean) => {
                if *mean < 0.0 {
                    return Err("exp mean must be non-negative".into());
                }
            }
            DistSpec::Lognormal { median, sigma } => {
                if *median <= 0.0 || *sigma < 0.0 {
                    return Err("lognormal needs median > 0 and sigma >= 0".into());
                }
            }
            DistSpec::Choice(pairs) => {
                let total: f64 = pairs.iter().map(|(_, w)| w).sum();
                if pairs.iter().any(|(v, w)| *v < 0.0 || *w < 0.0) || total <= 0.0 {
                    return Err("choice needs non-negative values and positive total weight".into());
                }
            }
        }
        Ok(())
    }

    /// Draws one sample. Constants return immediately without touching the
    /// generator.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            DistSpec::Constant(v) => *v,
            DistSpec::Uniform(lo, hi) => {
                if lo == hi {
                    *lo
                } else {
                    Uniform::new(*lo, *hi).unwrap().sample(rng)
                }
            }
            DistSpec::Exp(mean) => {
                if *mean == 0.0 {
                    0.0
                } else {
                    Exp::new(1.0 / mean).unwrap().sample(rng)
                }
            }
            DistSpec::Lognormal { median, sigma } => {
                LogNormal::new(median.ln(), *sigma).unwrap().sample(rng)
            }
            DistSpec::Choice(pairs) => {
                let total: f64 = pairs.iter().map(|(_, w)| w).sum();
                let mut draw = rng.random::<f64>() * total;
                for (v, w) in pairs {
                    if draw < *w {
                        return *v;
                    }
                    draw -= w;
                }
                pairs.last().unwrap().0
            }
        }
    }

    pub fn sample_ns(&self, rng: &mut impl Rng) -> u64 {
        self.sample(rng).max(0.0).round() as u64
    }

    pub fn sample_count(&self, rng: &mut impl Rng) -> u64 {
        self.sample_ns(rng)
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistSpec::Constant(v) => *v,
            DistSpec::Uniform(lo, hi) => (lo + hi) / 2.0,
            DistSpec::Exp(mean) => *mean,
            DistSpec::Lognormal { median, sigma } => median * (sigma * sigma / 2.0).exp(),
            DistSpec::Choice(pairs) => {
                let total: f64 = pairs.iter().map(|(_, w)| w).sum();
                pairs.iter().map(|(v, w)| v * w).sum::<f64>() / total
            }
        }
    }
}

impl TryFrom<String> for DistSpec {
    type Error = DistParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        DistSpec::parse(&s)
    }
}

impl From<DistSpec> for String {
    fn from(d: DistSpec) -> String {
        match d {
            DistSpec::Constant(v) => format!("constant:{v}"),
            DistSpec::Uniform(lo, hi) => format!("uniform:{lo},{hi}"),
            DistSpec::Exp(mean) => format!("exp:{mean}"),
            DistSpec::Lognormal { median, sigma } => format!("lognormal:{median},{sigma}"),
            DistSpec::Choice(pairs) => {
                let entries: Vec<String> = pairs.iter().map(|(v, w)| format!("{v}@{w}")).collect();
                format!("choice:{}", entries.join(","))
            }
        }
    }
}
