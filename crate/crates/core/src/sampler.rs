//! Monte Carlo estimation of the region count: sample inputs, record their
//! activation patterns and count the distinct ones.
//!
//! Samples are split into fixed-size batches; batch `i` draws from its own
//! ChaCha stream keyed by `(seed, i)`, so reports are identical for any
//! number of worker threads.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrangement::ser_big;
use crate::error::{Error, Result};
use crate::gcn::{ActivationPattern, Evaluator, GcnSpec, Parameters};
use crate::graph::NormalizedAdjacency;

/// Samples per reported configuration in the standard protocol.
pub const STANDARD_SAMPLES: u64 = 2_000_000;
pub const STANDARD_NORMAL_VARIANCES: [f64; 5] = [1.0, 3.0, 5.0, 7.0, 9.0];
pub const STANDARD_UNIFORM_HALF_WIDTHS: [f64; 3] = [1.0, 5.0, 10.0];
pub const DEFAULT_BATCH: u64 = 8192;

// Keeps sampler streams apart from parameter-initialization streams that
// share a user seed.
const SAMPLER_DOMAIN: u64 = 0x5eed_5a3b_1e00_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    /// Zero-mean normal with standard deviation `sigma`.
    Normal { sigma: f64 },
    /// Uniform on `(−u, u)`.
    Uniform { u: f64 },
}

impl InputDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            InputDistribution::Normal { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            InputDistribution::Uniform { u } => rng.random_range(-u..u),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InputDistribution::Normal { sigma } => sigma > 0.0 && sigma.is_finite(),
            InputDistribution::Uniform { u } => u > 0.0 && u.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Sampling(format!("distribution parameter must be positive: {self}")))
        }
    }
}

impl fmt::Display for InputDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputDistribution::Normal { sigma } => write!(f, "normal:{sigma}"),
            InputDistribution::Uniform { u } => write!(f, "uniform:{u}"),
        }
    }
}

/// Parses `normal:σ` or `uniform:u`.
impl FromStr for InputDistribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad distribution `{s}`; expected normal:<sigma> or uniform:<u>"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let d = match kind.trim() {
            "normal" => InputDistribution::Normal { sigma: value },
            "uniform" => InputDistribution::Uniform { u: value },
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub distribution: InputDistribution,
    pub samples: u64,
    pub seed: u64,
    pub batch: u64,
}

impl SamplingConfig {
    pub fn new(distribution: InputDistribution, samples: u64, seed: u64) -> Self {
        Self { distribution, samples, seed, batch: DEFAULT_BATCH }
    }

    fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.samples == 0 || self.batch == 0 {
            return Err(Error::Sampling("samples and batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn batches(&self) -> u64 {
        self.samples.div_ceil(self.batch)
    }

    fn batch_len(&self, b: u64) -> u64 {
        self.batch.min(self.samples - b * self.batch)
    }

    fn batch_rng(&self, b: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ SAMPLER_DOMAIN);
        rng.set_stream(b);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigCount {
    pub config: SamplingConfig,
    #[serde(serialize_with = "ser_big")]
    pub count: BigUint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    #[serde(serialize_with = "ser_big")]
    pub distinct_patterns: BigUint,
    pub samples_used: u64,
    pub per_config: Vec<ConfigCount>,
    #[serde(serialize_with = "ser_big")]
    pub max_over_configs: BigUint,
    pub seed: u64,
}

/// Patterns of one batch, in sample order.
fn batch_patterns(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    cfg: &SamplingConfig,
    b: u64,
) -> Result<Vec<ActivationPattern>> {
    let mut ev = Evaluator::new(spec, adj, params)?;
    let mut rng = cfg.batch_rng(b);
    let mut x = vec![0.0; spec.input_dim(adj.node_count())];
    let mut out = Vec::with_capacity(cfg.batch_len(b) as usize);
    let mut pat = ActivationPattern::new(0);
    for _ in 0..cfg.batch_len(b) {
        for v in x.iter_mut() {
            *v = cfg.distribution.sample(&mut rng);
        }
        ev.pattern_into(&x, 0.0, &mut pat);
        out.push(pat.clone());
    }
    Ok(out)
}

fn distinct_patterns(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    cfg: &SamplingConfig,
) -> Result<HashSet<ActivationPattern>> {
    cfg.validate()?;
    params.check(spec)?;
    (0..cfg.batches())
        .into_par_iter()
        .map(|b| batch_patterns(spec, adj, params, cfg, b).map(|v| v.into_iter().collect::<HashSet<_>>()))
        .try_reduce(HashSet::new, |mut a, b| {
            if a.len() < b.len() {
                return Ok(b.into_iter().chain(a).collect());
            }
            a.extend(b);
            Ok(a)
        })
}

/// Distinct activation patterns over `cfg.samples` i.i.d. inputs.
pub fn estimate_regions(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    cfg: &SamplingConfig,
) -> Result<EstimateReport> {
    let n = BigUint::from(distinct_patterns(spec, adj, params, cfg)?.len());
    Ok(EstimateReport {
        distinct_patterns: n.clone(),
        samples_used: cfg.samples,
        per_config: vec![ConfigCount { config: *cfg, count: n.clone() }],
        max_over_configs: n,
        seed: cfg.seed,
    })
}

/// The eight input distributions of the standard protocol.
pub fn standard_distributions() -> Vec<InputDistribution> {
    STANDARD_NORMAL_VARIANCES
        .iter()
        .map(|v| InputDistribution::Normal { sigma: v.sqrt() })
        .chain(STANDARD_UNIFORM_HALF_WIDTHS.iter().map(|&u| InputDistribution::Uniform { u }))
        .collect()
}

/// Runs every standard distribution with [`STANDARD_SAMPLES`] samples and keeps the
/// largest count.
pub fn standard_sweep(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    seed: u64,
) -> Result<EstimateReport> {
    standard_sweep_with(spec, adj, params, seed, STANDARD_SAMPLES)
}

pub fn standard_sweep_with(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    seed: u64,
    samples: u64,
) -> Result<EstimateReport> {
    let mut per_config = Vec::new();
    let mut all = HashSet::new();
    for dist in standard_distributions() {
        let cfg = SamplingConfig::new(dist, samples, seed);
        let set = distinct_patterns(spec, adj, params, &cfg)?;
        per_config.push(ConfigCount { config: cfg, count: BigUint::from(set.len()) });
        all.extend(set);
    }
    let max_over_configs = per_config.iter().map(|c| c.count.clone()).max().expect("eight configs");
    Ok(EstimateReport {
        distinct_patterns: BigUint::from(all.len()),
        samples_used: samples * per_config.len() as u64,
        per_config,
        max_over_configs,
        seed,
    })
}

/// Distinct-pattern counts after each checkpoint prefix of one sample stream.
pub fn saturation_curve(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    cfg: &SamplingConfig,
    checkpoints: &[u64],
) -> Result<Vec<(u64, BigUint)>> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Sampling("checkpoints must be ascending".into()));
    }
    let Some(&last) = checkpoints.last() else { return Ok(Vec::new()) };
    let stream = SamplingConfig { samples: last.max(1), ..*cfg };
    stream.validate()?;
    params.check(spec)?;
    let batches: Vec<Vec<ActivationPattern>> = (0..stream.batches())
        .into_par_iter()
        .map(|b| batch_patterns(spec, adj, params, &stream, b))
        .collect::<Result<_>>()?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut cps = checkpoints.iter().peekable();
    while cps.peek() == Some(&&0) {
        out.push((0, BigUint::from(0u8)));
        cps.next();
    }
    let mut taken = 0u64;
    for p in batches.into_iter().flatten() {
        seen.insert(p);
        taken += 1;
        while cps.peek() == Some(&&taken) {
            out.push((taken, BigUint::from(seen.len())));
            cps.next();
        }
    }
    Ok(out)
}
