//! Seedable random streams and the transition-count sampler.
//!
//! Streams are ChaCha8 keyed by `seed` with `stream_id` selecting an
//! independent 64-bit stream, so any `(seed, stream_id)` pair yields the same
//! sequence on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic random stream owned by a single simulation lane.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

pub fn make_stream(seed: u64, stream_id: u64) -> RandomStream {
    RandomStream::new(seed, stream_id)
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// How transition counts are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    ExactBinomial,
    /// `Normal(np, np(1-p))`, rounded to the nearest integer and clamped to `[0, n]`.
    NormalApprox,
    /// Exact when `n <= 128` or `np(1-p) < 9`, normal otherwise.
    #[default]
    Auto,
}

impl SamplerMode {
    pub const AUTO_EXACT_MAX_N: u64 = 128;
    pub const AUTO_MIN_VARIANCE: f64 = 9.0;

    /// The concrete mode used for a draw of `n` trials at probability `p`.
    pub fn resolve(self, n: u64, p: f64) -> SamplerMode {
        match self {
            SamplerMode::Auto => {
                let variance = n as f64 * p * (1.0 - p);
                if n <= Self::AUTO_EXACT_MAX_N || variance < Self::AUTO_MIN_VARIANCE {
                    SamplerMode::ExactBinomial
                } else {
                    SamplerMode::NormalApprox
                }
            }
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerMode::ExactBinomial => "exact-binomial",
            SamplerMode::NormalApprox => "normal-approx",
            SamplerMode::Auto => "auto",
        }
    }
}

/// Number of switches, out of `n`, that change state when each does so
/// independently with probability `p`.
///
/// Degenerate draws (`n == 0`, `p == 0`, `p == 1`) consume no randomness.
pub fn sample_transitions(
    n: u64,
    p: f64,
    rng: &mut RandomStream,
    mode: SamplerMode,
) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    if n == 0 || p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(n);
    }
    match mode.resolve(n, p) {
        SamplerMode::NormalApprox => {
            let mean = n as f64 * p;
            let sd = (mean * (1.0 - p)).sqrt();
            let z: f64 = StandardNormal.sample(rng);
            let draw = (mean + sd * z).round();
            Ok(draw.clamp(0.0, n as f64) as u64)
        }
        _ => {
            let binomial = Binomial::new(n, p).map_err(|e| Error::Domain(e.to_string()))?;
            Ok(binomial.sample(rng).min(n))
        }
    }
}
