use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Mask;
use crate::numeric::ln_binomial;

/// Distribution over coalitions, drawn independently of any data row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSampler {
    /// Size uniform on `0..=d`, then a uniform subset of that size.
    UniformCardinality,
    /// Each player included independently with probability `p`.
    Bernoulli { p: f64 },
    /// Uniform over all `2^d` subsets.
    UniformSubsets,
}

impl MaskSampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            MaskSampler::Bernoulli { p } if !(*p > 0.0 && *p < 1.0) => {
                Err(Error::invalid(format!("inclusion probability {p} not in (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Mask {
        match self {
            MaskSampler::UniformCardinality => sample_mask_uniform_cardinality(d, rng),
            MaskSampler::Bernoulli { p } => {
                let mut m = Mask::empty(d);
                for j in 0..d {
                    if rng.gen::<f64>() < *p {
                        m = m.with(j);
                    }
                }
                m
            }
            MaskSampler::UniformSubsets => {
                let bits = if d == 64 { rng.gen::<u64>() } else { rng.gen::<u64>() & ((1u64 << d) - 1) };
                Mask::from_bits(bits, d).expect("masked to d bits")
            }
        }
    }

    /// Probability of drawing exactly `m`.
    pub fn probability(&self, m: Mask) -> f64 {
        let d = m.dim();
        let k = m.len();
        match self {
            MaskSampler::UniformCardinality => (-ln_binomial(d, k)).exp() / (d + 1) as f64,
            MaskSampler::Bernoulli { p } => p.powi(k as i32) * (1.0 - p).powi((d - k) as i32),
            MaskSampler::UniformSubsets => 0.5f64.powi(d as i32),
        }
    }
}

/// Draws `k` uniformly from `{0, …, d}` and then `k` distinct players
/// uniformly without replacement.
pub fn sample_mask_uniform_cardinality<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mask {
    let k = rng.gen_range(0..=d);
    let mut m = Mask::empty(d);
    for j in index::sample(rng, d, k).into_iter() {
        m = m.with(j);
    }
    m
}
