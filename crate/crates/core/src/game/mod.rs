//! Coalitions, cooperative games and the exact tabulated representation.

mod mask;

pub use mask::{Mask, MAX_PLAYERS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the player count for any path that enumerates all `2^d` coalitions.
pub const EXHAUSTIVE_CAP: usize = 24;

/// A set function `u: P(D) -> R`.
///
/// Implementations must be deterministic and safe to evaluate from several
/// threads at once. Evaluation is fallible because games built from data
/// can hit inputs the removal strategy cannot handle.
pub trait CooperativeGame: Send + Sync {
    fn players(&self) -> usize;

    fn value(&self, s: Mask) -> Result<f64>;
}

impl<G: CooperativeGame + ?Sized> CooperativeGame for &G {
    fn players(&self) -> usize {
        (**self).players()
    }

    fn value(&self, s: Mask) -> Result<f64> {
        (**self).value(s)
    }
}

impl<G: CooperativeGame + ?Sized> CooperativeGame for Box<G> {
    fn players(&self) -> usize {
        (**self).players()
    }

    fn value(&self, s: Mask) -> Result<f64> {
        (**self).value(s)
    }
}

impl<G: CooperativeGame + ?Sized> CooperativeGame for std::sync::Arc<G> {
    fn players(&self) -> usize {
        (**self).players()
    }

    fn value(&self, s: Mask) -> Result<f64> {
        (**self).value(s)
    }
}

/// A game defined by a closure.
pub struct FnGame<F> {
    d: usize,
    f: F,
}

impl<F> FnGame<F>
where
    F: Fn(Mask) -> f64 + Send + Sync,
{
    pub fn new(d: usize, f: F) -> Self {
        Self { d, f }
    }
}

impl<F> CooperativeGame for FnGame<F>
where
    F: Fn(Mask) -> f64 + Send + Sync,
{
    fn players(&self) -> usize {
        self.d
    }

    fn value(&self, s: Mask) -> Result<f64> {
        Ok((self.f)(s))
    }
}

/// Every coalition value of a small game, indexed by mask integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedGame {
    d: usize,
    values: Vec<f64>,
}

impl TabulatedGame {
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        check_exhaustive(d)?;
        if values.len() != 1usize << d {
            return Err(Error::DimensionMismatch {
                expected: 1 << d,
                actual: values.len(),
            });
        }
        Ok(Self { d, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: Mask) -> f64 {
        self.values[s.index()]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TabulatedGame = serde_json::from_str(text)?;
        Self::new(raw.d, raw.values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tabulated game serializes")
    }
}

impl CooperativeGame for TabulatedGame {
    fn players(&self) -> usize {
        self.d
    }

    fn value(&self, s: Mask) -> Result<f64> {
        Ok(self.values[s.index()])
    }
}

pub(crate) fn check_exhaustive(d: usize) -> Result<()> {
    if d > EXHAUSTIVE_CAP {
        Err(Error::DimensionTooLarge {
            d,
            cap: EXHAUSTIVE_CAP,
        })
    } else {
        Ok(())
    }
}

/// All `2^d` coalitions in increasing mask-integer order.
pub fn enumerate_subsets(d: usize) -> Result<impl Iterator<Item = Mask>> {
    check_exhaustive(d)?;
    Ok((0u64..(1u64 << d)).map(move |bits| Mask::from_bits(bits, d).expect("in range")))
}

/// Evaluates the game on every coalition, exactly once each, in parallel.
pub fn tabulate<G: CooperativeGame + ?Sized>(game: &G) -> Result<TabulatedGame> {
    let d = game.players();
    check_exhaustive(d)?;
    let values = (0u64..(1u64 << d))
        .into_par_iter()
        .map(|bits| game.value(Mask::from_bits(bits, d).expect("in range")))
        .collect::<Result<Vec<_>>>()?;
    TabulatedGame::new(d, values)
}

/// `u(S ∪ {i}) − u(S)` for a player outside `S`.
pub fn marginal_contribution<G: CooperativeGame + ?Sized>(game: &G, i: usize, s: Mask) -> Result<f64> {
    let d = game.players();
    if i >= d {
        return Err(Error::IndexOutOfRange { index: i, d });
    }
    if s.contains(i) {
        return Err(Error::PlayerInSet(i));
    }
    Ok(game.value(s.with(i))? - game.value(s)?)
}

/// Excess `e(S, z) = u(S) − Σ_{i∈S} z_i` of a coalition under an allocation.
pub fn excess<G: CooperativeGame + ?Sized>(game: &G, s: Mask, z: &[f64]) -> Result<f64> {
    let d = game.players();
    if z.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: z.len(),
        });
    }
    let allocated: f64 = s.iter().map(|i| z[i]).sum();
    Ok(game.value(s)? - allocated)
}
