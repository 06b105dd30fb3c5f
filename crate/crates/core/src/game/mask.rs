use std::fmt;

use crate::error::{Error, Result};

/// Largest number of players a [`Mask`] can represent.
pub const MAX_PLAYERS: usize = 64;

/// A coalition `S ⊆ D` over `d` players, stored as a bit pattern.
///
/// Bit `j` is set exactly when player `j` (0-based) belongs to the coalition,
/// so the mask read as an unsigned integer is the canonical table index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    bits: u64,
    d: usize,
}

fn full_bits(d: usize) -> u64 {
    if d == 64 {
        u64::MAX
    } else {
        (1u64 << d) - 1
    }
}

impl Mask {
    pub fn empty(d: usize) -> Self {
        assert!(d <= MAX_PLAYERS, "at most {MAX_PLAYERS} players are supported");
        Self { bits: 0, d }
    }

    pub fn full(d: usize) -> Self {
        assert!(d <= MAX_PLAYERS, "at most {MAX_PLAYERS} players are supported");
        Self {
            bits: full_bits(d),
            d,
        }
    }

    pub fn from_bits(bits: u64, d: usize) -> Result<Self> {
        if d > MAX_PLAYERS {
            return Err(Error::DimensionTooLarge {
                d,
                cap: MAX_PLAYERS,
            });
        }
        if bits & !full_bits(d) != 0 {
            let index = 63 - (bits & !full_bits(d)).leading_zeros() as usize;
            return Err(Error::IndexOutOfRange { index, d });
        }
        Ok(Self { bits, d })
    }

    /// Builds a mask from 0-based member indices.
    pub fn from_indices(indices: &[usize], d: usize) -> Result<Self> {
        let mut m = Self::empty(d);
        for &i in indices {
            if i >= d {
                return Err(Error::IndexOutOfRange { index: i, d });
            }
            m.bits |= 1 << i;
        }
        Ok(m)
    }

    /// Table index of the coalition; panics in debug builds if `d > 64`.
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.d && self.bits >> i & 1 == 1
    }

    pub fn with(mut self, i: usize) -> Self {
        debug_assert!(i < self.d);
        self.bits |= 1 << i;
        self
    }

    pub fn without(mut self, i: usize) -> Self {
        self.bits &= !(1u64 << i);
        self
    }

    pub fn toggled(mut self, i: usize) -> Self {
        debug_assert!(i < self.d);
        self.bits ^= 1 << i;
        self
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: full_bits(self.d) ^ self.bits,
            d: self.d,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        self.bits == full_bits(self.d)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn union(&self, other: &Mask) -> Self {
        Self {
            bits: self.bits | other.bits,
            d: self.d,
        }
    }

    pub fn difference(&self, other: &Mask) -> Self {
        Self {
            bits: self.bits & !other.bits,
            d: self.d,
        }
    }

    /// Member indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        let bits = self.bits;
        (0..self.d).filter(move |&j| bits >> j & 1 == 1)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// 1-based member indices, the form used in user-facing files.
    pub fn one_based(&self) -> Vec<usize> {
        self.iter().map(|j| j + 1).collect()
    }

    /// Indicator vector, 1.0 for members.
    pub fn to_indicator(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| if self.contains(j) { 1.0 } else { 0.0 })
            .collect()
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask{:?}", self.one_based())
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.one_based().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}
