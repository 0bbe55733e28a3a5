//! Identifier-space arithmetic on the `2^m` ring.
//!
//! Every routing and maintenance decision reduces to a handful of clockwise
//! interval tests. Identifiers are stored as `u64` and the ring width `m`
//! (1..=64) lives in [`IdSpace`]; interval tests do not depend on `m` as
//! long as both operands are valid identifiers of the same space.

use std::fmt;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::error::{Error, Result};

/// Default ring bit-width.
pub const DEFAULT_BITS: u32 = 64;

/// A position on the identifier ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl NodeId {
    pub fn value(self) -> u64 {
        self.0
    }

    /// Clockwise distance from `self` to `other`.
    #[inline]
    pub fn distance_to(self, other: NodeId) -> u64 {
        other.0.wrapping_sub(self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v)
    }
}

/// `x ∈ (a, b]` walking clockwise. `a == b` denotes the whole ring.
#[inline]
pub fn in_half_open(x: NodeId, a: NodeId, b: NodeId) -> bool {
    if a == b {
        return true;
    }
    let dx = a.distance_to(x);
    dx != 0 && dx <= a.distance_to(b)
}

/// `x ∈ (a, b)` walking clockwise. `a == b` denotes the ring minus `a`.
#[inline]
pub fn in_open(x: NodeId, a: NodeId, b: NodeId) -> bool {
    let dx = a.distance_to(x);
    if a == b {
        return dx != 0;
    }
    dx != 0 && dx < a.distance_to(b)
}

/// The `2^m` identifier space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdSpace {
    bits: u32,
}

impl Default for IdSpace {
    fn default() -> Self {
        IdSpace { bits: DEFAULT_BITS }
    }
}

impl IdSpace {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > 64 {
            return Err(Error::InvalidArgument(format!(
                "ring bit-width must be in 1..=64, got {bits}"
            )));
        }
        Ok(IdSpace { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 & !self.mask() == 0
    }

    /// Truncates an arbitrary 64-bit value into the space, keeping the high bits.
    pub fn truncate(&self, raw: u64) -> NodeId {
        if self.bits == 64 {
            NodeId(raw)
        } else {
            NodeId(raw >> (64 - self.bits))
        }
    }

    pub fn add(&self, id: NodeId, delta: u64) -> NodeId {
        NodeId(id.0.wrapping_add(delta) & self.mask())
    }

    /// Maps a key to the ring with XXH3-64 (seed 0), keeping the top `m` bits.
    pub fn id_from_key(&self, key: &[u8]) -> Result<NodeId> {
        if key.is_empty() {
            return Err(Error::InvalidArgument("key must be non-empty".into()));
        }
        Ok(self.truncate(xxh3_64(key)))
    }

    /// `(n + 2^(i-1)) mod 2^m` for finger index `i` in `1..=m`.
    pub fn finger_target(&self, n: NodeId, i: u32) -> Result<NodeId> {
        if i == 0 || i > self.bits {
            return Err(Error::InvalidArgument(format!(
                "finger index {i} outside 1..={}",
                self.bits
            )));
        }
        Ok(self.add(n, 1u64 << (i - 1)))
    }
}
