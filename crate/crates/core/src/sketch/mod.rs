//! Mergeable sketches.
//!
//! [`DistinctSketch`] is the ℓ0 interface: a set summary that supports
//! insertion, union and a cardinality estimate. [`HyperLogLog`] is the
//! production implementation and [`ExactL0`] is an exact set behind the same
//! interface, used as an oracle. [`CountSketch`] is the linear ℓ2 sketch.
//!
//! Every sketch serializes to [`SketchBytes`]; the byte length of an encoded
//! sketch is what the coordinator charges as communication cost.

mod count_sketch;
mod exact;
mod hll;
pub(crate) mod wire;

pub use count_sketch::CountSketch;
pub use exact::ExactL0;
pub use hll::{HyperLogLog, MAX_BITS, MIN_BITS};
pub use wire::{SketchBytes, SketchKind, WIRE_VERSION};

use crate::error::Result;

/// A mergeable distinct-count (ℓ0) sketch.
pub trait DistinctSketch: Clone + Send + Sync + Sized {
    /// An empty sketch with the same parameters, i.e. the merge identity.
    fn empty_like(&self) -> Self;

    fn insert(&mut self, id: u64);

    /// In-place union. Fails when parameters differ.
    fn merge_from(&mut self, other: &Self) -> Result<()>;

    /// Estimated number of distinct inserted ids.
    fn estimate(&self) -> f64;

    fn is_empty(&self) -> bool;

    fn encode(&self) -> SketchBytes;

    fn decode(bytes: &[u8]) -> Result<Self>;

    /// Non-mutating union.
    fn merged(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }
}
