use std::collections::HashSet;

use super::wire::{Reader, SketchBytes, SketchKind, Writer};
use super::DistinctSketch;
use crate::error::{Error, Result};

/// Exact set of ids behind the ℓ0 interface. Estimates are exact cardinalities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExactL0 {
    elements: HashSet<u64>,
}

impl ExactL0 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.elements.contains(&id)
    }

    pub fn elements(&self) -> &HashSet<u64> {
        &self.elements
    }
}

impl FromIterator<u64> for ExactL0 {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        ExactL0 {
            elements: iter.into_iter().collect(),
        }
    }
}

impl DistinctSketch for ExactL0 {
    fn empty_like(&self) -> Self {
        ExactL0::new()
    }

    fn insert(&mut self, id: u64) {
        self.elements.insert(id);
    }

    fn merge_from(&mut self, other: &Self) -> Result<()> {
        self.elements.extend(other.elements.iter().copied());
        Ok(())
    }

    fn estimate(&self) -> f64 {
        self.elements.len() as f64
    }

    fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    fn encode(&self) -> SketchBytes {
        let mut ids: Vec<u64> = self.elements.iter().copied().collect();
        ids.sort_unstable();
        let mut w = Writer::new(SketchKind::ExactSet, 8 + 8 * ids.len());
        w.u64(ids.len() as u64);
        for id in ids {
            w.u64(id);
        }
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, SketchKind::ExactSet)?;
        let count = r.u64()?;
        let body = r.take(
            usize::try_from(count)
                .ok()
                .and_then(|c| c.checked_mul(8))
                .ok_or_else(|| Error::Decode(format!("absurd element count {count}")))?,
        )?;
        r.finish()?;
        let mut prev = None;
        let mut elements = HashSet::with_capacity(count as usize);
        for chunk in body.chunks_exact(8) {
            let id = u64::from_le_bytes(chunk.try_into().unwrap());
            if prev.is_some_and(|p| p >= id) {
                return Err(Error::Decode("ids not strictly ascending".into()));
            }
            prev = Some(id);
            elements.insert(id);
        }
        Ok(ExactL0 { elements })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts() {
        let mut s = ExactL0::new();
        for x in 1..=100_000u64 {
            s.insert(x);
            s.insert(x);
        }
        assert_eq!(s.estimate(), 100_000.0);
    }

    #[test]
    fn union() {
        let a: ExactL0 = [1, 2].into_iter().collect();
        let b: ExactL0 = [2, 3].into_iter().collect();
        assert_eq!(a.merged(&b).unwrap().estimate(), 3.0);
    }

    #[test]
    fn roundtrip_and_errors() {
        let a: ExactL0 = [5, 1, 9].into_iter().collect();
        let bytes = a.encode();
        assert_eq!(bytes.len(), 2 + 8 + 24);
        assert_eq!(ExactL0::decode(bytes.as_slice()).unwrap(), a);
        assert!(ExactL0::decode(&[]).is_err());
        assert!(ExactL0::decode(&bytes.as_slice()[..20]).is_err());
        let mut unsorted = bytes.into_vec();
        unsorted.swap(10, 18);
        assert!(ExactL0::decode(&unsorted).is_err());
    }
}
