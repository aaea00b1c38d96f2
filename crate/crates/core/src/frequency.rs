//! Exact frequency dictionaries and frequency-of-frequency statistics.
//!
//! Merging dictionaries is the exact (and expensive) baseline every sketch
//! estimate is checked against.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Element id → positive occurrence count for one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreqDict {
    counts: HashMap<u64, u64>,
}

impl FreqDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stream<I: IntoIterator<Item = u64>>(occurrences: I) -> Self {
        let mut dict = FreqDict::new();
        for id in occurrences {
            *dict.counts.entry(id).or_insert(0) += 1;
        }
        dict
    }

    /// Pointwise sum of counts.
    pub fn merge<'a, I: IntoIterator<Item = &'a FreqDict>>(dicts: I) -> Self {
        let mut out = FreqDict::new();
        for d in dicts {
            out.absorb(d);
        }
        out
    }

    pub fn absorb(&mut self, other: &FreqDict) {
        for (&id, &c) in &other.counts {
            *self.counts.entry(id).or_insert(0) += c;
        }
    }

    /// Adds `count` occurrences of `id`. Zero is ignored.
    pub fn add(&mut self, id: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(id).or_insert(0) += count;
        }
    }

    pub fn get(&self, id: u64) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    /// Number of distinct ids (local NDV).
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of counts (local sample size).
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn to_fof(&self) -> Fof {
        Fof::from_dict(self)
    }

    /// Bytes needed to ship this dictionary: an 8-byte id plus a LEB128 count per entry.
    pub fn comm_bytes(&self) -> u64 {
        self.counts
            .values()
            .map(|&c| 8 + varint_len(c) as u64)
            .sum()
    }
}

impl FromIterator<(u64, u64)> for FreqDict {
    fn from_iter<I: IntoIterator<Item = (u64, u64)>>(iter: I) -> Self {
        let mut d = FreqDict::new();
        for (id, c) in iter {
            d.add(id, c);
        }
        d
    }
}

fn varint_len(mut v: u64) -> usize {
    let mut n = 1;
    while v >= 0x80 {
        v >>= 7;
        n += 1;
    }
    n
}

/// Sparse frequency-of-frequency vector: frequency `i` → number of classes seen exactly `i` times.
///
/// Used both for samples (`f_i`) and populations (`F_i`). Zero entries are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fof {
    counts: BTreeMap<u64, u64>,
}

/// Moments of a [`Fof`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FofStats {
    /// Number of classes, `Σ f_i`.
    pub d: u64,
    /// Number of occurrences, `Σ i f_i`.
    pub n: u64,
    pub f1: u64,
    pub f2: u64,
    /// `||X||_2^2 = Σ i^2 f_i`.
    pub l2sq: u128,
}

impl Fof {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dict(dict: &FreqDict) -> Self {
        let mut fof = Fof::new();
        for (_, c) in dict.iter() {
            fof.add(c, 1);
        }
        fof
    }

    /// Builds from `(i, f_i)` pairs, rejecting `i = 0`, zero counts and duplicates.
    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Result<Self> {
        let mut fof = Fof::new();
        for (i, c) in pairs {
            if i == 0 {
                return Err(Error::Config("frequency 0 is not stored".into()));
            }
            if c == 0 {
                return Err(Error::Config(format!("zero count for frequency {i}")));
            }
            if fof.counts.insert(i, c).is_some() {
                return Err(Error::Config(format!("duplicate frequency {i}")));
            }
        }
        Ok(fof)
    }

    /// Adds `count` classes of frequency `i`.
    pub fn add(&mut self, i: u64, count: u64) {
        if i > 0 && count > 0 {
            *self.counts.entry(i).or_insert(0) += count;
        }
    }

    pub fn get(&self, i: u64) -> u64 {
        self.counts.get(&i).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct frequencies present.
    pub fn support_len(&self) -> usize {
        self.counts.len()
    }

    /// `(i, f_i)` in ascending `i`.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&i, &c)| (i, c))
    }

    pub fn max_frequency(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn stats(&self) -> FofStats {
        let mut s = FofStats::default();
        for (i, c) in self.iter() {
            s.d += c;
            s.n += i * c;
            s.l2sq += (i as u128) * (i as u128) * c as u128;
        }
        s.f1 = self.get(1);
        s.f2 = self.get(2);
        s
    }

    pub fn distinct(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total(&self) -> u64 {
        self.iter().map(|(i, c)| i * c).sum()
    }
}

impl FromIterator<(u64, u64)> for Fof {
    /// Accumulates counts, skipping zeros.
    fn from_iter<I: IntoIterator<Item = (u64, u64)>>(iter: I) -> Self {
        let mut fof = Fof::new();
        for (i, c) in iter {
            fof.add(i, c);
        }
        fof
    }
}
