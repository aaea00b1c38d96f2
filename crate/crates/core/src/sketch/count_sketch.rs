use super::wire::{Reader, SketchBytes, SketchKind, Writer};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, hash64};

/// Count Sketch estimating `||X||_2^2` of the frequency vector fed to it.
///
/// Each row has its own bucket hash and sign hash. The sketch is linear, so
/// tables built with the same seeds add up to the table of the summed vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSketch {
    depth: usize,
    width: usize,
    /// Per row: (bucket seed, sign seed).
    seeds: Vec<(u64, u64)>,
    table: Vec<i64>,
}

impl CountSketch {
    /// Derives the per-row seeds from `seed`.
    pub fn new(depth: usize, width: usize, seed: u64) -> Result<Self> {
        let seeds = (0..depth as u64)
            .map(|r| (derive_seed(seed, 2 * r), derive_seed(seed, 2 * r + 1)))
            .collect();
        Self::with_seeds(depth, width, seeds)
    }

    pub fn with_seeds(depth: usize, width: usize, seeds: Vec<(u64, u64)>) -> Result<Self> {
        if depth == 0 || width == 0 {
            return Err(Error::Config(format!(
                "count sketch shape must be positive, got {depth}x{width}"
            )));
        }
        if depth > u32::MAX as usize || width > u32::MAX as usize {
            return Err(Error::Config("count sketch shape exceeds u32".into()));
        }
        if seeds.len() != depth {
            return Err(Error::Config(format!(
                "{} seed pairs for {depth} rows",
                seeds.len()
            )));
        }
        let cells = depth
            .checked_mul(width)
            .ok_or_else(|| Error::Config("count sketch too large".into()))?;
        Ok(CountSketch {
            depth,
            width,
            seeds,
            table: vec![0; cells],
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seeds(&self) -> &[(u64, u64)] {
        &self.seeds
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.table[r * self.width..(r + 1) * self.width]
    }

    pub fn empty_like(&self) -> Self {
        CountSketch {
            depth: self.depth,
            width: self.width,
            seeds: self.seeds.clone(),
            table: vec![0; self.table.len()],
        }
    }

    /// Encoded size: 10-byte header, 16 bytes of seeds per row, 4 bytes per counter.
    pub fn encoded_len(depth: usize, width: usize) -> usize {
        2 + 4 + 4 + 16 * depth + 4 * depth * width
    }

    #[inline]
    fn bucket(&self, key: u64, row: usize) -> usize {
        let h = hash64(key, self.seeds[row].0);
        ((h as u128 * self.width as u128) >> 64) as usize
    }

    #[inline]
    fn sign(&self, key: u64, row: usize) -> i64 {
        if hash64(key, self.seeds[row].1) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    /// Adds `sign_r(key) * delta` to one counter in every row.
    pub fn update(&mut self, key: u64, delta: i64) {
        for r in 0..self.depth {
            let idx = r * self.width + self.bucket(key, r);
            self.table[idx] += self.sign(key, r) * delta;
        }
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.depth != other.depth || self.width != other.width || self.seeds != other.seeds {
            return Err(Error::IncompatibleSketch(format!(
                "count sketch {}x{} vs {}x{} (or differing seeds)",
                self.depth, self.width, other.depth, other.width
            )));
        }
        for (a, b) in self.table.iter_mut().zip(&other.table) {
            *a += b;
        }
        Ok(())
    }

    pub fn merged(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    /// Median over rows of the row's sum of squared counters.
    pub fn estimate_l2sq(&self) -> f64 {
        let mut rows: Vec<f64> = (0..self.depth)
            .map(|r| {
                self.row(r)
                    .iter()
                    .map(|&c| (c as i128 * c as i128) as f64)
                    .sum()
            })
            .collect();
        rows.sort_by(f64::total_cmp);
        let mid = rows.len() / 2;
        if rows.len() % 2 == 1 {
            rows[mid]
        } else {
            0.5 * (rows[mid - 1] + rows[mid])
        }
    }

    /// Counters travel as 32-bit integers; a counter outside that range is an error.
    pub fn encode(&self) -> Result<SketchBytes> {
        let mut w = Writer::new(
            SketchKind::CountSketch,
            Self::encoded_len(self.depth, self.width),
        );
        w.u32(self.depth as u32);
        w.u32(self.width as u32);
        for &(b, s) in &self.seeds {
            w.u64(b);
            w.u64(s);
        }
        for &c in &self.table {
            let c = i32::try_from(c)
                .map_err(|_| Error::Encode(format!("counter {c} does not fit in 32 bits")))?;
            w.i32(c);
        }
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, SketchKind::CountSketch)?;
        let depth = r.u32()? as usize;
        let width = r.u32()? as usize;
        let expected = depth
            .checked_mul(width)
            .and_then(|c| c.checked_mul(4))
            .and_then(|c| c.checked_add(16 * depth + 10));
        if expected != Some(bytes.len()) {
            return Err(Error::Decode(format!(
                "count sketch {depth}x{width} needs {expected:?} bytes, got {}",
                bytes.len()
            )));
        }
        let mut seeds = Vec::with_capacity(depth);
        for _ in 0..depth {
            seeds.push((r.u64()?, r.u64()?));
        }
        let mut cs = CountSketch::with_seeds(depth, width, seeds)
            .map_err(|e| Error::Decode(e.to_string()))?;
        for c in cs.table.iter_mut() {
            *c = r.i32()? as i64;
        }
        r.finish()?;
        Ok(cs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_estimate_is_zero() {
        let cs = CountSketch::new(5, 100, 1).unwrap();
        assert_eq!(cs.estimate_l2sq(), 0.0);
    }

    #[test]
    fn single_key_is_exact() {
        let mut cs = CountSketch::new(5, 100, 1).unwrap();
        cs.update(42, 5);
        assert_eq!(cs.estimate_l2sq(), 25.0);
        for r in 0..5 {
            assert_eq!(cs.row(r).iter().filter(|&&c| c != 0).count(), 1);
        }
    }

    #[test]
    fn even_depth_takes_middle_mean() {
        let mut cs = CountSketch::new(2, 1, 1).unwrap();
        cs.update(1, 3);
        assert_eq!(cs.estimate_l2sq(), 9.0);
    }

    #[test]
    fn bad_shapes() {
        assert!(CountSketch::new(0, 10, 1).is_err());
        assert!(CountSketch::new(3, 0, 1).is_err());
        assert!(CountSketch::with_seeds(2, 3, vec![(1, 2)]).is_err());
        let a = CountSketch::new(3, 10, 1).unwrap();
        let b = CountSketch::new(3, 10, 2).unwrap();
        assert!(matches!(a.merged(&b), Err(Error::IncompatibleSketch(_))));
        let c = CountSketch::new(3, 11, 1).unwrap();
        assert!(a.merged(&c).is_err());
    }

    #[test]
    fn ten_thousand_singletons_within_five_percent() {
        let mut good = 0;
        for seed in 0..100u64 {
            let mut cs = CountSketch::new(5, 20_000, seed).unwrap();
            for key in 0..10_000u64 {
                cs.update(key, 1);
            }
            if (cs.estimate_l2sq() / 1e4 - 1.0).abs() <= 0.05 {
                good += 1;
            }
        }
        assert!(good >= 90, "{good}/100 trials within 5%");
    }

    #[test]
    fn encoding() {
        let mut cs = CountSketch::new(5, 20_000, 9).unwrap();
        cs.update(1, 7);
        cs.update(2, -3);
        let bytes = cs.encode().unwrap();
        assert_eq!(bytes.len(), CountSketch::encoded_len(5, 20_000));
        assert_eq!(bytes.len(), 10 + 80 + 400_000);
        assert_eq!(CountSketch::decode(bytes.as_slice()).unwrap(), cs);
        assert!(CountSketch::decode(&[]).is_err());
        assert!(CountSketch::decode(&bytes.as_slice()[..100]).is_err());

        let mut big = CountSketch::new(1, 1, 0).unwrap();
        big.update(1, i32::MAX as i64 + 1);
        assert!(matches!(big.encode(), Err(Error::Encode(_))));
    }

    proptest! {
        #[test]
        fn linear(xs in proptest::collection::vec((0u64..50, -5i64..6), 0..60),
                  ys in proptest::collection::vec((0u64..50, -5i64..6), 0..60)) {
            let proto = CountSketch::new(3, 16, 77).unwrap();
            let mut a = proto.empty_like();
            let mut b = proto.empty_like();
            let mut both = proto.empty_like();
            for &(k, d) in &xs { a.update(k, d); both.update(k, d); }
            for &(k, d) in &ys { b.update(k, d); both.update(k, d); }
            prop_assert_eq!(a.merged(&b).unwrap(), both);
        }

        #[test]
        fn roundtrip(depth in 1usize..6, width in 1usize..40, seed: u64,
                     ups in proptest::collection::vec((any::<u64>(), -1000i64..1000), 0..50)) {
            let mut cs = CountSketch::new(depth, width, seed).unwrap();
            for (k, d) in ups { cs.update(k, d); }
            prop_assert_eq!(CountSketch::decode(cs.encode().unwrap().as_slice()).unwrap(), cs);
        }
    }
}
