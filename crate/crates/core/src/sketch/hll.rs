use super::wire::{pack6, packed6_len, unpack6, Reader, SketchBytes, SketchKind, Writer};
use super::DistinctSketch;
use crate::error::{Error, Result};
use crate::hash::hash64;

pub const MIN_BITS: u8 = 4;
pub const MAX_BITS: u8 = 20;

/// HyperLogLog with `2^bits` six-bit registers.
///
/// The low `bits` bits of the seeded hash select a register; the rank of the
/// remaining `64 - bits` bits (leading zeros + 1) is max-folded into it.
#[derive(Clone, PartialEq, Eq)]
pub struct HyperLogLog {
    bits: u8,
    seed: u64,
    registers: Vec<u8>,
}

impl HyperLogLog {
    pub fn new(bits: u8, seed: u64) -> Result<Self> {
        if !(MIN_BITS..=MAX_BITS).contains(&bits) {
            return Err(Error::Config(format!(
                "HyperLogLog bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}"
            )));
        }
        Ok(HyperLogLog {
            bits,
            seed,
            registers: vec![0; 1 << bits],
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    /// Largest value a register may hold.
    pub fn max_rank(&self) -> u8 {
        64 - self.bits
    }

    /// Theoretical relative standard error `1.04 / sqrt(2^bits)`.
    pub fn standard_error(bits: u8) -> f64 {
        1.04 / ((1u64 << bits) as f64).sqrt()
    }

    /// Encoded size for a given `bits`: 11 header bytes plus packed registers.
    pub fn encoded_len(bits: u8) -> usize {
        2 + 1 + 8 + packed6_len(1 << bits)
    }

    fn alpha(m: usize) -> f64 {
        match m {
            16 => 0.673,
            32 => 0.697,
            64 => 0.709,
            _ => 0.7213 / (1.0 + 1.079 / m as f64),
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.bits != other.bits || self.seed != other.seed {
            return Err(Error::IncompatibleSketch(format!(
                "HyperLogLog (bits={}, seed={}) vs (bits={}, seed={})",
                self.bits, self.seed, other.bits, other.seed
            )));
        }
        Ok(())
    }
}

impl std::fmt::Debug for HyperLogLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HyperLogLog")
            .field("bits", &self.bits)
            .field("seed", &self.seed)
            .field("estimate", &self.estimate())
            .finish()
    }
}

/// Exactly `2^-r`.
#[inline]
fn inv_pow2(r: u8) -> f64 {
    f64::from_bits((1023 - r as u64) << 52)
}

impl DistinctSketch for HyperLogLog {
    fn empty_like(&self) -> Self {
        HyperLogLog {
            bits: self.bits,
            seed: self.seed,
            registers: vec![0; self.registers.len()],
        }
    }

    #[inline]
    fn insert(&mut self, id: u64) {
        let h = hash64(id, self.seed);
        let index = (h & ((1u64 << self.bits) - 1)) as usize;
        let rest = h >> self.bits;
        // Leading zeros counted within the 64 - bits remaining positions.
        let rank = ((rest << self.bits).leading_zeros() as u8 + 1).min(self.max_rank());
        let reg = &mut self.registers[index];
        if rank > *reg {
            *reg = rank;
        }
    }

    fn merge_from(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, &b) in self.registers.iter_mut().zip(&other.registers) {
            *a = (*a).max(b);
        }
        Ok(())
    }

    fn estimate(&self) -> f64 {
        let m = self.registers.len();
        let mut sum = 0.0;
        let mut zeros = 0usize;
        for &r in &self.registers {
            sum += inv_pow2(r);
            zeros += (r == 0) as usize;
        }
        let mf = m as f64;
        let raw = Self::alpha(m) * mf * mf / sum;
        if raw <= 2.5 * mf && zeros > 0 {
            mf * (mf / zeros as f64).ln()
        } else {
            raw
        }
    }

    fn is_empty(&self) -> bool {
        self.registers.iter().all(|&r| r == 0)
    }

    fn encode(&self) -> SketchBytes {
        let packed = pack6(&self.registers);
        let mut w = Writer::new(SketchKind::HyperLogLog, 9 + packed.len());
        w.u8(self.bits);
        w.u64(self.seed);
        w.bytes(&packed);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, SketchKind::HyperLogLog)?;
        let bits = r.u8()?;
        let seed = r.u64()?;
        let mut sketch = HyperLogLog::new(bits, seed).map_err(|e| Error::Decode(e.to_string()))?;
        let m = sketch.registers.len();
        let packed = r.take(packed6_len(m))?;
        r.finish()?;
        let registers = unpack6(packed, m);
        let max = sketch.max_rank();
        if let Some(bad) = registers.iter().find(|&&v| v > max) {
            return Err(Error::Decode(format!(
                "register value {bad} exceeds maximum rank {max}"
            )));
        }
        // Pad bits beyond the last register must be zero for bit-exactness.
        if packed.len() * 8 > m * 6 && packed[packed.len() - 1] >> ((m * 6) % 8) != 0 {
            return Err(Error::Decode("non-zero padding bits".into()));
        }
        sketch.registers = registers;
        Ok(sketch)
    }
}
