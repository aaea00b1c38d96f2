//! Byte layout shared by every sketch: one kind byte, one version byte, a
//! little-endian header and a packed payload.

use std::fmt;

use crate::error::{Error, Result};

pub const WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum SketchKind {
    HyperLogLog = 1,
    ExactSet = 2,
    CountSketch = 3,
}

impl SketchKind {
    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(SketchKind::HyperLogLog),
            2 => Some(SketchKind::ExactSet),
            3 => Some(SketchKind::CountSketch),
            _ => None,
        }
    }
}

/// An encoded sketch as it crosses the (simulated) wire.
#[derive(Clone, PartialEq, Eq)]
pub struct SketchBytes(Vec<u8>);

impl SketchBytes {
    pub fn new(bytes: Vec<u8>) -> Self {
        SketchBytes(bytes)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The kind tag, if the buffer is long enough to carry one.
    pub fn kind(&self) -> Option<SketchKind> {
        self.0.first().copied().and_then(SketchKind::from_tag)
    }
}

impl fmt::Debug for SketchBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SketchBytes")
            .field("kind", &self.kind())
            .field("len", &self.0.len())
            .finish()
    }
}

impl AsRef<[u8]> for SketchBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(kind: SketchKind, capacity: usize) -> Self {
        let mut buf = Vec::with_capacity(capacity + 2);
        buf.push(kind as u8);
        buf.push(WIRE_VERSION);
        Writer { buf }
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub(crate) fn finish(self) -> SketchBytes {
        SketchBytes(self.buf)
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Validates the kind and version bytes.
    pub(crate) fn open(buf: &'a [u8], expected: SketchKind) -> Result<Self> {
        let (&tag, rest) = buf
            .split_first()
            .ok_or_else(|| Error::Decode("empty buffer".into()))?;
        match SketchKind::from_tag(tag) {
            Some(kind) if kind == expected => {}
            Some(kind) => {
                return Err(Error::Decode(format!(
                    "expected {expected:?} sketch, found {kind:?}"
                )))
            }
            None => return Err(Error::Decode(format!("unknown sketch kind tag {tag}"))),
        }
        let &version = rest
            .first()
            .ok_or_else(|| Error::Decode("missing version byte".into()))?;
        if version != WIRE_VERSION {
            return Err(Error::Decode(format!("unsupported version {version}")));
        }
        Ok(Reader { buf, pos: 2 })
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Decode(format!(
                    "truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Packs 6-bit values LSB-first into `ceil(6 * len / 8)` bytes.
pub(crate) fn pack6(values: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; packed6_len(values.len())];
    for (i, &v) in values.iter().enumerate() {
        debug_assert!(v < 64);
        let bit = i * 6;
        let (byte, shift) = (bit / 8, bit % 8);
        let word = (v as u16 & 0x3f) << shift;
        out[byte] |= word as u8;
        if shift > 2 {
            out[byte + 1] |= (word >> 8) as u8;
        }
    }
    out
}

pub(crate) fn unpack6(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count)
        .map(|i| {
            let bit = i * 6;
            let (byte, shift) = (bit / 8, bit % 8);
            let lo = bytes[byte] as u16;
            let hi = if shift > 2 { bytes[byte + 1] as u16 } else { 0 };
            (((hi << 8 | lo) >> shift) & 0x3f) as u8
        })
        .collect()
}

pub(crate) fn packed6_len(count: usize) -> usize {
    (count * 6).div_ceil(8)
}
