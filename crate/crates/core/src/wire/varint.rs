//! QUIC variable-length integers.
//!
//! The two most significant bits of the first octet select the length class
//! (1, 2, 4 or 8 bytes); the remaining bits carry the value in network order.

use serde::{Deserialize, Serialize};

use super::{Result, WireError};

/// Largest value representable by a varint (2^62 - 1).
pub const MAX_VARINT: u64 = (1 << 62) - 1;

/// A QUIC variable-length integer, `0 <= value < 2^62`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct VarInt(u64);

impl VarInt {
    pub const MAX: VarInt = VarInt(MAX_VARINT);

    pub fn new(value: u64) -> Result<Self> {
        if value > MAX_VARINT {
            return Err(WireError::Range { field: "varint", value });
        }
        Ok(VarInt(value))
    }

    pub const fn from_u32(value: u32) -> Self {
        VarInt(value as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Length in bytes of the minimal encoding.
    pub fn encoded_len(self) -> usize {
        encoded_len(self.0)
    }
}

impl From<VarInt> for u64 {
    fn from(v: VarInt) -> u64 {
        v.0
    }
}

/// Minimal length class for `value`. Values above the varint range report 8;
/// encoding them fails separately.
pub fn encoded_len(value: u64) -> usize {
    if value < 1 << 6 {
        1
    } else if value < 1 << 14 {
        2
    } else if value < 1 << 30 {
        4
    } else {
        8
    }
}

pub fn encode_varint(v: VarInt) -> Vec<u8> {
    let mut out = Vec::with_capacity(8);
    put_varint(&mut out, v);
    out
}

pub fn put_varint(out: &mut Vec<u8>, v: VarInt) {
    let x = v.0;
    match encoded_len(x) {
        1 => out.push(x as u8),
        2 => out.extend_from_slice(&((x as u16) | 0x4000).to_be_bytes()),
        4 => out.extend_from_slice(&((x as u32) | 0x8000_0000).to_be_bytes()),
        _ => out.extend_from_slice(&(x | 0xc000_0000_0000_0000).to_be_bytes()),
    }
}

/// Checked encode of a raw integer.
pub fn put_u64(out: &mut Vec<u8>, field: &'static str, value: u64) -> Result<()> {
    if value > MAX_VARINT {
        return Err(WireError::Range { field, value });
    }
    put_varint(out, VarInt(value));
    Ok(())
}

/// Decodes one varint from the front of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_varint(bytes: &[u8]) -> Result<(VarInt, usize)> {
    let first = *bytes.first().ok_or(WireError::Truncated { field: "varint", offset: 0 })?;
    let len = 1usize << (first >> 6);
    if bytes.len() < len {
        return Err(WireError::Truncated { field: "varint", offset: 0 });
    }
    let mut value = u64::from(first & 0x3f);
    for b in &bytes[1..len] {
        value = (value << 8) | u64::from(*b);
    }
    Ok((VarInt(value), len))
}

/// Forward-only reader over a byte slice that tracks its offset for error
/// reporting.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0, base: 0 }
    }

    /// A reader whose reported offsets are shifted by `base`.
    pub fn with_base(buf: &'a [u8], base: usize) -> Self {
        Reader { buf, pos: 0, base }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    fn truncated(&self, field: &'static str) -> WireError {
        WireError::Truncated { field, offset: self.offset() }
    }

    pub fn varint(&mut self, field: &'static str) -> Result<u64> {
        match decode_varint(self.rest()) {
            Ok((v, n)) => {
                self.pos += n;
                Ok(v.value())
            }
            Err(_) => Err(self.truncated(field)),
        }
    }

    pub fn u8(&mut self, field: &'static str) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or_else(|| self.truncated(field))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn u16(&mut self, field: &'static str) -> Result<u16> {
        let b = self.bytes(2, field)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, field: &'static str) -> Result<u32> {
        let b = self.bytes(4, field)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn bytes(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.truncated(field));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let b = self.bytes(N, field)?;
        let mut out = [0u8; N];
        out.copy_from_slice(b);
        Ok(out)
    }

    /// Reads a varint length prefix followed by that many bytes.
    pub fn length_prefixed(&mut self, field: &'static str) -> Result<&'a [u8]> {
        let len = self.varint(field)?;
        let len = usize::try_from(len).map_err(|_| self.truncated(field))?;
        self.bytes(len, field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(v: u64) -> Vec<u8> {
        encode_varint(VarInt::new(v).unwrap())
    }

    #[test]
    fn boundary_classes() {
        assert_eq!(enc(0), [0x00]);
        assert_eq!(enc(63), [0x3f]);
        assert_eq!(enc(64), [0x40, 0x40]);
        assert_eq!(enc(16383).len(), 2);
        assert_eq!(enc(16384).len(), 4);
        assert_eq!(enc((1 << 30) - 1).len(), 4);
        assert_eq!(enc(1 << 30).len(), 8);
        assert_eq!(enc(MAX_VARINT).len(), 8);
    }

    #[test]
    fn known_vectors() {
        assert_eq!(enc(15293), [0x7b, 0xbd]);
        assert_eq!(decode_varint(&[0x00]).unwrap(), (VarInt(0), 1));
        assert_eq!(
            decode_varint(&[0x9d, 0x7f, 0x3e, 0x7d]).unwrap(),
            (VarInt(494_878_333), 4)
        );
        assert_eq!(
            decode_varint(&[0xc2, 0x19, 0x7c, 0x5e, 0xff, 0x14, 0xe8, 0x8c]).unwrap(),
            (VarInt(151_288_809_941_952_652), 8)
        );
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(VarInt::new(1 << 62), Err(WireError::Range { .. })));
        let mut out = Vec::new();
        assert!(put_u64(&mut out, "x", u64::MAX).is_err());
    }

    #[test]
    fn truncation() {
        assert!(matches!(decode_varint(&[0x40]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_varint(&[]), Err(WireError::Truncated { .. })));
        assert!(decode_varint(&[0x80, 0, 0]).is_err());
    }

    #[test]
    fn non_canonical_decodes_to_same_value() {
        // 2-byte encoding of 37 is legal on the wire, just not minimal.
        assert_eq!(decode_varint(&[0x40, 0x25]).unwrap(), (VarInt(37), 2));
    }
}
