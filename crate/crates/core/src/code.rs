//! Summarization codes and sibling-count vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest code (leading 1 included) that fits in a `u64`.
pub const MAX_CODE_BITS: u32 = 63;

/// A fixed-length bit string whose most significant bit is always 1.
///
/// Hash and meaning codes are stored as integers: the leading 1 makes the
/// length recoverable and lets `parent = code >> c` work directly.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitCode {
    value: u64,
    len: u8,
}

impl BitCode {
    /// The one-bit root code `1`.
    pub const ROOT: BitCode = BitCode { value: 1, len: 1 };

    /// Builds a code from its integer value; the length is the position of
    /// the highest set bit.
    pub fn from_value(value: u64) -> Result<Self> {
        if value == 0 {
            return Err(Error::UnknownCode("0".into()));
        }
        let len = 64 - value.leading_zeros();
        if len > MAX_CODE_BITS {
            return Err(Error::UnknownCode(format!("{value:#x}")));
        }
        Ok(BitCode { value, len: len as u8 })
    }

    /// Prefixes `bits` (the low `nbits` bits of `digits`) with a leading 1.
    pub fn with_leading_one(digits: u64, nbits: u32) -> Result<Self> {
        if nbits + 1 > MAX_CODE_BITS || (nbits < 64 && digits >> nbits != 0) {
            return Err(Error::UnknownCode(format!("{digits:#b}/{nbits}")));
        }
        Ok(BitCode { value: (1u64 << nbits) | digits, len: (nbits + 1) as u8 })
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() || !s.starts_with('1') || s.len() as u32 > MAX_CODE_BITS {
            return Err(Error::UnknownCode(s.to_string()));
        }
        let value = u64::from_str_radix(s, 2).map_err(|_| Error::UnknownCode(s.to_string()))?;
        Ok(BitCode { value, len: s.len() as u8 })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn len(self) -> u32 {
        self.len as u32
    }

    pub fn is_root(self) -> bool {
        self.len == 1
    }

    /// The bits after the leading 1.
    pub fn payload(self) -> u64 {
        self.value & !(1u64 << (self.len - 1))
    }

    /// Depth in a tree of branching `2^c`: `(len - 1) / c`.
    pub fn depth(self, c: u32) -> u32 {
        (self.len() - 1) / c
    }

    pub fn child(self, c: u32, j: u64) -> Result<Self> {
        debug_assert!(j < (1 << c));
        if self.len() + c > MAX_CODE_BITS {
            return Err(Error::InvalidConfig(format!("code longer than {MAX_CODE_BITS} bits")));
        }
        Ok(BitCode { value: (self.value << c) | j, len: self.len + c as u8 })
    }

    /// Drops the last `c` bits.
    pub fn parent(self, c: u32) -> Result<Self> {
        if self.len() <= c {
            return Err(Error::RootCode(self.to_string()));
        }
        Ok(BitCode { value: self.value >> c, len: self.len - c as u8 })
    }

    /// Last `c`-bit digit.
    pub fn last_digit(self, c: u32) -> u64 {
        self.value & ((1 << c) - 1)
    }

    /// The `i`-th `c`-bit digit after the leading 1 (0-based).
    pub fn digit(self, c: u32, i: u32) -> u64 {
        let shift = self.len() - 1 - (i + 1) * c;
        (self.value >> shift) & ((1 << c) - 1)
    }

    pub fn is_prefix_of(self, other: BitCode) -> bool {
        other.len >= self.len && other.value >> (other.len - self.len) == self.value
    }
}

impl fmt::Display for BitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.len as usize)
    }
}

impl fmt::Debug for BitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitCode({self})")
    }
}

/// A routing code: bit codes for hash/meaning trees, strings for the
/// alphabetical trie.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Code {
    Bits(BitCode),
    Alph(String),
}

impl Code {
    pub fn as_bits(&self) -> Option<BitCode> {
        match self {
            Code::Bits(b) => Some(*b),
            Code::Alph(_) => None,
        }
    }

    pub fn as_alph(&self) -> Option<&str> {
        match self {
            Code::Alph(s) => Some(s),
            Code::Bits(_) => None,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Code::Bits(b) => b.fmt(f),
            Code::Alph(s) => f.write_str(s),
        }
    }
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Code::Bits(b) => write!(f, "Bits({b})"),
            Code::Alph(s) => write!(f, "Alph({s:?})"),
        }
    }
}

/// Sibling-count vector: one fixed-width field per tree level below the
/// root, most significant field = highest ancestor.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Scv {
    fields: Vec<u16>,
    width: u8,
}

impl Scv {
    pub fn new(width: u32) -> Self {
        Scv { fields: Vec::new(), width: width as u8 }
    }

    pub fn from_fields(width: u32, fields: Vec<u16>) -> Self {
        debug_assert!(fields.iter().all(|&f| (f as u32) < (1 << width)));
        Scv { fields, width: width as u8 }
    }

    /// Splits a bit string into `width`-bit fields.
    pub fn parse(width: u32, bits: &str) -> Result<Self> {
        if width == 0 || bits.len() % width as usize != 0 || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::InvalidConfig(format!("bad scv {bits:?} for width {width}")));
        }
        let fields = bits
            .as_bytes()
            .chunks(width as usize)
            .map(|ch| ch.iter().fold(0u16, |acc, &b| (acc << 1) | (b - b'0') as u16))
            .collect();
        Ok(Scv { fields, width: width as u8 })
    }

    pub fn width(&self) -> u32 {
        self.width as u32
    }

    pub fn fields(&self) -> &[u16] {
        &self.fields
    }

    pub fn len_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn bit_len(&self) -> u32 {
        self.fields.len() as u32 * self.width as u32
    }

    pub fn push(&mut self, ns: u16) {
        debug_assert!((ns as u32) < (1 << self.width));
        self.fields.push(ns);
    }

    pub fn last(&self) -> Option<u16> {
        self.fields.last().copied()
    }

    /// The parent's vector: this one minus its last field.
    pub fn parent(&self) -> Scv {
        let mut fields = self.fields.clone();
        fields.pop();
        Scv { fields, width: self.width }
    }

    /// Keeps only the fields below `skip_levels` (the `scv^{b+}` suffix).
    pub fn suffix(&self, skip_levels: usize) -> Scv {
        Scv { fields: self.fields.iter().skip(skip_levels).copied().collect(), width: self.width }
    }

    /// Packs the fields into an integer, first field most significant.
    pub fn to_u64(&self) -> u64 {
        self.fields.iter().fold(0u64, |acc, &f| (acc << self.width) | f as u64)
    }

    pub fn from_u64(width: u32, nfields: usize, bits: u64) -> Self {
        let mask = (1u64 << width) - 1;
        let fields = (0..nfields)
            .rev()
            .map(|i| ((bits >> (i as u32 * width)) & mask) as u16)
            .collect();
        Scv { fields, width: width as u8 }
    }
}

impl fmt::Display for Scv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for field in &self.fields {
            write!(f, "{:0w$b}", field, w = self.width as usize)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Scv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scv({self})")
    }
}
