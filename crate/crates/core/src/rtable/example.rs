//! A small hand-built table (b=6, c=2, 13-bit codes) used by tests and the
//! demo to walk through lookup, insert and summarization.

use super::htt::{join_code, HybridTableTrie};
use super::layout::Layout;
use crate::code::{BitCode, Scv};
use crate::error::Result;

pub const B: u32 = 6;
pub const C: u32 = 2;
pub const MASTER_PREFIX: u32 = 0b000010;
pub const D1: u8 = 1;
pub const D2: u8 = 2;
pub const D3: u8 = 3;

/// Named trie entries of the walkthrough, by code below the master prefix.
pub const LABELS: [(&str, &str); 10] = [
    ("p1", "101"),
    ("p2", "10100"),
    ("p3", "10101"),
    ("p4", "10110"),
    ("p5", "10111"),
    ("p6", "1010001"),
    ("p7", "1010010"),
    ("p8", "1011000"),
    ("p9", "1011001"),
    ("p10", "1011010"),
];

/// Full code for a suffix written as a bit string.
pub fn code(suffix: &str) -> BitCode {
    join_code(MASTER_PREFIX, B, BitCode::parse(suffix).unwrap()).unwrap()
}

/// Full SCV: zeros for the master-prefix levels, then `suffix_bits`.
pub fn scv(suffix_bits: &str) -> Scv {
    Scv::parse(C, &format!("{}{}", "0".repeat((B / C * C) as usize), suffix_bits)).unwrap()
}

pub fn label_of(suffix: BitCode) -> Option<&'static str> {
    LABELS.iter().find(|(_, s)| *s == suffix.to_string()).map(|(l, _)| *l)
}

/// Builds the table: p2 summarized over four children (two remaining),
/// p3 and p5 fully summarized, p5 also reachable through D2, p8 and p9
/// under p4 via D1.
pub fn sample_table() -> Result<HybridTableTrie> {
    let mut t = HybridTableTrie::new(Layout::new(C, B, C * 6 + 1)?);
    let kids: [(&str, &[u8]); 4] =
        [("1010000", &[D1]), ("1010001", &[D1, D2]), ("1010010", &[D1, D2, D3]), ("1010011", &[D1])];
    for (s, nbs) in kids {
        for &n in nbs {
            t.insert(code(s), n, &scv("101111"))?;
        }
    }
    t.summarize(code("10100"), 1.0)?;
    for parent in ["10101", "10111"] {
        for j in ["00", "01", "10", "11"] {
            t.insert(code(&format!("{parent}{j}")), D1, &scv("101111"))?;
        }
        t.summarize(code(parent), 1.0)?;
    }
    t.insert(code("10111"), D2, &scv("1011"))?;
    for s in ["1011000", "1011001"] {
        t.insert(code(s), D1, &scv("101110"))?;
    }
    Ok(t)
}

/// The advertisement that completes p4's child set.
pub fn p10() -> (BitCode, Scv) {
    (code("1011010"), scv("101110"))
}
