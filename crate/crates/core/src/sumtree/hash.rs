use std::collections::BTreeSet;

use super::{Policy, SumTree, TreeConfig, ROOT};
use crate::code::{BitCode, Code};
use crate::error::{Error, Result};

/// Seeded FNV-1a over the keyword bytes, finished with the splitmix64
/// mixer so every output bit depends on every input bit.
pub fn keyword_hash(keyword: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &byte in keyword.as_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

pub(super) fn hash_code(keyword: &str, cfg: &TreeConfig) -> Result<BitCode> {
    let bits = cfg.c * cfg.d;
    let h = keyword_hash(keyword, cfg.seed);
    let digits = match cfg.slots {
        0 if bits >= 64 => h,
        0 => h & ((1u64 << bits) - 1),
        s => h % s,
    };
    BitCode::with_leading_one(digits, bits)
}

pub fn build_hash<S: AsRef<str>>(keywords: &[S], cfg: &TreeConfig) -> Result<SumTree> {
    if cfg.policy != Policy::Hash {
        return Err(Error::InvalidConfig("build_hash needs a Hash config".into()));
    }
    cfg.validate()?;
    let mut tree = SumTree::with_root(*cfg, Code::Bits(BitCode::ROOT));
    let unique: BTreeSet<&str> = keywords.iter().map(|k| k.as_ref()).collect();
    for kw in unique {
        tree.insert_hashed(kw)?;
    }
    Ok(tree)
}

impl SumTree {
    pub(super) fn insert_hashed(&mut self, keyword: &str) -> Result<usize> {
        let c = self.cfg.c;
        let code = hash_code(keyword, &self.cfg)?;
        let mut cur = ROOT;
        let mut prefix = BitCode::ROOT;
        for level in 0..self.cfg.d {
            prefix = prefix.child(c, code.digit(c, level))?;
            let key = Code::Bits(prefix);
            cur = match self.find(&key) {
                Some(i) => i,
                None => {
                    let parent = cur;
                    let i = self.add_node(key, parent);
                    self.refresh_ns(parent);
                    i
                }
            };
        }
        self.attach_keyword(keyword, cur);
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_codes_have_cd_plus_one_bits() {
        let kws: Vec<String> = (0..100).map(|i| format!("kw{i}")).collect();
        let t = build_hash(&kws, &TreeConfig::hash(2, 6, 6, 11)).unwrap();
        for k in &kws {
            let (code, scv) = t.encode(k).unwrap();
            let b = code.as_bits().unwrap();
            assert_eq!(b.len(), 13);
            assert_eq!(scv.len_fields(), 6);
        }
    }

    #[test]
    fn single_keyword_is_a_bare_path() {
        let t = build_hash(&["only"], &TreeConfig::hash(2, 6, 6, 0)).unwrap();
        assert_eq!(t.nodes().len(), 7);
        assert!(t.nodes().iter().all(|n| n.ns == 0));
    }

    #[test]
    fn seed_changes_codes() {
        assert_ne!(keyword_hash("x", 1), keyword_hash("x", 2));
    }
}
