use std::collections::BTreeSet;

use super::{Policy, SumTree, TreeConfig, ROOT};
use crate::code::{Code, Scv};
use crate::error::{Error, Result};

pub const TERMINATOR: char = '$';
/// Letters, digits, '_' and the terminator.
pub const N_CHAR: u32 = 38;
/// `ceil(log2(N_CHAR))`.
pub const ALPH_FIELD_WIDTH: u32 = 6;

const MAX_FIELD: u16 = (1 << ALPH_FIELD_WIDTH) - 1;

pub(super) fn leaf_code(keyword: &str) -> String {
    format!("{keyword}{TERMINATOR}")
}

fn lcp<'a>(a: &'a str, b: &str) -> &'a str {
    let end = a
        .char_indices()
        .zip(b.chars())
        .find(|((_, x), y)| x != y)
        .map(|((i, _), _)| i)
        .unwrap_or_else(|| a.len().min(b.len()));
    &a[..end]
}

fn first_char_after(s: &str, prefix_len: usize) -> Option<char> {
    s[prefix_len..].chars().next()
}

pub(super) fn build<S: AsRef<str>>(keywords: &[S]) -> Result<SumTree> {
    let mut unique = BTreeSet::new();
    for k in keywords {
        let k = k.as_ref();
        if k.contains(TERMINATOR) {
            return Err(Error::ReservedChar(k.to_string()));
        }
        unique.insert(k);
    }
    if unique.is_empty() {
        return Err(Error::EmptyKeywordSet);
    }
    let mut tree = SumTree::with_root(TreeConfig::alph(), Code::Alph(String::new()));
    let codes: Vec<String> = unique.iter().map(|k| leaf_code(k)).collect();
    tree.build_range(ROOT, &codes);
    for k in unique {
        let leaf = tree.find(&Code::Alph(leaf_code(k))).expect("leaf built");
        tree.attach_keyword(k, leaf);
    }
    Ok(tree)
}

impl SumTree {
    /// Adds the compressed-trie children of `node` for sorted `codes`, all
    /// of which extend `node`'s code.
    fn build_range(&mut self, node: usize, codes: &[String]) {
        let plen = self.nodes[node].tau.as_alph().unwrap().len();
        let mut i = 0;
        while i < codes.len() {
            let ch = first_char_after(&codes[i], plen);
            let mut j = i + 1;
            while j < codes.len() && first_char_after(&codes[j], plen) == ch {
                j += 1;
            }
            let group = &codes[i..j];
            if group.len() == 1 {
                self.add_node(Code::Alph(group[0].clone()), node);
            } else {
                let common = lcp(&group[0], &group[group.len() - 1]).to_string();
                let child = self.add_node(Code::Alph(common), node);
                self.build_range(child, group);
            }
            i = j;
        }
        self.refresh_ns(node);
    }

    /// Per-character sibling counts over the uncompressed character trie:
    /// the field for position `i` is the number of distinct characters
    /// that can follow `code[..i]` minus one.
    pub(super) fn alph_scv(&self, code: &str) -> Scv {
        let mut fields = Vec::new();
        for (i, _) in code.char_indices() {
            let ns = match self.find(&Code::Alph(code[..i].to_string())) {
                Some(n) => self.nodes[n].nc().saturating_sub(1).min(MAX_FIELD as usize) as u16,
                None => 0,
            };
            fields.push(ns);
        }
        Scv::from_fields(ALPH_FIELD_WIDTH, fields)
    }

    pub(super) fn alph_insert(&mut self, keyword: &str) -> Result<usize> {
        debug_assert_eq!(self.cfg.policy, Policy::Alph);
        if keyword.contains(TERMINATOR) {
            return Err(Error::ReservedChar(keyword.to_string()));
        }
        let code = leaf_code(keyword);
        let mut cur = ROOT;
        loop {
            let plen = self.nodes[cur].tau.as_alph().unwrap().len();
            let ch = first_char_after(&code, plen);
            let hit = self.nodes[cur]
                .children
                .iter()
                .copied()
                .find(|&c| first_char_after(self.nodes[c].tau.as_alph().unwrap(), plen) == ch);
            let Some(child) = hit else {
                let leaf = self.add_node(Code::Alph(code), cur);
                self.refresh_ns(cur);
                self.attach_keyword(keyword, leaf);
                return Ok(leaf);
            };
            let ctau = self.nodes[child].tau.as_alph().unwrap().to_string();
            if code.starts_with(&ctau) {
                cur = child;
                continue;
            }
            // split the edge at the common prefix
            let common = lcp(&ctau, &code).to_string();
            self.nodes[cur].children.retain(|&c| c != child);
            let mid = self.add_node(Code::Alph(common), cur);
            self.nodes[child].parent = Some(mid);
            self.nodes[mid].children.push(child);
            self.nodes[mid].members = self.nodes[child].members;
            let leaf = self.add_node(Code::Alph(code), mid);
            self.refresh_ns(mid);
            self.shift_depths(child);
            self.attach_keyword(keyword, leaf);
            return Ok(leaf);
        }
    }

    fn shift_depths(&mut self, root: usize) {
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            let p = self.nodes[n].parent.unwrap();
            self.nodes[n].depth = self.nodes[p].depth + 1;
            stack.extend(self.nodes[n].children.iter().copied());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn child_codes(t: &SumTree, code: &str) -> Vec<String> {
        let n = t.find(&Code::Alph(code.into())).unwrap();
        t.node(n).children.iter().map(|&c| t.node(c).tau.to_string()).collect()
    }

    #[test]
    fn terminator_separates_keyword_from_prefix() {
        let t = build(&["CO", "CO2", "CO3"]).unwrap();
        assert_eq!(child_codes(&t, ""), vec!["CO"]);
        assert_eq!(child_codes(&t, "CO"), vec!["CO$", "CO2$", "CO3$"]);
        let (code, scv) = t.encode("CO2").unwrap();
        assert_eq!(code, Code::Alph("CO2$".into()));
        assert_eq!(scv.fields(), &[0, 0, 2, 0]);
    }

    #[test]
    fn singleton_and_errors() {
        let t = build(&["x"]).unwrap();
        assert_eq!(child_codes(&t, ""), vec!["x$"]);
        assert!(matches!(build::<&str>(&[]), Err(Error::EmptyKeywordSet)));
        assert!(matches!(build(&["a$b"]), Err(Error::ReservedChar(_))));
    }

    #[test]
    fn insert_splits_edges() {
        let mut t = build(&["temp_a", "temp_b"]).unwrap();
        t.alph_insert("tx").unwrap();
        assert_eq!(child_codes(&t, ""), vec!["t"]);
        assert_eq!(child_codes(&t, "t"), vec!["temp_", "tx$"]);
        let fresh = build(&["temp_a", "temp_b", "tx"]).unwrap();
        for k in ["temp_a", "temp_b", "tx"] {
            assert_eq!(t.encode(k).unwrap(), fresh.encode(k).unwrap());
        }
        let n = t.find(&Code::Alph("temp_a$".into())).unwrap();
        assert_eq!(t.node(n).depth, 3);
    }
}
