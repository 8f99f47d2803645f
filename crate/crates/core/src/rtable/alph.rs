//! Character-trie routing table for alphabetical codes.

use std::collections::BTreeMap;

use super::htt::{mask_of, InsertOutcome, InsertResult, SummarizeStats};
use super::layout::{EntryType, NB_EMPTY};
use crate::code::Scv;
use crate::error::{Error, Result};
use crate::sumtree::ALPH_FIELD_WIDTH;

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<char, usize>,
    parent: Option<usize>,
    nb: Vec<u8>,
    scv: Option<Scv>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphEntryView {
    pub code: String,
    pub ty: EntryType,
    pub nb: Vec<u8>,
    pub scv: Option<Scv>,
}

#[derive(Debug, Clone)]
pub struct AlphTrie {
    nodes: Vec<Node>,
    free: Vec<usize>,
    nb_slots: usize,
    dropped: u64,
}

const ROOT: usize = 0;

impl Default for AlphTrie {
    fn default() -> Self {
        Self::new(8)
    }
}

impl AlphTrie {
    pub fn new(nb_slots: usize) -> Self {
        AlphTrie { nodes: vec![Node::default()], free: Vec::new(), nb_slots, dropped: 0 }
    }

    pub fn dropped_neighbors(&self) -> u64 {
        self.dropped
    }

    fn alloc(&mut self, parent: usize) -> usize {
        let node = Node { parent: Some(parent), ..Node::default() };
        match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        let mut stack = vec![ROOT];
        std::iter::from_fn(move || {
            let n = stack.pop()?;
            stack.extend(self.nodes[n].children.values().rev());
            Some(n)
        })
    }

    fn kind(&self, n: usize) -> Option<EntryType> {
        let node = &self.nodes[n];
        match (!node.nb.is_empty(), node.children.len()) {
            (true, 0) => Some(EntryType::A),
            (true, _) => Some(EntryType::M),
            // a branching point of the compressed trie is a link entry
            (false, k) if k >= 2 => Some(EntryType::P),
            _ => None,
        }
    }

    /// Entries as a compressed trie would hold them: NB carriers plus
    /// branching points.
    pub fn entry_count(&self) -> usize {
        self.live().filter(|&n| self.kind(n).is_some()).count()
    }

    pub fn bytes(&self) -> usize {
        self.live()
            .map(|n| match self.kind(n) {
                Some(EntryType::M) => 16,
                Some(_) => 8,
                None => 0,
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[ROOT].children.is_empty()
    }

    fn walk(&self, code: &str) -> Vec<usize> {
        let mut path = vec![ROOT];
        let mut cur = ROOT;
        for ch in code.chars() {
            match self.nodes[cur].children.get(&ch) {
                Some(&n) => {
                    path.push(n);
                    cur = n;
                }
                None => break,
            }
        }
        path
    }

    pub fn lookup(&self, code: &str) -> u32 {
        self.walk(code).iter().fold(0, |m, &n| m | mask_of(&self.nodes[n].nb))
    }

    pub fn insert(&mut self, code: &str, neighbor: u8, scv: &Scv) -> Result<InsertResult> {
        if neighbor >= NB_EMPTY {
            return Err(Error::NeighborId(neighbor));
        }
        let len = code.chars().count();
        if len == 0 || scv.len_fields() != len || scv.width() != ALPH_FIELD_WIDTH {
            return Err(Error::InvalidConfig(format!("scv {scv} does not fit code {code:?}")));
        }
        let path = self.walk(code);
        let fnset = path.iter().fold(0, |m, &n| m | mask_of(&self.nodes[n].nb));
        if fnset & (1 << neighbor) != 0 {
            return Ok(InsertResult { outcome: InsertOutcome::AlreadyKnown, fnset });
        }
        let mut cur = *path.last().unwrap();
        for ch in code.chars().skip(path.len() - 1) {
            let n = self.alloc(cur);
            self.nodes[cur].children.insert(ch, n);
            cur = n;
        }
        let node = &mut self.nodes[cur];
        if node.nb.len() >= self.nb_slots {
            self.dropped += 1;
            return Ok(InsertResult { outcome: InsertOutcome::Dropped, fnset });
        }
        node.nb.push(neighbor);
        if node.scv.is_none() {
            node.scv = Some(scv.clone());
        }
        Ok(InsertResult { outcome: InsertOutcome::Inserted, fnset })
    }

    fn find(&self, code: &str) -> Option<usize> {
        let path = self.walk(code);
        (path.len() == code.chars().count() + 1).then(|| *path.last().unwrap())
    }

    /// Summarizes the children of the node spelling `code` into it.
    pub fn summarize(&mut self, code: &str, cov: f64) -> Result<SummarizeStats> {
        let n = self.find(code).ok_or_else(|| Error::UnknownCode(code.to_string()))?;
        if n == ROOT {
            return Err(Error::NotSummarizable("the empty code".into()));
        }
        let mut stats = SummarizeStats::default();
        let before = self.bytes();
        self.summarize_at(n, cov, &mut stats, true)?;
        stats.bytes_reclaimed = before.saturating_sub(self.bytes());
        Ok(stats)
    }

    fn summarize_at(&mut self, n: usize, cov: f64, stats: &mut SummarizeStats, strict: bool) -> Result<bool> {
        let kids: Vec<(char, usize)> = self.nodes[n].children.iter().map(|(&c, &i)| (c, i)).collect();
        let not = |why: &str| if strict { Err(Error::NotSummarizable(why.to_string())) } else { Ok(false) };
        if kids.is_empty() {
            return not("no children");
        }
        if kids.iter().any(|&(_, k)| self.nodes[k].nb.is_empty()) {
            return not("a child carries no routing data");
        }
        if !kids.iter().any(|&(_, k)| self.nodes[k].children.is_empty()) {
            return not("no leaf child");
        }
        let nc = kids
            .iter()
            .filter_map(|&(_, k)| self.nodes[k].scv.as_ref().and_then(|s| s.last()))
            .max()
            .unwrap_or(0) as f64
            + 1.0;
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for &(_, k) in &kids {
            for &d in &self.nodes[k].nb {
                *counts.entry(d).or_default() += 1;
            }
        }
        let room = self.nb_slots - self.nodes[n].nb.len();
        let sum_nb: Vec<u8> = counts
            .into_iter()
            .filter(|&(d, cnt)| cnt as f64 >= nc * cov - 1e-9 && !self.nodes[n].nb.contains(&d))
            .map(|(d, _)| d)
            .take(room)
            .collect();
        if sum_nb.is_empty() {
            return Ok(false);
        }
        if self.nodes[n].scv.is_none() {
            let donor = kids.iter().find(|&&(_, k)| self.nodes[k].children.is_empty()).unwrap().1;
            self.nodes[n].scv = Some(self.nodes[donor].scv.as_ref().unwrap().parent());
        }
        self.nodes[n].nb.extend(&sum_nb);
        stats.moved += sum_nb.len();
        for (ch, k) in kids {
            let had = self.kind(k).is_some();
            self.nodes[k].nb.retain(|d| !sum_nb.contains(d));
            if self.nodes[k].nb.is_empty() {
                self.nodes[k].scv = None;
                if self.nodes[k].children.is_empty() {
                    self.nodes[n].children.remove(&ch);
                    self.free.push(k);
                    stats.removed += 1;
                } else if had && self.kind(k).is_none() {
                    stats.removed += 1;
                }
            }
        }
        Ok(true)
    }

    pub fn summarize_table(&mut self, cov: f64) -> Result<SummarizeStats> {
        let before = self.bytes();
        let mut total = SummarizeStats::default();
        loop {
            let mut pass = SummarizeStats::default();
            let order = self.post_order();
            for n in order {
                if n != ROOT && self.nodes[n].parent.is_some() {
                    self.summarize_at(n, cov, &mut pass, false)?;
                }
            }
            total.removed += pass.removed;
            total.moved += pass.moved;
            if pass.moved == 0 {
                break;
            }
        }
        total.bytes_reclaimed = before.saturating_sub(self.bytes());
        Ok(total)
    }

    fn post_order(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.live().collect();
        out.reverse();
        out
    }

    /// Drops the routing data stored exactly at `code` and prunes dangling
    /// chains. Returns entries freed.
    pub fn evict(&mut self, code: &str) -> usize {
        let Some(n) = self.find(code) else { return 0 };
        let before = self.entry_count();
        self.nodes[n].nb.clear();
        self.nodes[n].scv = None;
        let mut cur = n;
        while cur != ROOT && self.nodes[cur].children.is_empty() && self.nodes[cur].nb.is_empty() {
            let p = self.nodes[cur].parent.unwrap();
            self.nodes[p].children.retain(|_, &mut v| v != cur);
            self.free.push(cur);
            cur = p;
        }
        before - self.entry_count()
    }

    pub fn entries(&self) -> Vec<AlphEntryView> {
        let mut out = Vec::new();
        let mut stack = vec![(ROOT, String::new())];
        while let Some((n, code)) = stack.pop() {
            if let Some(ty) = self.kind(n) {
                out.push(AlphEntryView { code: code.clone(), ty, nb: self.nodes[n].nb.clone(), scv: self.nodes[n].scv.clone() });
            }
            for (&ch, &k) in self.nodes[n].children.iter().rev() {
                stack.push((k, format!("{code}{ch}")));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nodes[ROOT].nb.is_empty() {
            return Err(Error::Invariant("the empty code carries NB".into()));
        }
        for n in self.live() {
            let node = &self.nodes[n];
            if n != ROOT && node.children.is_empty() && node.nb.is_empty() {
                return Err(Error::Invariant("dangling trie node".into()));
            }
            for &k in node.children.values() {
                if self.nodes[k].parent != Some(n) {
                    return Err(Error::Invariant("broken parent link".into()));
                }
            }
        }
        Ok(())
    }
}
