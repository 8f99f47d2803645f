use std::collections::{BTreeMap, HashMap};

use crate::code::{Code, Scv};
use crate::error::{Error, Result};
use crate::rtable::{AlphTrie, HybridTableTrie, InsertOutcome, InsertResult, Layout, SummarizeStats};

use super::SummarizeTrigger;

#[derive(Debug, Clone, Default)]
struct Lru {
    cap: usize,
    tick: u64,
    last: HashMap<Code, u64>,
    order: BTreeMap<u64, Code>,
}

impl Lru {
    fn touch(&mut self, code: &Code) {
        self.tick += 1;
        if let Some(old) = self.last.insert(code.clone(), self.tick) {
            self.order.remove(&old);
        }
        self.order.insert(self.tick, code.clone());
    }

    fn pop_oldest(&mut self) -> Option<Code> {
        let (_, code) = self.order.pop_first()?;
        self.last.remove(&code);
        Some(code)
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Htt(HybridTableTrie),
    Alph(AlphTrie),
}

/// Routing table for one attribute, plus a wildcard NB set for streams that
/// leave the attribute absent.
#[derive(Debug, Clone)]
pub struct AttrTable {
    kind: Kind,
    absent: u32,
    lru: Option<Lru>,
    evicted: u64,
}

impl AttrTable {
    pub fn htt(layout: Layout) -> Self {
        AttrTable { kind: Kind::Htt(HybridTableTrie::new(layout)), absent: 0, lru: None, evicted: 0 }
    }

    /// Caps `self` at `cap` leaf entries, evicting the least recently used
    /// one on overflow.
    pub fn bounded(mut self, cap: usize) -> Self {
        self.lru = Some(Lru { cap: cap.max(1), ..Lru::default() });
        self
    }

    pub fn alph(nb_slots: usize) -> Self {
        AttrTable { kind: Kind::Alph(AlphTrie::new(nb_slots)), absent: 0, lru: None, evicted: 0 }
    }

    pub fn as_htt(&self) -> Option<&HybridTableTrie> {
        match &self.kind {
            Kind::Htt(t) => Some(t),
            Kind::Alph(_) => None,
        }
    }

    pub fn as_alph(&self) -> Option<&AlphTrie> {
        match &self.kind {
            Kind::Alph(t) => Some(t),
            Kind::Htt(_) => None,
        }
    }

    pub fn absent_mask(&self) -> u32 {
        self.absent
    }

    /// Records `neighbor` as a next hop toward streams lacking this attribute.
    pub fn insert_absent(&mut self, neighbor: u8) -> InsertOutcome {
        let bit = 1u32 << neighbor;
        if self.absent & bit != 0 {
            InsertOutcome::AlreadyKnown
        } else {
            self.absent |= bit;
            InsertOutcome::Inserted
        }
    }

    pub fn lookup(&mut self, code: &Code) -> u32 {
        if let Some(lru) = &mut self.lru {
            if lru.last.contains_key(code) {
                lru.touch(code);
            }
        }
        match (&self.kind, code) {
            (Kind::Htt(t), Code::Bits(b)) => t.lookup(*b),
            (Kind::Alph(t), Code::Alph(s)) => t.lookup(s),
            _ => 0,
        }
    }

    pub fn insert(&mut self, code: &Code, neighbor: u8, scv: &Scv, trigger: SummarizeTrigger, cov: f64) -> Result<InsertResult> {
        let res = match (&mut self.kind, code) {
            (Kind::Htt(t), Code::Bits(b)) => t.insert(*b, neighbor, scv)?,
            (Kind::Alph(t), Code::Alph(s)) => t.insert(s, neighbor, scv)?,
            _ => return Err(Error::InvalidConfig(format!("code {code} does not suit this table"))),
        };
        if let Some(lru) = &mut self.lru {
            if res.outcome != InsertOutcome::Dropped {
                lru.touch(code);
            }
            while lru.last.len() > lru.cap {
                match (&mut self.kind, lru.pop_oldest().expect("non-empty")) {
                    (Kind::Htt(t), Code::Bits(b)) => {
                        t.evict(b)?;
                    }
                    (Kind::Alph(t), Code::Alph(s)) => {
                        t.evict(&s);
                    }
                    _ => {}
                }
                self.evicted += 1;
            }
            return Ok(res);
        }
        if res.outcome == InsertOutcome::Inserted {
            match trigger {
                SummarizeTrigger::OnInsert => self.summarize_upward(code, cov)?,
                SummarizeTrigger::SizeBound(max) if self.entry_count() > max => {
                    self.summarize_all(cov)?;
                }
                _ => {}
            }
        }
        Ok(res)
    }

    fn summarize_upward(&mut self, code: &Code, cov: f64) -> Result<()> {
        match (&mut self.kind, code) {
            (Kind::Htt(t), Code::Bits(b)) => {
                let (c, floor) = (t.layout().c, t.layout().b + 1);
                let mut cur = *b;
                while cur.len() > floor + c {
                    cur = cur.parent(c)?;
                    match t.summarize(cur, cov) {
                        Ok(s) if s.moved > 0 => {}
                        Ok(_) | Err(Error::NotSummarizable(_) | Error::UnknownCode(_)) => break,
                        Err(e) => return Err(e),
                    }
                }
            }
            (Kind::Alph(t), Code::Alph(s)) => {
                let mut cur: &str = s;
                while let Some((i, _)) = cur.char_indices().last().filter(|(i, _)| *i > 0) {
                    cur = &cur[..i];
                    match t.summarize(cur, cov) {
                        Ok(s) if s.moved > 0 => {}
                        Ok(_) | Err(Error::NotSummarizable(_) | Error::UnknownCode(_)) => break,
                        Err(e) => return Err(e),
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn summarize_all(&mut self, cov: f64) -> Result<SummarizeStats> {
        match &mut self.kind {
            Kind::Htt(t) => t.summarize_table(cov),
            Kind::Alph(t) => t.summarize_table(cov),
        }
    }

    pub fn entry_count(&self) -> usize {
        let n = match &self.kind {
            Kind::Htt(t) => t.entry_count(),
            Kind::Alph(t) => t.entry_count(),
        };
        n + usize::from(self.absent != 0)
    }

    pub fn bytes(&self) -> usize {
        let n = match &self.kind {
            Kind::Htt(t) => t.bytes(),
            Kind::Alph(t) => t.bytes(),
        };
        n + if self.absent != 0 { 8 } else { 0 }
    }

    pub fn dropped_neighbors(&self) -> u64 {
        match &self.kind {
            Kind::Htt(t) => t.dropped_neighbors(),
            Kind::Alph(t) => t.dropped_neighbors(),
        }
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::BitCode;

    fn leaf(digits: u64) -> (Code, Scv) {
        let code = BitCode::with_leading_one(digits, 4).unwrap();
        (Code::Bits(code), Scv::from_fields(1, vec![1, 1, 1, 1]))
    }

    #[test]
    fn lru_keeps_recent_entries() {
        let layout = Layout::new(1, 0, 5).unwrap();
        let mut t = AttrTable::htt(layout).bounded(2);
        for d in [0b0000, 0b0101, 0b1010] {
            let (c, s) = leaf(d);
            t.insert(&c, 0, &s, SummarizeTrigger::Settle, 1.0).unwrap();
        }
        assert_eq!(t.evicted(), 1);
        assert_eq!(t.lookup(&leaf(0b0000).0), 0);
        assert_eq!(t.lookup(&leaf(0b1010).0), 1);
    }

    #[test]
    fn lru_on_trie() {
        let mut t = AttrTable::alph(8).bounded(1);
        let s = Scv::from_fields(crate::sumtree::ALPH_FIELD_WIDTH, vec![0, 0, 0]);
        t.insert(&Code::Alph("ab$".into()), 0, &s, SummarizeTrigger::Settle, 1.0).unwrap();
        t.insert(&Code::Alph("cd$".into()), 1, &s, SummarizeTrigger::Settle, 1.0).unwrap();
        assert_eq!(t.evicted(), 1);
        assert_eq!(t.lookup(&Code::Alph("ab$".into())), 0);
        assert_eq!(t.lookup(&Code::Alph("cd$".into())), 0b10);
    }

    #[test]
    fn wildcard_is_charged_once() {
        let mut t = AttrTable::alph(8);
        assert_eq!(t.bytes(), 0);
        assert_eq!(t.insert_absent(3), InsertOutcome::Inserted);
        assert_eq!(t.insert_absent(3), InsertOutcome::AlreadyKnown);
        t.insert_absent(4);
        assert_eq!(t.bytes(), 8);
        assert_eq!(t.absent_mask(), 0b11000);
    }
}
