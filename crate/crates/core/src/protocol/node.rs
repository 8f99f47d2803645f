use std::collections::{BTreeMap, HashSet};

use crate::code::Code;
use crate::error::{Error, Result};
use crate::rtable::{InsertOutcome, Layout, NB_EMPTY};
use crate::sumtree::{Policy, SumTree};

use super::table::AttrTable;
use super::{alpha_match_coded, alpha_match_local, meets_alpha, AdvMsg, Annotation, CodedDescriptor, Codec, Mode, NodeId, ProtocolConfig, Query, StreamIdx};

/// Result of processing one query copy at a node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryOutcome {
    /// The node had already processed this query id.
    pub duplicate: bool,
    /// Hosted streams matching on raw keywords.
    pub responses: Vec<StreamIdx>,
    /// Hosted streams that match only when comparing codes.
    pub coded_only: usize,
    /// Matching neighbors, as a bit set over local neighbor ids.
    pub mns: u32,
    pub forwards: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertCounts {
    pub inserted: u64,
    pub known: u64,
    pub dropped: u64,
}

/// Routing state of one database node.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    neighbors: Vec<NodeId>,
    cfg: ProtocolConfig,
    n_attrs: usize,
    tables: Vec<AttrTable>,
    /// nCAC: next hops per stream (indexed by stream).
    stream_nb: Vec<u32>,
    ncac_entries: usize,
    store: Vec<StreamIdx>,
    seen_adv: HashSet<u64>,
    seen_query: HashSet<u64>,
    counts: InsertCounts,
}

/// Hop budget after one more hop; `u32::MAX` stands for unbounded.
pub fn next_hops(h: u32) -> u32 {
    if h == u32::MAX {
        h
    } else {
        h.saturating_sub(1)
    }
}

/// Widest code any of the tree's leaves can take.
fn max_code_len(tree: &SumTree) -> u32 {
    let cfg = tree.config();
    match cfg.policy {
        Policy::Hash => cfg.c * cfg.d + 1,
        _ => tree.nodes().iter().filter_map(|n| n.tau.as_bits()).map(|b| b.len()).max().unwrap_or(1),
    }
}

/// Master-array prefix length usable with the tree: no longer than the
/// shallowest leaf's parent.
pub fn effective_b(tree: &SumTree) -> u32 {
    let cfg = tree.config();
    match cfg.policy {
        Policy::Hash => cfg.b,
        Policy::Meaning => cfg.b.min(cfg.c * tree.min_leaf_depth().unwrap_or(1).saturating_sub(1)),
        Policy::Alph => 0,
    }
}

impl NodeState {
    pub fn new(id: NodeId, neighbors: Vec<NodeId>, cfg: ProtocolConfig, tables: Vec<AttrTable>, n_attrs: usize) -> Result<Self> {
        if neighbors.len() >= NB_EMPTY as usize {
            return Err(Error::NeighborId(neighbors.len() as u8));
        }
        if cfg.mode != Mode::NCac && tables.len() != n_attrs {
            return Err(Error::Config(format!("{} tables for {n_attrs} attributes", tables.len())));
        }
        Ok(NodeState {
            id,
            neighbors,
            cfg,
            n_attrs,
            tables,
            stream_nb: Vec::new(),
            ncac_entries: 0,
            store: Vec::new(),
            seen_adv: HashSet::new(),
            seen_query: HashSet::new(),
            counts: InsertCounts::default(),
        })
    }

    /// Changes the coverage threshold used by later summarization passes.
    pub fn set_cov(&mut self, cov: f64) {
        self.cfg.cov = cov;
    }

    /// Empty per-attribute tables for `mode`, sized for `min_nb` neighbors.
    pub fn tables_for(mode: Mode, codec: &Codec, min_nb: usize) -> Result<Vec<AttrTable>> {
        let nb = min_nb.max(8);
        codec
            .trees
            .iter()
            .map(|tree| match mode {
                Mode::NCac => Err(Error::Config("nCAC keeps no per-attribute tables".into())),
                Mode::Sp(Policy::Alph) => Ok(AttrTable::alph(nb)),
                _ => {
                    let c = tree.config().c;
                    let layout = Layout::with_nb(c, effective_b(tree), max_code_len(tree), nb as u32)?;
                    Ok(match mode {
                        Mode::GsdBounded { cap } => AttrTable::htt(layout).bounded(cap),
                        _ => AttrTable::htt(layout),
                    })
                }
            })
            .collect()
    }

    pub fn neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    pub fn local_id(&self, node: NodeId) -> Option<u8> {
        self.neighbors.iter().position(|&n| n == node).map(|i| i as u8)
    }

    pub fn add_neighbor(&mut self, node: NodeId) -> Result<u8> {
        if let Some(l) = self.local_id(node) {
            return Ok(l);
        }
        if self.neighbors.len() + 1 >= NB_EMPTY as usize {
            return Err(Error::NeighborId(self.neighbors.len() as u8));
        }
        self.neighbors.push(node);
        Ok((self.neighbors.len() - 1) as u8)
    }

    pub fn mode(&self) -> Mode {
        self.cfg.mode
    }

    pub fn tables(&self) -> &[AttrTable] {
        &self.tables
    }

    pub fn store(&self) -> &[StreamIdx] {
        &self.store
    }

    pub fn counts(&self) -> InsertCounts {
        self.counts
    }

    /// Next hops known for `stream` (nCAC only).
    pub fn stream_next_hops(&self, stream: StreamIdx) -> u32 {
        self.stream_nb.get(stream as usize).copied().unwrap_or(0)
    }

    /// Routing entries held (nCAC counts one per (descriptor, stream) pair).
    pub fn entry_count(&self) -> usize {
        match self.cfg.mode {
            Mode::NCac => self.ncac_entries,
            _ => self.tables.iter().map(AttrTable::entry_count).sum(),
        }
    }

    /// Routing-table bytes; nCAC entries cost 8 bytes plus a 4-byte stream id.
    pub fn bytes(&self) -> usize {
        match self.cfg.mode {
            Mode::NCac => self.ncac_entries * 12,
            _ => self.tables.iter().map(AttrTable::bytes).sum(),
        }
    }

    pub fn dropped_neighbors(&self) -> u64 {
        self.tables.iter().map(AttrTable::dropped_neighbors).sum()
    }

    pub fn clear_seen(&mut self) {
        self.seen_adv.clear();
        self.seen_query.clear();
    }

    /// Drops all routing state, keeping hosted streams and neighbors.
    pub fn reset_tables(&mut self, tables: Vec<AttrTable>) {
        self.tables = tables;
        self.stream_nb.clear();
        self.ncac_entries = 0;
        self.clear_seen();
    }

    /// Hosts a stream and builds the advertisement its neighbors receive.
    /// Returns the message and its recipients (none when `b_ad` is 0).
    pub fn advertise_stream(&mut self, stream: StreamIdx, an: &Annotation, codec: Option<&Codec>, adv_id: u64, b_ad: u32) -> Result<(AdvMsg, Vec<NodeId>)> {
        let mut descriptors = Vec::new();
        let mut absent = Vec::new();
        for (i, v) in an.values.iter().enumerate() {
            match (v, codec) {
                (Some(k), Some(codec)) => descriptors.push(codec.encode(i, k)?),
                (Some(k), None) => descriptors.push(CodedDescriptor {
                    attr: i,
                    code: Code::Alph(k.clone()),
                    scv: crate::code::Scv::new(1),
                }),
                (None, _) => absent.push(i),
            }
        }
        if !self.store.contains(&stream) {
            self.store.push(stream);
        }
        self.seen_adv.insert(adv_id);
        let msg = AdvMsg { adv_id, stream, descriptors, absent, hops_remaining: next_hops(b_ad) };
        let targets = if b_ad == 0 { Vec::new() } else { self.neighbors.clone() };
        Ok((msg, targets))
    }

    fn absorb_ncac(&mut self, stream: StreamIdx, l: u8) -> InsertOutcome {
        let s = stream as usize;
        if self.stream_nb.len() <= s {
            self.stream_nb.resize(s + 1, 0);
        }
        let bit = 1u32 << l;
        if self.stream_nb[s] & bit != 0 {
            return InsertOutcome::AlreadyKnown;
        }
        if self.stream_nb[s] == 0 {
            self.ncac_entries += self.n_attrs;
        }
        self.stream_nb[s] |= bit;
        InsertOutcome::Inserted
    }

    fn tally(&mut self, o: InsertOutcome) {
        match o {
            InsertOutcome::Inserted => self.counts.inserted += 1,
            InsertOutcome::AlreadyKnown => self.counts.known += 1,
            InsertOutcome::Dropped => self.counts.dropped += 1,
        }
    }

    /// Stores every item of `msg` against local neighbor `l`. Returns, per
    /// descriptor then per absent attribute, the outcome and the forwarding
    /// set known before the insert.
    fn absorb(&mut self, msg: &AdvMsg, l: u8) -> Result<Vec<(InsertOutcome, u32)>> {
        if self.cfg.mode == Mode::NCac {
            let before = self.stream_next_hops(msg.stream);
            let o = self.absorb_ncac(msg.stream, l);
            self.tally(o);
            return Ok(vec![(o, before)]);
        }
        let mut out = Vec::with_capacity(msg.descriptors.len() + msg.absent.len());
        for d in &msg.descriptors {
            let t = self.tables.get_mut(d.attr).ok_or_else(|| Error::Config(format!("no table for attribute {}", d.attr)))?;
            let r = t.insert(&d.code, l, &d.scv, self.cfg.trigger, self.cfg.cov)?;
            self.tally(r.outcome);
            out.push((r.outcome, r.fnset));
        }
        for &a in &msg.absent {
            let t = self.tables.get_mut(a).ok_or_else(|| Error::Config(format!("no table for attribute {a}")))?;
            let before = t.absent_mask();
            let o = t.insert_absent(l);
            self.tally(o);
            out.push((o, before));
        }
        Ok(out)
    }

    fn local(&self, from: NodeId) -> Result<u8> {
        self.local_id(from).ok_or_else(|| Error::Invariant(format!("node {} has no neighbor {from}", self.id)))
    }

    /// First-round flooding: all copies of one advertisement arriving in
    /// the same round are handled together. Later copies are ignored.
    /// Returns the neighbors to forward to (with one hop less).
    pub fn handle_advertise_round(&mut self, msg: &AdvMsg, senders: &[NodeId]) -> Result<Vec<NodeId>> {
        if !self.seen_adv.insert(msg.adv_id) {
            return Ok(Vec::new());
        }
        let mut mask = 0u32;
        for &s in senders {
            let l = self.local(s)?;
            mask |= 1 << l;
            self.absorb(msg, l)?;
        }
        if msg.hops_remaining == 0 {
            return Ok(Vec::new());
        }
        Ok(self.neighbors.iter().enumerate().filter(|(i, _)| mask & (1 << i) == 0).map(|(_, &n)| n).collect())
    }

    /// Per-message handling: items already routed through `from` stop here;
    /// the rest go to every neighbor other than `from` that is not already a
    /// forwarding neighbor for the item.
    pub fn handle_advertise(&mut self, msg: &AdvMsg, from: NodeId) -> Result<Vec<(NodeId, AdvMsg)>> {
        let l = self.local(from)?;
        let outcomes = self.absorb(msg, l)?;
        if msg.hops_remaining == 0 {
            return Ok(Vec::new());
        }
        let ncac = self.cfg.mode == Mode::NCac;
        let mut groups: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
        for (j, &n) in self.neighbors.iter().enumerate() {
            if j == l as usize {
                continue;
            }
            let mut items = 0u64;
            for (k, &(o, fnset)) in outcomes.iter().enumerate() {
                if o == InsertOutcome::Inserted && fnset & (1 << j) == 0 {
                    items |= 1 << k;
                }
            }
            if items != 0 {
                groups.entry(items).or_default().push(n);
            }
        }
        let nd = msg.descriptors.len();
        let mut out = Vec::new();
        for (items, targets) in groups {
            let fwd = if ncac {
                AdvMsg { hops_remaining: next_hops(msg.hops_remaining), ..msg.clone() }
            } else {
                AdvMsg {
                    adv_id: msg.adv_id,
                    stream: msg.stream,
                    descriptors: msg.descriptors.iter().enumerate().filter(|(k, _)| items & (1 << k) != 0).map(|(_, d)| d.clone()).collect(),
                    absent: msg.absent.iter().enumerate().filter(|(k, _)| items & (1 << (nd + k)) != 0).map(|(_, &a)| a).collect(),
                    hops_remaining: next_hops(msg.hops_remaining),
                }
            };
            for t in targets {
                out.push((t, fwd.clone()));
            }
        }
        Ok(out)
    }

    /// Neighbors appearing in the forwarding sets of at least alpha * n of
    /// the query's specified attributes.
    pub fn alpha_matching_neighbors(&mut self, q: &Query) -> u32 {
        let n = q.specified();
        let mut counts = [0usize; 32];
        for (i, term) in q.terms.iter().enumerate() {
            let Some(term) = term else { continue };
            let Some(t) = self.tables.get_mut(i) else { continue };
            let mut mask = t.absent_mask();
            if let Some(code) = &term.code {
                mask |= t.lookup(code);
            }
            for (j, c) in counts.iter_mut().enumerate() {
                if mask & (1 << j) != 0 {
                    *c += 1;
                }
            }
        }
        let mut mns = 0;
        for (j, &c) in counts.iter().enumerate().take(self.neighbors.len()) {
            if c > 0 && meets_alpha(c, n, q.alpha) {
                mns |= 1 << j;
            }
        }
        mns
    }

    /// nCAC neighbor selection: next hops of every known stream that matches.
    pub fn ncac_matching_neighbors(&self, q: &Query, annotations: &[Annotation], candidates: Option<&[StreamIdx]>) -> u32 {
        let mut mns = 0;
        match candidates {
            Some(c) => c.iter().for_each(|&s| mns |= self.stream_next_hops(s)),
            None => {
                for (s, &m) in self.stream_nb.iter().enumerate() {
                    if m != 0 && annotations.get(s).is_some_and(|an| alpha_match_local(q, an)) {
                        mns |= m;
                    }
                }
            }
        }
        mns
    }

    /// Processes one copy of `q` arriving from `from` (`None` at the source).
    /// `coded` holds each stream's coded descriptors for collision counting;
    /// `candidates`, if given, must be exactly the globally matching streams
    /// and only speeds up nCAC selection.
    pub fn handle_query(
        &mut self,
        q: &Query,
        from: Option<NodeId>,
        annotations: &[Annotation],
        coded: Option<&[Vec<Option<CodedDescriptor>>]>,
        candidates: Option<&[StreamIdx]>,
    ) -> QueryOutcome {
        if !self.seen_query.insert(q.id) {
            return QueryOutcome { duplicate: true, ..QueryOutcome::default() };
        }
        let mut out = QueryOutcome::default();
        for &s in &self.store {
            let Some(an) = annotations.get(s as usize) else { continue };
            if alpha_match_local(q, an) {
                out.responses.push(s);
            } else if coded.and_then(|c| c.get(s as usize)).is_some_and(|cd| alpha_match_coded(q, cd)) {
                out.coded_only += 1;
            }
        }
        out.mns = match self.cfg.mode {
            Mode::NCac => self.ncac_matching_neighbors(q, annotations, candidates),
            _ => self.alpha_matching_neighbors(q),
        };
        if q.hop_bound > 0 {
            let skip = from.and_then(|f| self.local_id(f));
            out.forwards = self
                .neighbors
                .iter()
                .enumerate()
                .filter(|&(j, _)| out.mns & (1 << j) != 0 && Some(j as u8) != skip)
                .map(|(_, &n)| n)
                .collect();
        }
        out
    }

    /// Runs the whole-table summarization pass (no-op for unsummarized modes).
    pub fn settle(&mut self) -> Result<usize> {
        if !self.cfg.mode.summarizes() {
            return Ok(0);
        }
        let mut removed = 0;
        for t in &mut self.tables {
            removed += t.summarize_all(self.cfg.cov)?.removed;
        }
        Ok(removed)
    }
}
