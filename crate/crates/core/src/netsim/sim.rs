use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::code::Code;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::protocol::trace::{MsgKind, TraceLine, Tracer};
use crate::protocol::{
    alpha_match_local, next_hops, AdvMsg, AdvPolicy, Annotation, Codec, CodedDescriptor, Mode, NodeId, NodeState, ProtocolConfig, Query,
    StreamIdx,
};
use crate::sumtree::{build, Policy, SumTree, TreeConfig, TrigramEmbedding};

use super::config::{sub_seed, SimConfig};
use super::topology::{Topology, MAX_DEGREE};

/// Hash depth and space size (`0` = full level) for a tree.
pub type HashShape = (u32, u64);

/// Hash space putting `keywords` distinct values at `density` keywords per
/// leaf slot, with the shallowest depth that holds it.
pub fn shape_for_density(keywords: usize, c: u32, density: f64) -> HashShape {
    let slots = (keywords.max(1) as f64 / density).ceil().max(2.0) as u64;
    let t = TreeConfig::hash_slots(c, slots, 0, 0);
    (t.d, t.slots.min(t.hash_space()))
}

/// Largest multiple of `c` not above `b` that leaves at least one level
/// below the master prefix.
pub fn clamp_b(b: u32, c: u32, d: u32) -> u32 {
    let b = b.min(c * d.saturating_sub(1));
    b - b % c
}

/// Per-attribute trees for `mode`; `None` for nCAC, which routes on raw
/// keywords. `shapes` fixes the per-attribute hash spaces.
pub fn build_codec(cfg: &SimConfig, corpus: &Corpus, shapes: &[HashShape]) -> Result<Option<Codec>> {
    let Some(policy) = cfg.mode.policy() else { return Ok(None) };
    let trees = (0..corpus.attrs.len())
        .map(|a| {
            let kws = corpus.keywords(a);
            let seed = sub_seed(cfg.seed, 100 + a as u64);
            let tc = match policy {
                Policy::Hash => {
                    let (d, slots) = shapes[a];
                    TreeConfig { slots, ..TreeConfig::hash(cfg.c, d, clamp_b(cfg.b, cfg.c, d), seed) }
                }
                Policy::Meaning => TreeConfig::meaning(cfg.c, cfg.b, seed),
                Policy::Alph => TreeConfig::alph(),
            };
            build(&kws, &tc, &TrigramEmbedding).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(Codec { trees, scv_mode: cfg.scv_mode }))
}

/// Initial per-attribute hash spaces.
pub fn initial_shapes(cfg: &SimConfig, corpus: &Corpus) -> Vec<HashShape> {
    (0..corpus.attrs.len())
        .map(|a| match cfg.density {
            Some(x) => shape_for_density(corpus.keywords(a).len(), cfg.c, x),
            None => (cfg.d, 0),
        })
        .collect()
}

/// What happened to one query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryRecord {
    pub forwards: u64,
    pub duplicates: u64,
    /// Forwards that head toward no matching stream and deliver no response.
    pub misled: u64,
    pub response_msgs: u64,
    /// (stream, depth of its host in the query's forward tree)
    pub results: Vec<(StreamIdx, u32)>,
    pub coded_only: u64,
    pub expected: Vec<StreamIdx>,
}

impl QueryRecord {
    pub fn latency(&self) -> Option<u32> {
        self.results.iter().map(|r| r.1).max()
    }

    pub fn found(&self) -> Vec<StreamIdx> {
        let mut v: Vec<StreamIdx> = self.results.iter().map(|r| r.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// A simulated network with its routing state.
#[derive(Debug, Clone)]
pub struct Network {
    pub cfg: SimConfig,
    pub topo: Topology,
    pub nodes: Vec<NodeState>,
    pub corpus: Corpus,
    pub hosts: Vec<NodeId>,
    pub codec: Option<Codec>,
    pub hash_shapes: Vec<HashShape>,
    coded: Vec<Vec<Option<CodedDescriptor>>>,
    pub adv_messages: u64,
    next_adv: u64,
    pub tick: u64,
    /// Keywords added since the trees were last built.
    pub new_keywords: usize,
    /// Hop distances from each host node, filled on demand.
    host_dist: Vec<Option<Vec<u16>>>,
}

pub fn brute_force_answer(q: &Query, streams: &[Annotation]) -> Vec<StreamIdx> {
    streams.iter().enumerate().filter(|(_, an)| alpha_match_local(q, an)).map(|(i, _)| i as StreamIdx).collect()
}

impl Network {
    pub fn protocol_config(cfg: &SimConfig) -> ProtocolConfig {
        ProtocolConfig { mode: cfg.mode, cov: cfg.cov, trigger: cfg.trigger, adv_policy: cfg.adv_policy }
    }

    fn fresh_tables(&self) -> Result<Vec<crate::protocol::AttrTable>> {
        match &self.codec {
            Some(codec) => NodeState::tables_for(self.cfg.mode, codec, MAX_DEGREE),
            None => Ok(Vec::new()),
        }
    }

    /// Builds trees and empty routing state. `hosts[i]` hosts stream `i`.
    pub fn new(cfg: SimConfig, topo: Topology, corpus: Corpus, hosts: Vec<NodeId>) -> Result<Network> {
        if hosts.len() != corpus.streams.len() {
            return Err(Error::Config("one host per stream required".into()));
        }
        if hosts.iter().any(|&h| h as usize >= topo.len()) {
            return Err(Error::Config("host outside the topology".into()));
        }
        let hash_shapes = initial_shapes(&cfg, &corpus);
        let codec = build_codec(&cfg, &corpus, &hash_shapes)?;
        let mut net = Network {
            cfg,
            topo,
            nodes: Vec::new(),
            corpus,
            hosts,
            codec,
            hash_shapes,
            coded: Vec::new(),
            adv_messages: 0,
            next_adv: 0,
            tick: 0,
            new_keywords: 0,
            host_dist: Vec::new(),
        };
        let pcfg = Self::protocol_config(&net.cfg);
        let n_attrs = net.corpus.attrs.len();
        for (i, adj) in net.topo.adjacency.iter().enumerate() {
            let tables = net.fresh_tables()?;
            net.nodes.push(NodeState::new(i as NodeId, adj.clone(), pcfg, tables, n_attrs)?);
        }
        net.recode()?;
        Ok(net)
    }

    /// Recomputes every stream's coded descriptors.
    pub(crate) fn recode(&mut self) -> Result<()> {
        self.coded = match &self.codec {
            Some(codec) => self.corpus.streams.iter().map(|an| codec.encode_annotation(an)).collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(())
    }

    pub(crate) fn push_coded(&mut self, s: usize) -> Result<()> {
        if let Some(codec) = &self.codec {
            let cd = codec.encode_annotation(&self.corpus.streams[s])?;
            self.coded.push(cd);
        }
        Ok(())
    }

    pub(crate) fn reset_tables(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            let t = self.fresh_tables()?;
            self.nodes[i].reset_tables(t);
        }
        Ok(())
    }

    pub fn trees(&self) -> &[Arc<SumTree>] {
        self.codec.as_ref().map_or(&[], |c| &c.trees)
    }

    /// Advertises one stream from its host. Returns messages sent.
    pub fn advertise(&mut self, s: StreamIdx, tracer: &mut Tracer) -> Result<u64> {
        let host = self.hosts[s as usize];
        let adv_id = self.next_adv;
        self.next_adv += 1;
        let an = &self.corpus.streams[s as usize];
        let (msg, targets) = self.nodes[host as usize].advertise_stream(s, an, self.codec.as_ref(), adv_id, self.cfg.b_ad)?;
        let sent = match self.cfg.adv_policy {
            AdvPolicy::FirstRound => self.flood_first_round(msg, host, targets, tracer)?,
            AdvPolicy::Suppress => self.flood_suppress(msg, host, targets, tracer)?,
        };
        self.adv_messages += sent;
        Ok(sent)
    }

    fn flood_first_round(&mut self, mut msg: AdvMsg, host: NodeId, targets: Vec<NodeId>, tracer: &mut Tracer) -> Result<u64> {
        let mut frontier: Vec<(NodeId, NodeId)> = targets.into_iter().map(|t| (t, host)).collect();
        let mut touched = vec![host];
        let mut sent = 0u64;
        while !frontier.is_empty() {
            self.tick += 1;
            sent += frontier.len() as u64;
            frontier.sort_unstable();
            if tracer.enabled() {
                for &(dst, src) in &frontier {
                    tracer.emit(TraceLine { tick: self.tick, kind: MsgKind::Adv, src, dst, id: msg.stream as u64, hops_remaining: msg.hops_remaining })?;
                }
            }
            let mut next = Vec::new();
            let mut i = 0;
            let mut senders = Vec::new();
            while i < frontier.len() {
                let dst = frontier[i].0;
                senders.clear();
                while i < frontier.len() && frontier[i].0 == dst {
                    senders.push(frontier[i].1);
                    i += 1;
                }
                touched.push(dst);
                for f in self.nodes[dst as usize].handle_advertise_round(&msg, &senders)? {
                    next.push((f, dst));
                }
            }
            msg.hops_remaining = next_hops(msg.hops_remaining);
            frontier = next;
        }
        for t in touched {
            self.nodes[t as usize].clear_seen();
        }
        Ok(sent)
    }

    fn flood_suppress(&mut self, msg: AdvMsg, host: NodeId, targets: Vec<NodeId>, tracer: &mut Tracer) -> Result<u64> {
        let mut frontier: Vec<(NodeId, NodeId, AdvMsg)> = targets.into_iter().map(|t| (t, host, msg.clone())).collect();
        let mut sent = 0u64;
        while !frontier.is_empty() {
            self.tick += 1;
            sent += frontier.len() as u64;
            frontier.sort_by_key(|f| (f.0, f.1));
            let mut next = Vec::new();
            for (dst, src, m) in frontier {
                tracer.emit(TraceLine { tick: self.tick, kind: MsgKind::Adv, src, dst, id: m.stream as u64, hops_remaining: m.hops_remaining })?;
                for (to, fwd) in self.nodes[dst as usize].handle_advertise(&m, src)? {
                    next.push((to, dst, fwd));
                }
            }
            frontier = next;
        }
        Ok(sent)
    }

    pub fn advertise_all(&mut self, tracer: &mut Tracer) -> Result<u64> {
        let mut sent = 0;
        for s in 0..self.corpus.streams.len() {
            sent += self.advertise(s as StreamIdx, tracer)?;
        }
        Ok(sent)
    }

    /// Whole-table summarization on every node. Returns entries removed.
    pub fn settle(&mut self) -> Result<usize> {
        let mut removed = 0;
        for n in &mut self.nodes {
            removed += n.settle()?;
        }
        Ok(removed)
    }

    /// Attaches routing codes to a raw query.
    pub fn code_query(&self, q: &Query) -> Result<Query> {
        let mut q = q.clone();
        if let Some(codec) = &self.codec {
            for (i, t) in q.terms.iter_mut().enumerate() {
                if let Some(t) = t {
                    t.code = Some(match codec.encode(i, &t.raw) {
                        Ok(d) => d.code,
                        // a keyword no tree knows can only match absent values
                        Err(Error::UnknownKeyword(_)) => Code::Alph(String::new()),
                        Err(e) => return Err(e),
                    });
                }
            }
        }
        Ok(q)
    }

    /// Runs one query to completion.
    pub fn run_query(&mut self, raw: &Query, tracer: &mut Tracer) -> Result<QueryRecord> {
        let mut q = self.code_query(raw)?;
        let expected = brute_force_answer(&q, &self.corpus.streams);
        let mut rec = QueryRecord { expected, ..QueryRecord::default() };
        let ncac = self.cfg.mode == Mode::NCac;
        let coded = if self.coded.is_empty() { None } else { Some(self.coded.as_slice()) };
        let mut parent: HashMap<NodeId, (Option<NodeId>, u32)> = HashMap::new();
        let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
        let mut responders: Vec<NodeId> = Vec::new();
        let mut frontier: Vec<(NodeId, Option<NodeId>)> = vec![(q.src, None)];
        let mut depth = 0u32;
        let hop_bound = q.hop_bound;
        while !frontier.is_empty() {
            frontier.sort_unstable();
            q.hop_bound = if hop_bound == u32::MAX { hop_bound } else { hop_bound - depth };
            let mut next = Vec::new();
            for (dst, from) in frontier {
                let out = self.nodes[dst as usize].handle_query(&q, from, &self.corpus.streams, coded, ncac.then_some(rec.expected.as_slice()));
                if out.duplicate {
                    rec.duplicates += 1;
                    continue;
                }
                parent.insert(dst, (from, depth));
                rec.coded_only += out.coded_only as u64;
                if !out.responses.is_empty() {
                    responders.push(dst);
                    rec.results.extend(out.responses.iter().map(|&s| (s, depth)));
                }
                for f in out.forwards {
                    rec.forwards += 1;
                    edges.push((dst, f));
                    tracer.emit(TraceLine { tick: self.tick + depth as u64 + 1, kind: MsgKind::Qry, src: dst, dst: f, id: q.id, hops_remaining: next_hops(q.hop_bound) })?;
                    next.push((f, Some(dst)));
                }
            }
            frontier = next;
            depth += 1;
        }
        // responses retrace the breadcrumbs; every node they pass is fruitful
        let mut fruitful: HashSet<NodeId> = responders.iter().copied().collect();
        let mut max_tick = self.tick + depth as u64;
        for &r in &responders {
            let (_, d) = parent[&r];
            let mut cur = r;
            let mut hops = 0u32;
            while let Some((Some(up), _)) = parent.get(&cur).copied() {
                hops += 1;
                let tick = self.tick + d as u64 + hops as u64;
                max_tick = max_tick.max(tick);
                tracer.emit(TraceLine { tick, kind: MsgKind::Rsp, src: cur, dst: up, id: q.id, hops_remaining: d - hops })?;
                fruitful.insert(up);
                cur = up;
            }
            if cur != q.src || hops != d {
                return Err(Error::Invariant(format!("response from {r} took {hops} hops back, query took {d}")));
            }
            rec.response_msgs += hops as u64;
        }
        self.tick = max_tick;
        // forwards that opened a new branch which yielded nothing
        let barren: Vec<(NodeId, NodeId)> =
            edges.into_iter().filter(|&(u, v)| parent[&v].0 == Some(u) && !fruitful.contains(&v)).collect();
        rec.misled = self.count_unjustified(&barren, &rec.expected);
        for n in parent.keys() {
            self.nodes[*n as usize].clear_seen();
        }
        Ok(rec)
    }
}

impl Network {
    fn dist_from(&mut self, h: NodeId) -> &[u16] {
        if self.host_dist.len() != self.topo.len() {
            self.host_dist = vec![None; self.topo.len()];
        }
        let topo = &self.topo;
        self.host_dist[h as usize].get_or_insert_with(|| topo.bfs(h).into_iter().map(|d| d.min(u16::MAX as u32) as u16).collect())
    }

    /// Drops cached distances after the topology changes.
    pub(crate) fn topology_changed(&mut self) {
        self.host_dist.clear();
    }

    /// Forwards `u -> v` for which no matching stream's host is closer to
    /// `v` than to `u`.
    fn count_unjustified(&mut self, edges: &[(NodeId, NodeId)], matching: &[StreamIdx]) -> u64 {
        let mut hosts: Vec<NodeId> = matching.iter().map(|&s| self.hosts[s as usize]).collect();
        hosts.sort_unstable();
        hosts.dedup();
        for &h in &hosts {
            self.dist_from(h);
        }
        let dists: Vec<&[u16]> = hosts.iter().map(|&h| self.host_dist[h as usize].as_deref().unwrap()).collect();
        edges.iter().filter(|&&(u, v)| !dists.iter().any(|d| d[v as usize] < d[u as usize])).count() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_depths() {
        // 300 / (1/4) = 1200 slots; 4^5 = 1024 < 1200 <= 4^6
        assert_eq!(shape_for_density(300, 2, 0.25), (6, 1200));
        assert_eq!(shape_for_density(64, 1, 1.0), (6, 64));
        assert_eq!(shape_for_density(3, 2, 1.0 / 16.0), (3, 48));
        assert_eq!(clamp_b(4, 2, 2), 2);
        assert_eq!(clamp_b(3, 1, 9), 3);
    }
}
