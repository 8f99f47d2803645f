use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{synth_corpus_with, SynthOptions};
use crate::error::Result;
use crate::protocol::trace::Tracer;
use crate::protocol::{NodeId, NodeState, StreamIdx};
use crate::sumtree::{embed::sq_dist, EmbeddingProvider, Policy, SumTree, TrigramEmbedding};

use super::config::{sub_seed, ReestablishTrigger};
use super::sim::{build_codec, Network};
use super::topology::{DegreeLaw, MAX_DEGREE};

/// Outcome of one growth step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrowthReport {
    pub new_nodes: usize,
    pub new_streams: usize,
    pub new_keywords: usize,
    pub new_aliases: usize,
    pub adv_messages: u64,
}

/// Unique keywords over code capacity, worst attribute.
pub fn density_ratio(trees: &[Arc<SumTree>]) -> f64 {
    trees.iter().map(|t| tree_density(t)).fold(0.0, f64::max)
}

fn tree_density(t: &SumTree) -> f64 {
    let cfg = t.config();
    match cfg.policy {
        Policy::Hash => t.keyword_count() as f64 / cfg.hash_space() as f64,
        Policy::Meaning => {
            // leaf slots under the parents of leaves
            let parents: std::collections::BTreeSet<usize> = t.nodes().iter().filter(|n| n.is_leaf()).filter_map(|n| n.parent).collect();
            let slots = parents.len() as f64 * (1u64 << cfg.c) as f64;
            if slots == 0.0 {
                0.0
            } else {
                t.keyword_count() as f64 / slots
            }
        }
        Policy::Alph => 0.0,
    }
}

/// Mean distance between sibling members and their cluster centroid,
/// worst attribute (Meaning trees only).
pub fn intra_cluster_distance(trees: &[Arc<SumTree>]) -> f64 {
    trees
        .iter()
        .filter(|t| t.policy() == Policy::Meaning)
        .map(|t| {
            let nodes = t.nodes();
            let (mut sum, mut cnt) = (0.0, 0usize);
            for n in nodes.iter() {
                let (Some(p), Some(c)) = (n.parent, n.centroid.as_deref()) else { continue };
                if let Some(pc) = nodes[p].centroid.as_deref() {
                    sum += sq_dist(c, pc).sqrt();
                    cnt += 1;
                }
            }
            if cnt == 0 {
                0.0
            } else {
                sum / cnt as f64
            }
        })
        .fold(0.0, f64::max)
}

impl Network {
    /// Gives a joining node next hops for every known stream: each neighbor
    /// reports its hop distance to the stream's host and the node keeps the
    /// closest neighbors.
    fn join_sync(&mut self, x: NodeId) -> Result<()> {
        let nbrs = self.nodes[x as usize].neighbors().to_vec();
        let dists: Vec<Vec<u32>> = nbrs.iter().map(|&nb| self.topo.bfs(nb)).collect();
        for s in 0..self.corpus.streams.len() {
            let host = self.hosts[s];
            if host == x {
                continue;
            }
            let best = dists.iter().map(|d| d[host as usize]).min().unwrap_or(u32::MAX);
            if best == u32::MAX || (self.cfg.b_ad != u32::MAX && best + 1 > self.cfg.b_ad) {
                continue;
            }
            let senders: Vec<NodeId> = nbrs.iter().zip(&dists).filter(|(_, d)| d[host as usize] == best).map(|(&n, _)| n).collect();
            let an = &self.corpus.streams[s];
            let (msg, _) = NodeState::new(host, Vec::new(), Self::protocol_config(&self.cfg), Vec::new(), 0)?.advertise_stream(
                s as StreamIdx,
                an,
                self.codec.as_ref(),
                u64::MAX - s as u64,
                0,
            )?;
            self.nodes[x as usize].handle_advertise_round(&msg, &senders)?;
            self.nodes[x as usize].clear_seen();
        }
        Ok(())
    }

    /// Adds `rate * n` nodes at the network edge and `rate * streams` new
    /// streams hosted on them, coding unseen keywords and advertising.
    pub fn grow(&mut self, rate: f64, step: usize, tracer: &mut Tracer) -> Result<GrowthReport> {
        let mut rep = GrowthReport::default();
        if rate <= 0.0 {
            return Ok(rep);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, 1000 + step as u64));
        let law = match &self.cfg.degree_weights {
            Some(w) => DegreeLaw::weighted(w)?,
            None => DegreeLaw::uniform(),
        };
        let base_nodes = self.nodes.len();
        let add = (base_nodes as f64 * rate).round() as usize;
        let pcfg = Self::protocol_config(&self.cfg);
        let n_attrs = self.corpus.attrs.len();
        let mut new_nodes = Vec::new();
        for _ in 0..add {
            let x = self.nodes.len() as NodeId;
            self.topo.adjacency.push(Vec::new());
            self.topology_changed();
            let k = law.sample(&mut rng);
            // attach preferring low-degree nodes
            let mut picked: Vec<NodeId> = Vec::new();
            for _ in 0..k {
                let cands: Vec<(NodeId, f64)> = (0..x)
                    .filter(|v| !picked.contains(v) && self.topo.degree(*v) < MAX_DEGREE)
                    .map(|v| (v, (MAX_DEGREE - self.topo.degree(v)) as f64))
                    .collect();
                if cands.is_empty() {
                    break;
                }
                let total: f64 = cands.iter().map(|c| c.1).sum();
                let mut r = rng.random::<f64>() * total;
                let mut pick = cands[cands.len() - 1].0;
                for &(v, w) in &cands {
                    r -= w;
                    if r <= 0.0 {
                        pick = v;
                        break;
                    }
                }
                picked.push(pick);
            }
            let tables = match &self.codec {
                Some(codec) => NodeState::tables_for(self.cfg.mode, codec, MAX_DEGREE)?,
                None => Vec::new(),
            };
            self.nodes.push(NodeState::new(x, Vec::new(), pcfg, tables, n_attrs)?);
            for &v in &picked {
                self.topo.add_edge(x, v);
                self.nodes[x as usize].add_neighbor(v)?;
                self.nodes[v as usize].add_neighbor(x)?;
            }
            self.join_sync(x)?;
            new_nodes.push(x);
        }
        rep.new_nodes = add;
        // new streams, drawn from a vocabulary grown by vocab_growth per step
        let count = (self.corpus.streams.len() as f64 * rate).round() as usize;
        if count > 0 {
            let base = self.cfg.synth_options();
            let opts = SynthOptions {
                n_streams: count,
                n_attrs,
                vocab_size: ((base.vocab_size as f64) * self.cfg.vocab_growth.powi(step as i32 + 1)).round().max(1.0) as usize,
                seed: sub_seed(self.cfg.seed, 2000 + step as u64),
                ..base
            };
            let extra = synth_corpus_with(&opts)?;
            let edge = if new_nodes.is_empty() { self.topo.edge_nodes() } else { new_nodes.clone() };
            let kw_before: usize = (0..n_attrs).map(|a| self.corpus.keywords(a).len()).sum();
            let aliases_before: usize = self.trees().iter().map(|t| t.aliases().len()).sum();
            for (i, mut an) in extra.streams.into_iter().enumerate() {
                an.stream_id = format!("g{step}s{i:06}");
                an.values.resize(n_attrs, None);
                if let Some(codec) = &mut self.codec {
                    for (a, v) in an.values.iter().enumerate() {
                        let Some(kw) = v else { continue };
                        let tree = &mut codec.trees[a];
                        if !tree.contains(kw) {
                            let vec = TrigramEmbedding.embed(kw);
                            Arc::make_mut(tree).assign_code_new_keyword(kw, vec.as_deref())?;
                            rep.new_keywords += 1;
                        }
                    }
                }
                self.corpus.streams.push(an);
                self.hosts.push(edge[rng.random_range(0..edge.len())]);
                let s = self.corpus.streams.len() - 1;
                self.push_coded(s)?;
                rep.adv_messages += self.advertise(s as StreamIdx, tracer)?;
            }
            let aliases_after: usize = self.trees().iter().map(|t| t.aliases().len()).sum();
            rep.new_aliases = aliases_after - aliases_before;
            if self.codec.is_none() {
                rep.new_keywords = (0..n_attrs).map(|a| self.corpus.keywords(a).len()).sum::<usize>() - kw_before;
            }
            rep.new_streams = count;
        }
        self.new_keywords += rep.new_keywords;
        Ok(rep)
    }

    /// Whether the configured trigger fires after growth step `step`
    /// (counted from 1).
    pub fn check_reestablish(&self, step: usize) -> bool {
        let Some(policy) = self.cfg.reestablish else { return false };
        match policy.trigger {
            ReestablishTrigger::DescriptorCount(t) => self.new_keywords > t,
            ReestablishTrigger::DensityRatio(t) => density_ratio(self.trees()) > t,
            ReestablishTrigger::IntraClusterDistance(t) => intra_cluster_distance(self.trees()) > t,
            ReestablishTrigger::Periodic(p) => p > 0 && p != usize::MAX && step % p == 0,
        }
    }

    /// Rebuilds trees (Hash: deeper), clears every table and re-advertises
    /// every stream. Returns messages per stream.
    pub fn reestablish(&mut self, tracer: &mut Tracer) -> Result<f64> {
        if self.corpus.streams.is_empty() {
            return Ok(0.0);
        }
        if self.cfg.mode.policy() == Some(Policy::Hash) {
            let new_d = self.cfg.reestablish.and_then(|r| r.new_d);
            let c = self.cfg.c;
            self.hash_shapes = self
                .hash_shapes
                .iter()
                .enumerate()
                .map(|(a, &(d, _))| match new_d {
                    Some(x) => (x.max(d + 1), 0),
                    None => {
                        // smallest depth bringing the density ratio to 1/4 or less
                        let kw = self.corpus.keywords(a).len() as f64;
                        let mut nd = d + 1;
                        while nd * c < 62 && kw / ((1u64 << (nd * c)) as f64) > 0.25 {
                            nd += 1;
                        }
                        (nd, 0)
                    }
                })
                .collect();
        }
        self.codec = build_codec(&self.cfg, &self.corpus, &self.hash_shapes)?;
        self.recode()?;
        self.reset_tables()?;
        self.new_keywords = 0;
        let sent = self.advertise_all(tracer)?;
        self.settle()?;
        Ok(sent as f64 / self.corpus.streams.len() as f64)
    }
}
