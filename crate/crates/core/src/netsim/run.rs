use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{synth_corpus_with, Corpus};
use crate::error::{Error, Result};
use crate::protocol::trace::Tracer;
use crate::protocol::{AdvPolicy, Mode, NodeId, Query, QueryTerm, ScvMode, SummarizeTrigger};
use crate::sumtree::Policy;

use super::config::{sub_seed, SimConfig, INF};
use super::placement::{place_streams, Placement};
use super::sim::{Network, QueryRecord};
use super::topology::{gen_topology_with, DegreeLaw, Topology};

/// One row of experiment output. Column names are the field names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub nodes: usize,
    pub streams: usize,
    pub queries: usize,
    pub rt_entries_avg: f64,
    pub rt_entries_max: usize,
    pub rt_bytes_avg: f64,
    pub rt_bytes_max: usize,
    /// Query-forward messages per query, duplicates included.
    pub traffic_per_query: f64,
    pub duplicates_per_query: f64,
    pub response_msgs_per_query: f64,
    pub adv_traffic_per_stream: f64,
    /// Mean over answered queries of the deepest responder's hop depth.
    pub latency_avg: f64,
    /// Forwards that head toward no matching stream and deliver no response.
    pub misleading_pct: f64,
    pub collision_pct: f64,
    /// Hosted streams matching only on codes, summed over queries.
    pub coded_false_matches: u64,
    pub recall: f64,
    pub recall_mismatches: usize,
    /// nSum bytes over this run's bytes (NaN unless requested).
    pub compression_ratio: f64,
    pub reestablish_count: usize,
    /// Mean messages per stream over reestablishments (0 when none).
    pub reestablish_cost: f64,
    pub dropped_neighbors: u64,
    pub aliases: usize,
    pub new_keywords: usize,
}

pub const METRIC_COLUMNS: &[&str] = &[
    "nodes",
    "streams",
    "queries",
    "rt_entries_avg",
    "rt_entries_max",
    "rt_bytes_avg",
    "rt_bytes_max",
    "traffic_per_query",
    "duplicates_per_query",
    "response_msgs_per_query",
    "adv_traffic_per_stream",
    "latency_avg",
    "misleading_pct",
    "collision_pct",
    "coded_false_matches",
    "recall",
    "recall_mismatches",
    "compression_ratio",
    "reestablish_count",
    "reestablish_cost",
    "dropped_neighbors",
    "aliases",
    "new_keywords",
];

/// Queries drawn from stream annotations: a uniform stream, a non-empty
/// uniform subset of its descriptors and a uniform source node.
pub fn gen_queries(streams: &[crate::protocol::Annotation], count: usize, seed: u64, n_nodes: usize, alpha: f64, b_q: u32) -> Result<Vec<Query>> {
    if streams.is_empty() {
        return Err(Error::Config("no streams to draw queries from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let usable: Vec<usize> = (0..streams.len()).filter(|&i| streams[i].present().next().is_some()).collect();
    for id in 0..count {
        let s = *usable.choose(&mut rng).ok_or_else(|| Error::Config("every stream is empty".into()))?;
        let an = &streams[s];
        let present: Vec<usize> = an.present().map(|(i, _)| i).collect();
        let mut pick: Vec<bool> = present.iter().map(|_| rng.random_bool(0.5)).collect();
        if !pick.iter().any(|&p| p) {
            let k = rng.random_range(0..present.len());
            pick[k] = true;
        }
        let mut terms = vec![None; an.values.len()];
        for (&a, _) in present.iter().zip(&pick).filter(|(_, p)| **p) {
            terms[a] = Some(QueryTerm { raw: an.values[a].clone().unwrap(), code: None });
        }
        out.push(Query { id: id as u64, src: rng.random_range(0..n_nodes as NodeId), alpha, hop_bound: b_q, terms });
    }
    Ok(out)
}

/// Topology, corpus and stream hosts for a configuration.
pub fn prepare(cfg: &SimConfig) -> Result<(Topology, Corpus, Vec<NodeId>)> {
    cfg.validate()?;
    let law = match &cfg.degree_weights {
        Some(w) => DegreeLaw::weighted(w)?,
        None => DegreeLaw::uniform(),
    };
    let topo = gen_topology_with(cfg.n, sub_seed(cfg.seed, 0), &law)?;
    let corpus = match &cfg.corpus {
        Some(p) => Corpus::load(p)?,
        None => synth_corpus_with(&cfg.synth_options())?,
    };
    let placement = Placement { mode: cfg.placement, regions: cfg.regions, stream_clusters: cfg.clusters, seed: sub_seed(cfg.seed, 2) };
    let hosts = place_streams(&corpus.streams, &topo, &placement)?;
    Ok((topo, corpus, hosts))
}

/// Whether every query must return exactly the global match set.
pub fn completeness_holds(cfg: &SimConfig) -> bool {
    cfg.b_ad == INF
        && cfg.b_q == INF
        && cfg.cov >= 1.0
        && cfg.scv_mode == ScvMode::Exact
        && cfg.adv_policy == AdvPolicy::FirstRound
        && !matches!(cfg.mode, Mode::GsdBounded { .. })
}

pub struct Outcome {
    pub metrics: Metrics,
    pub network: Network,
    pub records: Vec<QueryRecord>,
}

fn collision_pct(net: &Network) -> f64 {
    let trees = net.trees();
    let total: usize = trees.iter().map(|t| t.keyword_count()).sum();
    if total == 0 {
        return 0.0;
    }
    let hits: usize = trees
        .iter()
        .map(|t| match t.policy() {
            Policy::Hash => t.colliding_keywords(),
            Policy::Meaning => t.aliases().len(),
            Policy::Alph => 0,
        })
        .sum();
    100.0 * hits as f64 / total as f64
}

/// A network after advertisement and growth, before the final settle and
/// the queries.
#[derive(Debug, Clone)]
pub struct Staged {
    pub network: Network,
    adv: u64,
    advertised: usize,
    costs: Vec<f64>,
    new_keywords: usize,
    aliases: usize,
    settled: bool,
}

impl Staged {
    /// A copy of this unsettled network that will summarize with `cov`.
    /// Only valid when summarization waits for the settle pass and no
    /// growth has run, so the advertised state does not depend on `cov`.
    pub fn with_cov(&self, cov: f64) -> Result<Staged> {
        let cfg = &self.network.cfg;
        if self.settled || cfg.trigger != SummarizeTrigger::Settle {
            return Err(Error::Config("cov can only change before the settle pass".into()));
        }
        let mut s = self.clone();
        s.network.cfg.cov = cov;
        s.network.cfg.validate()?;
        for n in &mut s.network.nodes {
            n.set_cov(cov);
        }
        Ok(s)
    }
}

/// Advertises every stream and applies the growth steps.
pub fn stage(cfg: &SimConfig, topo: Topology, corpus: Corpus, hosts: Vec<NodeId>, tracer: &mut Tracer) -> Result<Staged> {
    cfg.validate()?;
    let mut net = Network::new(cfg.clone(), topo, corpus, hosts)?;
    let mut s = Staged { adv: net.advertise_all(tracer)?, advertised: net.corpus.streams.len(), network: net, costs: Vec::new(), new_keywords: 0, aliases: 0, settled: false };
    let net = &mut s.network;
    if cfg.growth_steps > 0 {
        net.settle()?;
        s.settled = true;
    }
    for step in 0..cfg.growth_steps {
        let rep = net.grow(cfg.growth_rate, step, tracer)?;
        s.adv += rep.adv_messages;
        s.advertised += rep.new_streams;
        s.new_keywords += rep.new_keywords;
        s.aliases += rep.new_aliases;
        net.settle()?;
        if net.check_reestablish(step + 1) {
            s.costs.push(net.reestablish(tracer)?);
        }
    }
    Ok(s)
}

/// Advertises every stream, settles the tables, applies growth steps and
/// runs the queries (generated after growth when `queries` is `None`).
pub fn run_experiment(cfg: &SimConfig, topo: Topology, corpus: Corpus, hosts: Vec<NodeId>, queries: Option<Vec<Query>>, tracer: &mut Tracer) -> Result<Outcome> {
    let s = stage(cfg, topo, corpus, hosts, tracer)?;
    finish(s, queries, tracer)
}

/// Settles a staged network, runs the queries and measures.
pub fn finish(staged: Staged, queries: Option<Vec<Query>>, tracer: &mut Tracer) -> Result<Outcome> {
    let Staged { network: mut net, adv, advertised, costs, new_keywords, aliases, settled } = staged;
    if !settled {
        net.settle()?;
    }
    let cfg = &net.cfg.clone();
    let queries = match queries {
        Some(q) => q,
        None => gen_queries(&net.corpus.streams, cfg.queries, sub_seed(cfg.seed, 3), net.nodes.len(), cfg.alpha, cfg.b_q)?,
    };
    let mut records = Vec::with_capacity(queries.len());
    for q in &queries {
        records.push(net.run_query(q, tracer)?);
    }
    let check = completeness_holds(cfg);
    let mut mismatches = 0;
    let (mut found, mut expected) = (0usize, 0usize);
    for (i, r) in records.iter().enumerate() {
        let f = r.found();
        expected += r.expected.len();
        found += f.iter().filter(|s| r.expected.binary_search(s).is_ok()).count();
        if f != r.expected {
            mismatches += 1;
            if check && i < cfg.self_check {
                return Err(Error::Invariant(format!("query {i}: {} results, global scan finds {}", f.len(), r.expected.len())));
            }
        }
    }
    let nq = records.len().max(1) as f64;
    let forwards: u64 = records.iter().map(|r| r.forwards).sum();
    let misled: u64 = records.iter().map(|r| r.misled).sum();
    let answered: Vec<u32> = records.iter().filter_map(QueryRecord::latency).collect();
    let entries: Vec<usize> = net.nodes.iter().map(|n| n.entry_count()).collect();
    let bytes: Vec<usize> = net.nodes.iter().map(|n| n.bytes()).collect();
    let nn = net.nodes.len() as f64;
    let compression_ratio = if cfg.compare_nsum && cfg.growth_steps == 0 && cfg.mode != Mode::NSum {
        let twin_cfg = SimConfig { mode: Mode::NSum, compare_nsum: false, ..cfg.clone() };
        let mut twin = Network::new(twin_cfg, net.topo.clone(), net.corpus.clone(), net.hosts.clone())?;
        twin.advertise_all(&mut Tracer::off())?;
        let twin_bytes: usize = twin.nodes.iter().map(|n| n.bytes()).sum();
        twin_bytes as f64 / bytes.iter().sum::<usize>().max(1) as f64
    } else if cfg.mode == Mode::NSum {
        1.0
    } else {
        f64::NAN
    };
    let metrics = Metrics {
        nodes: net.nodes.len(),
        streams: net.corpus.streams.len(),
        queries: records.len(),
        rt_entries_avg: entries.iter().sum::<usize>() as f64 / nn,
        rt_entries_max: entries.iter().copied().max().unwrap_or(0),
        rt_bytes_avg: bytes.iter().sum::<usize>() as f64 / nn,
        rt_bytes_max: bytes.iter().copied().max().unwrap_or(0),
        traffic_per_query: forwards as f64 / nq,
        duplicates_per_query: records.iter().map(|r| r.duplicates).sum::<u64>() as f64 / nq,
        response_msgs_per_query: records.iter().map(|r| r.response_msgs).sum::<u64>() as f64 / nq,
        adv_traffic_per_stream: adv as f64 / advertised.max(1) as f64,
        latency_avg: if answered.is_empty() { 0.0 } else { answered.iter().map(|&d| d as f64).sum::<f64>() / answered.len() as f64 },
        misleading_pct: if forwards == 0 { 0.0 } else { 100.0 * misled as f64 / forwards as f64 },
        collision_pct: collision_pct(&net),
        coded_false_matches: records.iter().map(|r| r.coded_only).sum(),
        recall: if expected == 0 { 1.0 } else { found as f64 / expected as f64 },
        recall_mismatches: mismatches,
        compression_ratio,
        reestablish_count: costs.len(),
        reestablish_cost: if costs.is_empty() { 0.0 } else { costs.iter().sum::<f64>() / costs.len() as f64 },
        dropped_neighbors: net.nodes.iter().map(|n| n.dropped_neighbors()).sum(),
        aliases,
        new_keywords,
    };
    Ok(Outcome { metrics, network: net, records })
}

/// Generates inputs from `cfg` and runs it.
pub fn run_scenario(cfg: &SimConfig, tracer: &mut Tracer) -> Result<Outcome> {
    let (topo, corpus, hosts) = prepare(cfg)?;
    run_experiment(cfg, topo, corpus, hosts, None, tracer)
}
