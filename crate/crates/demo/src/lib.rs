//! Browser bindings. Every export takes plain values and returns a JSON
//! string; failures come back as `{"error": "..."}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use sumroute::netsim::{run_scenario, SimConfig};
use sumroute::protocol::trace::Tracer;
use sumroute::rtable::dump::to_text;
use sumroute::rtable::{HybridTableTrie, Layout};
use sumroute::sumtree::{build, Policy, TreeConfig, TrigramEmbedding};
use sumroute::Error;

/// Largest network the page will simulate.
pub const MAX_NODES: usize = 300;
pub const MAX_STREAMS: usize = 1500;

fn respond(r: Result<Value, Error>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn split_keywords(text: &str) -> Vec<String> {
    let mut kws: Vec<String> = text.split(|ch: char| ch.is_whitespace() || ch == ',').filter(|s| !s.is_empty()).map(str::to_string).collect();
    kws.sort();
    kws.dedup();
    kws
}

fn tree_config(policy: Policy, c: u32, d: u32, seed: u64) -> TreeConfig {
    match policy {
        Policy::Hash => TreeConfig::hash(c, d, 0, seed),
        Policy::Meaning => TreeConfig::meaning(c, 0, seed),
        Policy::Alph => TreeConfig::alph(),
    }
}

fn encode_inner(text: &str, policy: &str, c: u32, d: u32) -> Result<Value, Error> {
    let kws = split_keywords(text);
    if kws.is_empty() {
        return Err(Error::Config("no keywords".into()));
    }
    let policy: Policy = policy.parse()?;
    let tree = build(&kws, &tree_config(policy, c, d, 1), &TrigramEmbedding)?;
    let rows = kws
        .iter()
        .map(|k| tree.encode(k).map(|(code, scv)| json!({ "keyword": k, "code": code.to_string(), "scv": scv.to_string() })))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({ "rows": rows, "tree_nodes": tree.nodes().len(), "collisions": tree.colliding_keywords() + tree.aliases().len() }))
}

/// Codes and sibling-count vectors for whitespace- or comma-separated
/// keywords under a `hash`, `meaning` or `alph` tree.
#[wasm_bindgen]
pub fn encode_keywords(text: &str, policy: &str, c: u32, d: u32) -> String {
    respond(encode_inner(text, policy, c, d))
}

fn neighbor_list(mask: u32) -> Vec<u32> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

fn summarize_inner(text: &str, neighbors: u32, share: f64, cov: f64, d: u32, seed: u64) -> Result<Value, Error> {
    let kws = split_keywords(text);
    if kws.is_empty() {
        return Err(Error::Config("no keywords".into()));
    }
    if !(1..=8).contains(&neighbors) {
        return Err(Error::Config("neighbors must be 1..=8".into()));
    }
    let c = 2;
    let tree = build(&kws, &TreeConfig::hash(c, d, 0, seed), &TrigramEmbedding)?;
    let mut table = HybridTableTrie::new(Layout::new(c, 0, c * d + 1)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = Vec::new();
    for k in &kws {
        let (code, scv) = tree.encode(k)?;
        let bits = code.as_bits().ok_or_else(|| Error::Config("hash codes are bit strings".into()))?;
        for nb in 0..neighbors as u8 {
            if rng.random::<f64>() < share {
                table.insert(bits, nb, &scv)?;
            }
        }
        codes.push((k, bits));
    }
    let before = json!({ "entries": table.entry_count(), "bytes": table.bytes(), "dump": to_text(&table)? });
    let lookups_before: Vec<u32> = codes.iter().map(|(_, b)| table.lookup(*b)).collect();
    let stats = table.summarize_table(cov)?;
    let lookups = codes
        .iter()
        .zip(lookups_before)
        .map(|((k, b), m0)| json!({ "keyword": k, "before": neighbor_list(m0), "after": neighbor_list(table.lookup(*b)) }))
        .collect::<Vec<_>>();
    Ok(json!({
        "before": before,
        "after": { "entries": table.entry_count(), "bytes": table.bytes(), "dump": to_text(&table)? },
        "removed": stats.removed,
        "lookups": lookups,
    }))
}

/// Fills one hash-coded routing table from random neighbor advertisements,
/// summarizes it at coverage `cov` and reports both states.
#[wasm_bindgen]
pub fn summarize_table(text: &str, neighbors: u32, share: f64, cov: f64, d: u32, seed: u32) -> String {
    respond(summarize_inner(text, neighbors, share, cov, d, seed as u64))
}

fn simulate_inner(n: usize, streams: usize, mode: &str, cov: f64, seed: u64) -> Result<Value, Error> {
    if n > MAX_NODES || streams > MAX_STREAMS {
        return Err(Error::Config(format!("the page runs at most {MAX_NODES} nodes and {MAX_STREAMS} streams")));
    }
    let mut cfg = SimConfig { n, streams, attrs: 6, vocab: 80, queries: 50, seed, ..SimConfig::default() };
    cfg.set("mode", mode)?;
    cfg.cov = cov;
    let out = run_scenario(&cfg, &mut Tracer::off())?;
    serde_json::to_value(&out.metrics).map_err(|e| Error::Config(e.to_string()))
}

/// Runs a small network end to end and returns its metrics.
#[wasm_bindgen]
pub fn simulate(n: u32, streams: u32, mode: &str, cov: f64, seed: u32) -> String {
    respond(simulate_inner(n as usize, streams as usize, mode, cov, seed as u64))
}
