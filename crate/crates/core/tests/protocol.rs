use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sumroute::protocol::{
    alpha_match_local, attr_match, AdvMsg, AdvPolicy, Annotation, Codec, Mode, NodeId, NodeState, ProtocolConfig, Query, QueryTerm,
    ScvMode, SummarizeTrigger,
};
use sumroute::sumtree::{build, Policy, TreeConfig, TrigramEmbedding};
use sumroute::Code;

const ATTRS: usize = 3;

fn vocab() -> Vec<Vec<String>> {
    (0..ATTRS).map(|a| (0..12).map(|k| format!("a{a}k{k}")).collect()).collect()
}

fn codec(policy: Policy) -> Codec {
    let trees = vocab()
        .iter()
        .enumerate()
        .map(|(a, kws)| {
            let cfg = match policy {
                Policy::Hash => TreeConfig::hash(1, 6, 2, 11 + a as u64),
                Policy::Meaning => TreeConfig::meaning(1, 2, 5),
                Policy::Alph => TreeConfig::alph(),
            };
            Arc::new(build(kws, &cfg, &TrigramEmbedding).unwrap())
        })
        .collect();
    Codec { trees, scv_mode: ScvMode::Exact }
}

fn pcfg(mode: Mode, adv: AdvPolicy) -> ProtocolConfig {
    ProtocolConfig { mode, cov: 1.0, trigger: SummarizeTrigger::Settle, adv_policy: adv }
}

fn network(adj: &[Vec<NodeId>], mode: Mode, adv: AdvPolicy, codec: &Codec) -> Vec<NodeState> {
    adj.iter()
        .enumerate()
        .map(|(i, nb)| {
            let tables = if mode == Mode::NCac { Vec::new() } else { NodeState::tables_for(mode, codec, 10).unwrap() };
            NodeState::new(i as NodeId, nb.clone(), pcfg(mode, adv), tables, ATTRS).unwrap()
        })
        .collect()
}

fn ann(id: &str, vals: [Option<&str>; ATTRS]) -> Annotation {
    Annotation::new(id, vals.iter().map(|v| v.map(String::from)).collect())
}

/// Suppress-style per-message flood; returns messages sent.
fn flood(nodes: &mut [NodeState], origin: usize, stream: u32, an: &Annotation, codec: &Codec, b_ad: u32) -> usize {
    let (msg, targets) = nodes[origin].advertise_stream(stream, an, Some(codec), stream as u64, b_ad).unwrap();
    let mut queue: VecDeque<(NodeId, NodeId, AdvMsg)> = targets.into_iter().map(|t| (origin as NodeId, t, msg.clone())).collect();
    let mut sent = queue.len();
    while let Some((from, to, m)) = queue.pop_front() {
        for (next, fwd) in nodes[to as usize].handle_advertise(&m, from).unwrap() {
            queue.push_back((to, next, fwd));
            sent += 1;
        }
    }
    sent
}

fn query(codec: Option<&Codec>, terms: [Option<&str>; ATTRS], alpha: f64, hop_bound: u32) -> Query {
    Query {
        id: 1,
        src: 0,
        alpha,
        hop_bound,
        terms: terms
            .iter()
            .enumerate()
            .map(|(i, t)| t.map(|raw| QueryTerm { raw: raw.into(), code: codec.map(|c| c.encode(i, raw).unwrap().code) }))
            .collect(),
    }
}

#[test]
fn isolated_node_stores_without_messages() {
    let c = codec(Policy::Hash);
    let mut nodes = network(&[vec![]], Mode::NSum, AdvPolicy::Suppress, &c);
    let an = ann("s0", [Some("a0k1"), Some("a1k2"), None]);
    assert_eq!(flood(&mut nodes, 0, 0, &an, &c, u32::MAX), 0);
    assert_eq!(nodes[0].store(), &[0]);
}

#[test]
fn single_neighbor_gets_one_bundle() {
    let c = codec(Policy::Hash);
    let mut nodes = network(&[vec![1], vec![0]], Mode::NSum, AdvPolicy::Suppress, &c);
    let an = ann("s0", [Some("a0k1"), Some("a1k2"), Some("a2k3")]);
    let (msg, targets) = nodes[0].advertise_stream(0, &an, Some(&c), 0, u32::MAX).unwrap();
    assert_eq!(targets, vec![1]);
    assert_eq!(msg.descriptors.len(), ATTRS);
    assert!(msg.absent.is_empty());
}

#[test]
fn star_leaves_route_through_hub() {
    let c = codec(Policy::Hash);
    let adj = vec![vec![1, 2, 3, 4], vec![0], vec![0], vec![0], vec![0]];
    let mut nodes = network(&adj, Mode::NSum, AdvPolicy::Suppress, &c);
    let an = ann("s0", [Some("a0k1"), Some("a1k2"), Some("a2k3")]);
    flood(&mut nodes, 0, 0, &an, &c, u32::MAX);
    for leaf in 1..5 {
        let t = nodes[leaf].tables();
        for (a, kw) in ["a0k1", "a1k2", "a2k3"].iter().enumerate() {
            let code = c.encode(a, kw).unwrap().code;
            let Code::Bits(b) = code else { unreachable!() };
            assert_eq!(t[a].as_htt().unwrap().lookup(b), 1, "leaf {leaf} attr {a}");
        }
    }
}

#[test]
fn hop_budget_exhausted_still_updates_table() {
    let c = codec(Policy::Hash);
    let adj = vec![vec![1], vec![0, 2], vec![1]];
    let mut nodes = network(&adj, Mode::NSum, AdvPolicy::Suppress, &c);
    let an = ann("s0", [Some("a0k1"), None, None]);
    assert_eq!(flood(&mut nodes, 0, 0, &an, &c, 1), 1);
    assert!(nodes[1].entry_count() > 0);
    assert_eq!(nodes[2].entry_count(), 0);
}

#[test]
fn duplicate_advertisement_is_silent() {
    let c = codec(Policy::Hash);
    let adj = vec![vec![1], vec![0, 2], vec![1]];
    let mut nodes = network(&adj, Mode::NSum, AdvPolicy::Suppress, &c);
    let an = ann("s0", [Some("a0k1"), Some("a1k1"), None]);
    let (msg, _) = nodes[0].advertise_stream(0, &an, Some(&c), 0, u32::MAX).unwrap();
    let first = nodes[1].handle_advertise(&msg, 0).unwrap();
    assert_eq!(first.len(), 1);
    let bytes = nodes[1].bytes();
    let entries = nodes[1].entry_count();
    assert!(nodes[1].handle_advertise(&msg, 0).unwrap().is_empty());
    assert_eq!((nodes[1].bytes(), nodes[1].entry_count()), (bytes, entries));
}

#[test]
fn line_far_end_routes_toward_middle() {
    for policy in [Policy::Hash, Policy::Alph, Policy::Meaning] {
        let c = codec(policy);
        let adj = vec![vec![1], vec![0, 2], vec![1]];
        let mut nodes = network(&adj, Mode::Sp(policy), AdvPolicy::Suppress, &c);
        let an = ann("s0", [Some("a0k4"), Some("a1k5"), Some("a2k6")]);
        flood(&mut nodes, 0, 0, &an, &c, u32::MAX);
        // C's only neighbor is B, local id 0
        let q = query(Some(&c), [Some("a0k4"), Some("a1k5"), Some("a2k6")], 1.0, u32::MAX);
        assert_eq!(nodes[2].alpha_matching_neighbors(&q), 1, "{policy:?}");
        for (a, kw) in ["a0k4", "a1k5", "a2k6"].iter().enumerate() {
            let q1 = {
                let mut t = [None; ATTRS];
                t[a] = Some(*kw);
                query(Some(&c), t, 1.0, u32::MAX)
            };
            assert_eq!(nodes[2].alpha_matching_neighbors(&q1), 1);
        }
    }
}

#[test]
fn host_answers_even_with_zero_hop_bound() {
    let c = codec(Policy::Hash);
    let adj = vec![vec![1], vec![0]];
    let mut nodes = network(&adj, Mode::NSum, AdvPolicy::Suppress, &c);
    let anns = vec![ann("s0", [Some("a0k1"), None, None]), ann("s1", [Some("a0k1"), None, None])];
    flood(&mut nodes, 0, 0, &anns[0], &c, u32::MAX);
    flood(&mut nodes, 1, 1, &anns[1], &c, u32::MAX);
    let q = query(Some(&c), [Some("a0k1"), None, None], 1.0, 0);
    let out = nodes[0].handle_query(&q, None, &anns, None, None);
    assert_eq!(out.responses, vec![0]);
    assert_ne!(out.mns, 0);
    assert!(out.forwards.is_empty());
    let q = Query { hop_bound: 3, ..q };
    assert_eq!(nodes[1].handle_query(&q, None, &anns, None, None).forwards, vec![0]);
    assert!(nodes[1].handle_query(&q, None, &anns, None, None).duplicate);
}

/// Two streams behind the same neighbor, each matching half of the query.
#[test]
fn descriptor_tables_mislead_where_stream_tables_do_not() {
    let c = codec(Policy::Hash);
    let adj = vec![vec![1], vec![0, 2, 3], vec![1], vec![1]];
    let anns = vec![ann("w", [Some("a0k1"), Some("a1k9"), None]), ann("z", [Some("a0k8"), Some("a1k2"), None])];
    let q = query(Some(&c), [Some("a0k1"), Some("a1k2"), None], 1.0, u32::MAX);
    for (mode, expect) in [(Mode::NSum, 1u32), (Mode::NCac, 0)] {
        let mut nodes = network(&adj, mode, AdvPolicy::Suppress, &c);
        flood(&mut nodes, 2, 0, &anns[0], &c, u32::MAX);
        flood(&mut nodes, 3, 1, &anns[1], &c, u32::MAX);
        let out = nodes[0].handle_query(&q, None, &anns, None, None);
        assert_eq!(out.mns, expect, "{mode}");
        assert!(anns.iter().all(|a| !alpha_match_local(&q, a)));
    }
}

#[test]
fn first_round_records_every_shortest_path_sender() {
    let c = codec(Policy::Hash);
    // diamond 0-1, 0-2, 1-3, 2-3
    let adj = vec![vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]];
    let mut nodes = network(&adj, Mode::NSum, AdvPolicy::FirstRound, &c);
    let an = ann("s0", [Some("a0k1"), None, None]);
    let (msg, t0) = nodes[0].advertise_stream(0, &an, Some(&c), 7, u32::MAX).unwrap();
    assert_eq!(t0, vec![1, 2]);
    let m1 = AdvMsg { hops_remaining: msg.hops_remaining, ..msg.clone() };
    let f1 = nodes[1].handle_advertise_round(&m1, &[0]).unwrap();
    let f2 = nodes[2].handle_advertise_round(&m1, &[0]).unwrap();
    assert_eq!((f1, f2), (vec![3], vec![3]));
    let m2 = AdvMsg { hops_remaining: msg.hops_remaining - 1, ..msg };
    assert!(nodes[3].handle_advertise_round(&m2, &[1, 2]).unwrap().is_empty());
    let q = query(Some(&c), [Some("a0k1"), None, None], 1.0, 5);
    assert_eq!(nodes[3].alpha_matching_neighbors(&q), 0b11);
    // a late copy is ignored
    assert!(nodes[1].handle_advertise_round(&m2, &[3]).unwrap().is_empty());
}

#[test]
fn estimated_and_exact_scv_encode_same_codes() {
    let mut c = codec(Policy::Hash);
    let exact = c.encode(0, "a0k3").unwrap();
    c.scv_mode = ScvMode::Estimated;
    let est = c.encode(0, "a0k3").unwrap();
    assert_eq!(exact.code, est.code);
    assert_eq!(exact.scv.len_fields(), est.scv.len_fields());
}

/// Table-scan oracle for neighbor selection on an unsummarized table.
#[test]
fn neighbor_selection_matches_scan_oracle() {
    let c = codec(Policy::Hash);
    let kws = vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for round in 0..40 {
        let deg = rng.random_range(1..=10usize);
        let nb: Vec<NodeId> = (1..=deg as NodeId).collect();
        let tables = NodeState::tables_for(Mode::NSum, &c, 10).unwrap();
        let mut node = NodeState::new(0, nb, pcfg(Mode::NSum, AdvPolicy::Suppress), tables, ATTRS).unwrap();
        let mut oracle: HashMap<(usize, Code), u32> = HashMap::new();
        let mut absent = [0u32; ATTRS];
        for s in 0..30u32 {
            let vals: Vec<Option<String>> =
                (0..ATTRS).map(|a| (!rng.random_bool(0.2)).then(|| kws[a][rng.random_range(0..12)].clone())).collect();
            let an = Annotation::new(format!("s{s}"), vals);
            let from = rng.random_range(1..=deg as NodeId);
            let descriptors = c.encode_annotation(&an).unwrap();
            let msg = AdvMsg {
                adv_id: s as u64,
                stream: s,
                absent: (0..ATTRS).filter(|&a| descriptors[a].is_none()).collect(),
                descriptors: descriptors.iter().flatten().cloned().collect(),
                hops_remaining: 0,
            };
            node.handle_advertise(&msg, from).unwrap();
            for d in descriptors.iter().flatten() {
                *oracle.entry((d.attr, d.code.clone())).or_default() |= 1 << (from - 1);
            }
            for &a in &msg.absent {
                absent[a] |= 1 << (from - 1);
            }
        }
        for _ in 0..25 {
            let terms: Vec<Option<&str>> = (0..ATTRS).map(|a| rng.random_bool(0.7).then(|| kws[a][rng.random_range(0..12)].as_str())).collect();
            if terms.iter().all(Option::is_none) {
                continue;
            }
            let alpha = [0.34, 0.5, 0.67, 1.0][rng.random_range(0..4)];
            let q = query(Some(&c), [terms[0], terms[1], terms[2]], alpha, 9);
            let n = q.specified();
            let mut expect = 0u32;
            for j in 0..deg {
                let hits = (0..ATTRS)
                    .filter(|&a| {
                        q.terms[a].as_ref().is_some_and(|t| {
                            let m = oracle.get(&(a, t.code.clone().unwrap())).copied().unwrap_or(0) | absent[a];
                            m & (1 << j) != 0
                        })
                    })
                    .count();
                if hits > 0 && hits as f64 + 1e-9 >= alpha * n as f64 {
                    expect |= 1 << j;
                }
            }
            assert_eq!(node.alpha_matching_neighbors(&q), expect, "round {round}");
        }
    }
}

proptest! {
    #[test]
    fn alpha_match_equals_counting_oracle(
        qv in proptest::collection::vec(proptest::option::of(0u8..4), 1..8),
        dv in proptest::collection::vec(proptest::option::of(0u8..4), 8),
        alpha in 0.0f64..=1.0,
    ) {
        prop_assume!(qv.iter().any(Option::is_some));
        let an = Annotation::new("s", dv.iter().map(|v| v.map(|x| format!("k{x}"))).collect());
        let q = Query {
            id: 0, src: 0, alpha, hop_bound: 0,
            terms: qv.iter().map(|v| v.map(|x| QueryTerm { raw: format!("k{x}"), code: None })).collect(),
        };
        let n = qv.iter().filter(|v| v.is_some()).count();
        let hits = qv.iter().zip(&dv).filter(|(q, d)| q.is_some() && attr_match(q.map(|x| x.to_string()).as_deref(), d.map(|x| x.to_string()).as_deref())).count();
        prop_assert_eq!(alpha_match_local(&q, &an), hits as f64 + 1e-9 >= alpha * n as f64);
    }
}
