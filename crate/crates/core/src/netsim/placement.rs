use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Annotation, NodeId};

use super::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementMode {
    Random,
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub mode: PlacementMode,
    pub regions: usize,
    pub stream_clusters: usize,
    pub seed: u64,
}

impl Placement {
    pub fn random(seed: u64) -> Self {
        Placement { mode: PlacementMode::Random, regions: 7, stream_clusters: 14, seed }
    }

    pub fn region(seed: u64) -> Self {
        Placement { mode: PlacementMode::Region, ..Self::random(seed) }
    }
}

/// Sorted (attribute, keyword) set of a stream.
pub fn descriptor_set(an: &Annotation) -> Vec<(usize, &str)> {
    an.present().collect()
}

pub fn jaccard(a: &[(usize, &str)], b: &[(usize, &str)]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

const MEDOID_SAMPLE: usize = 128;

/// k-medoids over Jaccard distance (alternating assignment and medoid
/// update; medoid candidates and costs use a bounded member sample).
pub fn cluster_streams(streams: &[Annotation], k: usize, seed: u64) -> Vec<usize> {
    let n = streams.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let sets: Vec<Vec<(usize, &str)>> = streams.iter().map(descriptor_set).collect();
    let dist = |a: usize, b: usize| 1.0 - jaccard(&sets[a], &sets[b]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // k-medoids++ style seeding
    let mut medoids = vec![rng.random_range(0..n)];
    let mut near: Vec<f64> = (0..n).map(|i| dist(i, medoids[0])).collect();
    while medoids.len() < k {
        let total: f64 = near.iter().map(|d| d * d).sum();
        let next = if total <= 0.0 {
            (0..n).find(|i| !medoids.contains(i)).unwrap()
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in near.iter().enumerate() {
                r -= d * d;
                if r <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        medoids.push(next);
        for (i, d) in near.iter_mut().enumerate() {
            *d = d.min(dist(i, next));
        }
    }
    let mut assign = vec![0usize; n];
    for _ in 0..20 {
        for (i, a) in assign.iter_mut().enumerate() {
            *a = (0..k).min_by(|&x, &y| dist(i, medoids[x]).total_cmp(&dist(i, medoids[y])).then(x.cmp(&y))).unwrap();
        }
        let mut changed = false;
        for (c, m) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let sample: Vec<usize> = if members.len() > MEDOID_SAMPLE {
                members.choose_multiple(&mut rng, MEDOID_SAMPLE).copied().collect()
            } else {
                members.clone()
            };
            let cost = |cand: usize| sample.iter().map(|&j| dist(cand, j)).sum::<f64>();
            let best = sample.iter().copied().chain(std::iter::once(*m)).min_by(|&x, &y| cost(x).total_cmp(&cost(y)).then(x.cmp(&y))).unwrap();
            if best != *m {
                *m = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

/// Contiguous breadth-first segments of the network.
pub fn regions(topo: &Topology, count: usize, start: NodeId) -> Vec<Vec<NodeId>> {
    let order = topo.bfs_order(start);
    let n = order.len();
    (0..count).map(|r| order[r * n / count..(r + 1) * n / count].to_vec()).collect()
}

/// A placement with the grouping that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementDetail {
    pub hosts: Vec<NodeId>,
    /// Stream cluster per stream (all zero under Random).
    pub cluster_of: Vec<usize>,
    /// Region per cluster (empty under Random).
    pub region_of_cluster: Vec<usize>,
    /// Node segments (empty under Random).
    pub regions: Vec<Vec<NodeId>>,
}

/// Host node for each stream.
pub fn place_streams(streams: &[Annotation], topo: &Topology, p: &Placement) -> Result<Vec<NodeId>> {
    place_streams_detailed(streams, topo, p).map(|d| d.hosts)
}

pub fn place_streams_detailed(streams: &[Annotation], topo: &Topology, p: &Placement) -> Result<PlacementDetail> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    match p.mode {
        PlacementMode::Random => {
            let edge = topo.edge_nodes();
            let hosts = streams.iter().map(|_| *edge.choose(&mut rng).expect("non-empty")).collect();
            Ok(PlacementDetail { hosts, cluster_of: vec![0; streams.len()], region_of_cluster: Vec::new(), regions: Vec::new() })
        }
        PlacementMode::Region => {
            if p.regions == 0 || p.regions > topo.len() {
                return Err(Error::Config(format!("{} regions for {} nodes", p.regions, topo.len())));
            }
            let start = rng.random_range(0..topo.len() as NodeId);
            let segs = regions(topo, p.regions, start);
            let clusters = cluster_streams(streams, p.stream_clusters, p.seed ^ 0x5eed);
            // clusters go round-robin over regions, in a seeded order
            let mut perm: Vec<usize> = (0..p.stream_clusters.max(1)).collect();
            perm.shuffle(&mut rng);
            let region_of_cluster: Vec<usize> = perm.iter().map(|&x| x % p.regions).collect();
            let hosts = clusters.iter().map(|&c| *segs[region_of_cluster[c]].choose(&mut rng).expect("non-empty region")).collect();
            Ok(PlacementDetail { hosts, cluster_of: clusters, region_of_cluster, regions: segs })
        }
    }
}
