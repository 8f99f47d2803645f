use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};

use crate::error::{Error, Result};
use crate::protocol::NodeId;

pub const MIN_DEGREE: usize = 2;
pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub adjacency: Vec<Vec<NodeId>>,
    pub seed: u64,
}

/// Draws target degrees from `MIN_DEGREE..=MAX_DEGREE` with the given weights.
pub struct DegreeLaw {
    dist: WeightedIndex<f64>,
}

impl DegreeLaw {
    pub fn uniform() -> Self {
        Self::weighted(&[1.0; MAX_DEGREE - MIN_DEGREE + 1]).expect("valid weights")
    }

    pub fn weighted(weights: &[f64]) -> Result<Self> {
        if weights.len() != MAX_DEGREE - MIN_DEGREE + 1 {
            return Err(Error::Config(format!("need {} degree weights", MAX_DEGREE - MIN_DEGREE + 1)));
        }
        let dist = WeightedIndex::new(weights).map_err(|e| Error::Config(format!("degree weights: {e}")))?;
        Ok(DegreeLaw { dist })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        MIN_DEGREE + self.dist.sample(rng)
    }
}

impl Topology {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adjacency[n as usize].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a as usize].contains(&b)
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        if a != b && !self.has_edge(a, b) {
            self.adjacency[a as usize].push(b);
            self.adjacency[b as usize].push(a);
        }
    }

    /// Hop distances from `src` (`u32::MAX` when unreachable).
    pub fn bfs(&self, src: NodeId) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut q = VecDeque::from([src]);
        dist[src as usize] = 0;
        while let Some(u) = q.pop_front() {
            for &v in &self.adjacency[u as usize] {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = dist[u as usize] + 1;
                    q.push_back(v);
                }
            }
        }
        dist
    }

    /// Nodes in breadth-first order from `src`.
    pub fn bfs_order(&self, src: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.len()];
        let mut order = Vec::with_capacity(self.len());
        let mut q = VecDeque::from([src]);
        seen[src as usize] = true;
        while let Some(u) = q.pop_front() {
            order.push(u);
            for &v in &self.adjacency[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    q.push_back(v);
                }
            }
        }
        order
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.bfs(0).iter().all(|&d| d != u32::MAX)
    }

    /// The bottom degree tercile (ties broken by node id).
    pub fn edge_nodes(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = (0..self.len() as NodeId).collect();
        ids.sort_by_key(|&i| (self.degree(i), i));
        ids.truncate(self.len().div_ceil(3).max(1));
        ids.sort_unstable();
        ids
    }
}

/// Connected random graph with per-node degrees in `[2, 10]` (clipped to
/// `n - 1` on tiny graphs).
pub fn gen_topology(n: usize, seed: u64) -> Result<Topology> {
    gen_topology_with(n, seed, &DegreeLaw::uniform())
}

pub fn gen_topology_with(n: usize, seed: u64, law: &DegreeLaw) -> Result<Topology> {
    if n < 2 {
        return Err(Error::Config("a topology needs at least 2 nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = MAX_DEGREE.min(n - 1);
    let floor = MIN_DEGREE.min(n - 1);
    let target: Vec<usize> = (0..n).map(|_| law.sample(&mut rng).clamp(floor, cap)).collect();
    let mut t = Topology { adjacency: vec![Vec::new(); n], seed };
    let mut order: Vec<NodeId> = (0..n as NodeId).collect();
    order.shuffle(&mut rng);
    // random spanning tree, preferring attachment points with spare target
    for i in 1..n {
        let u = order[i];
        let open: Vec<NodeId> = order[..i].iter().copied().filter(|&v| t.degree(v) < target[v as usize]).collect();
        let v = if open.is_empty() {
            let spare: Vec<NodeId> = order[..i].iter().copied().filter(|&v| t.degree(v) < cap).collect();
            *spare.choose(&mut rng).ok_or_else(|| Error::Invariant("no attachment point left".into()))?
        } else {
            open[rng.random_range(0..open.len())]
        };
        t.add_edge(u, v);
    }
    // pair remaining stubs
    let mut stubs: Vec<NodeId> = (0..n as NodeId).flat_map(|v| std::iter::repeat_n(v, target[v as usize].saturating_sub(t.degree(v)))).collect();
    for _ in 0..4 {
        stubs.shuffle(&mut rng);
        let mut rest = Vec::new();
        let mut it = stubs.chunks_exact(2);
        for pair in &mut it {
            let (a, b) = (pair[0], pair[1]);
            if a != b && !t.has_edge(a, b) && t.degree(a) < cap && t.degree(b) < cap {
                t.add_edge(a, b);
            } else {
                rest.extend_from_slice(pair);
            }
        }
        rest.extend_from_slice(it.remainder());
        stubs = rest;
    }
    for v in 0..n as NodeId {
        while t.degree(v) < floor {
            let cands: Vec<NodeId> = (0..n as NodeId).filter(|&u| u != v && !t.has_edge(u, v) && t.degree(u) < cap).collect();
            let u = *cands.choose(&mut rng).ok_or_else(|| Error::Invariant("cannot meet the degree floor".into()))?;
            t.add_edge(u, v);
        }
    }
    for adj in &mut t.adjacency {
        adj.sort_unstable();
    }
    Ok(t)
}
