//! Deterministic Lloyd k-means with k-means++ seeding.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::embed::sq_dist;

pub const MAX_ITERS: usize = 50;

#[derive(Debug, Clone)]
pub struct Clustering {
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

pub fn mean(points: &[&[f64]]) -> Vec<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut m = vec![0.0; dim];
    for p in points {
        for (acc, x) in m.iter_mut().zip(p.iter()) {
            *acc += x;
        }
    }
    let n = points.len().max(1) as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Clusters `points` into exactly `k` non-empty clusters (requires
/// `points.len() >= k`). Clusters come back sorted by centroid in
/// lexicographic order.
pub fn kmeans(points: &[&[f64]], k: usize, seed: u64) -> Clustering {
    assert!(k >= 1 && points.len() >= k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].to_vec());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let a = nearest(p, &centroids);
            if assignment[i] != a {
                assignment[i] = a;
                changed = true;
            }
        }
        repair_empty(points, &mut assignment, &mut centroids, k);
        recompute(points, &assignment, &mut centroids);
        if !changed {
            break;
        }
    }
    repair_empty(points, &mut assignment, &mut centroids, k);
    recompute(points, &assignment, &mut centroids);

    // stable order: sort clusters by centroid
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        centroids[a]
            .iter()
            .zip(&centroids[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    Clustering {
        assignment: assignment.iter().map(|&a| rank[a]).collect(),
        centroids: order.iter().map(|&o| centroids[o].clone()).collect(),
    }
}

fn recompute(points: &[&[f64]], assignment: &[usize], centroids: &mut [Vec<f64>]) {
    for (ci, c) in centroids.iter_mut().enumerate() {
        let members: Vec<&[f64]> = points
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == ci)
            .map(|(p, _)| *p)
            .collect();
        if !members.is_empty() {
            *c = mean(&members);
        }
    }
}

/// Moves the point farthest from the largest cluster's centroid into each
/// empty cluster.
fn repair_empty(points: &[&[f64]], assignment: &mut [usize], centroids: &mut [Vec<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        let victim = (0..points.len())
            .filter(|&i| assignment[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(points[a], &centroids[largest])
                    .total_cmp(&sq_dist(points[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        assignment[victim] = empty;
        centroids[empty] = points[victim].to_vec();
    }
}
