//! Keyword embedding providers for the clustering tree.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

pub const FALLBACK_DIM: usize = 64;

pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;
    /// Returns the vector for `keyword`, or `None` when the provider has no
    /// entry for it.
    fn embed(&self, keyword: &str) -> Option<Vec<f64>>;
}

/// Character-trigram counts hashed into [`FALLBACK_DIM`] buckets and
/// L2-normalized. Total over all keywords, so never returns `None`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedding;

impl EmbeddingProvider for TrigramEmbedding {
    fn dimension(&self) -> usize {
        FALLBACK_DIM
    }

    fn embed(&self, keyword: &str) -> Option<Vec<f64>> {
        let padded: Vec<char> = format!("^{}$", keyword.to_lowercase()).chars().collect();
        let mut v = vec![0.0; FALLBACK_DIM];
        for w in padded.windows(3) {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for ch in w {
                h ^= *ch as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
            v[(h % FALLBACK_DIM as u64) as usize] += 1.0;
        }
        if padded.len() < 3 {
            v[0] = 1.0;
        }
        normalize(&mut v);
        Some(v)
    }
}

/// Vectors loaded from a whitespace-separated text file:
/// `keyword f1 f2 ... fd` per line.
#[derive(Debug, Clone, Default)]
pub struct FileEmbedding {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileEmbedding {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut dim = 0;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse { line: i + 1, msg: "expected finite components".into() });
            }
            if dim == 0 {
                dim = v.len();
            } else if v.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("dimension {} differs from {dim}", v.len()),
                });
            }
            vectors.insert(word.to_string(), v);
        }
        if dim == 0 {
            return Err(Error::Parse { line: 0, msg: "no vectors".into() });
        }
        Ok(FileEmbedding { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileEmbedding {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, keyword: &str) -> Option<Vec<f64>> {
        self.vectors.get(keyword).cloned()
    }
}

pub fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
