use std::collections::BTreeSet;

use super::embed::{normalize, sq_dist, EmbeddingProvider};
use super::kmeans::{kmeans, mean, nearest};
use super::{bits, Alias, Policy, SumTree, TreeConfig, ROOT};
use crate::code::{BitCode, Code, MAX_CODE_BITS};
use crate::error::{Error, Result};

pub fn build_meaning<S: AsRef<str>>(keywords: &[S], emb: &dyn EmbeddingProvider, cfg: &TreeConfig) -> Result<SumTree> {
    if cfg.policy != Policy::Meaning {
        return Err(Error::InvalidConfig("build_meaning needs a Meaning config".into()));
    }
    cfg.validate()?;
    let unique: Vec<&str> = keywords.iter().map(|k| k.as_ref()).collect::<BTreeSet<_>>().into_iter().collect();
    if unique.is_empty() {
        return Err(Error::EmptyKeywordSet);
    }
    let mut vectors = Vec::with_capacity(unique.len());
    for k in &unique {
        let mut v = emb.embed(k).ok_or_else(|| Error::MissingEmbedding(k.to_string()))?;
        if v.len() != emb.dimension() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::MissingEmbedding(k.to_string()));
        }
        normalize(&mut v);
        vectors.push(v);
    }
    let mut tree = SumTree::with_root(*cfg, Code::Bits(BitCode::ROOT));
    let members: Vec<usize> = (0..unique.len()).collect();
    let mut b = Builder { tree: &mut tree, words: &unique, vectors: &vectors };
    b.split(ROOT, &members)?;
    Ok(tree)
}

struct Builder<'a> {
    tree: &'a mut SumTree,
    words: &'a [&'a str],
    vectors: &'a [Vec<f64>],
}

impl Builder<'_> {
    fn points(&self, members: &[usize]) -> Vec<&[f64]> {
        members.iter().map(|&m| self.vectors[m].as_slice()).collect()
    }

    /// Gives `node` children for `members` (|members| >= 1).
    fn split(&mut self, node: usize, members: &[usize]) -> Result<()> {
        let c = self.tree.cfg.c;
        let k = 1usize << c;
        self.tree.nodes[node].centroid = Some(mean(&self.points(members)));
        let code = bits(&self.tree.nodes[node].tau);
        if members.len() <= k {
            for (j, &m) in members.iter().enumerate() {
                let leaf = self.tree.add_node(Code::Bits(code.child(c, j as u64)?), node);
                self.tree.nodes[leaf].centroid = Some(self.vectors[m].clone());
                self.tree.attach_keyword(self.words[m], leaf);
            }
            self.tree.refresh_ns(node);
            return Ok(());
        }
        let groups: Vec<Vec<usize>> = if code.len() + 2 * c > MAX_CODE_BITS {
            // Out of code bits: split evenly instead of clustering.
            let chunk = members.len().div_ceil(k);
            members.chunks(chunk).map(|ch| ch.to_vec()).collect()
        } else {
            let seed = self.tree.cfg.seed ^ code.value().wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let cl = kmeans(&self.points(members), k, seed);
            let mut groups = vec![Vec::new(); k];
            for (i, &a) in cl.assignment.iter().enumerate() {
                groups[a].push(members[i]);
            }
            groups
        };
        let mut kids = Vec::with_capacity(groups.len());
        for j in 0..groups.len() {
            kids.push(self.tree.add_node(Code::Bits(code.child(c, j as u64)?), node));
        }
        self.tree.refresh_ns(node);
        for (child, group) in kids.into_iter().zip(groups) {
            if group.len() == 1 {
                self.tree.nodes[child].centroid = Some(self.vectors[group[0]].clone());
                self.tree.attach_keyword(self.words[group[0]], child);
            } else {
                self.split(child, &group)?;
            }
        }
        Ok(())
    }
}

impl SumTree {
    /// Descends by nearest child centroid to the bottom cluster and either
    /// takes its smallest free child code or reuses the nearest keyword's.
    pub(super) fn meaning_insert(&mut self, keyword: &str, vector: &[f64]) -> Result<usize> {
        let mut v = vector.to_vec();
        normalize(&mut v);
        let c = self.cfg.c;
        let k = 1usize << c;
        let mut cur = ROOT;
        let cl = loop {
            let kids = &self.nodes[cur].children;
            if kids.is_empty() {
                return Err(Error::MalformedTree(format!("descent stopped at leaf {}", self.nodes[cur].tau)));
            }
            let cents = kids
                .iter()
                .map(|&ch| self.nodes[ch].centroid.clone().ok_or_else(|| Error::MalformedTree("missing centroid".into())))
                .collect::<Result<Vec<_>>>()?;
            let next = kids[nearest(&v, &cents)];
            if self.nodes[next].is_leaf() {
                break cur;
            }
            cur = next;
        };
        let code = bits(&self.nodes[cl].tau);
        let used: BTreeSet<u64> = self.nodes[cl].children.iter().map(|&ch| bits(&self.nodes[ch].tau).last_digit(c)).collect();
        let leaf = if self.nodes[cl].nc() < k {
            let j = (0..k as u64).find(|j| !used.contains(j)).expect("free slot");
            let leaf = self.add_node(Code::Bits(code.child(c, j)?), cl);
            self.nodes[leaf].centroid = Some(v.clone());
            self.refresh_ns(cl);
            leaf
        } else {
            let leaf = self.nodes[cl]
                .children
                .iter()
                .copied()
                .filter(|&ch| self.nodes[ch].is_leaf())
                .min_by(|&a, &b| {
                    let da = sq_dist(&v, self.nodes[a].centroid.as_deref().unwrap_or(&v));
                    let db = sq_dist(&v, self.nodes[b].centroid.as_deref().unwrap_or(&v));
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .ok_or_else(|| Error::MalformedTree("full cluster without leaves".into()))?;
            self.aliases.push(Alias {
                keyword: keyword.to_string(),
                shares_with: self.nodes[leaf].values[0].clone(),
                code: self.nodes[leaf].tau.clone(),
            });
            leaf
        };
        self.attach_keyword(keyword, leaf);
        // running-mean update of every centroid on the path
        let mut up = self.nodes[leaf].parent;
        while let Some(p) = up {
            let n = self.nodes[p].members as f64;
            if let Some(cent) = self.nodes[p].centroid.as_mut() {
                for (x, y) in cent.iter_mut().zip(&v) {
                    *x += (y - *x) / n;
                }
            }
            up = self.nodes[p].parent;
        }
        Ok(leaf)
    }
}

#[cfg(test)]
mod tests {
    use super::super::TrigramEmbedding;
    use super::*;

    #[test]
    fn small_sets_skip_clustering() {
        let t = build_meaning(&["a", "b", "c"], &TrigramEmbedding, &TreeConfig::meaning(2, 0, 1)).unwrap();
        let kids: Vec<String> = t.root().children.iter().map(|&c| t.node(c).tau.to_string()).collect();
        assert_eq!(kids, vec!["100", "101", "110"]);
        assert!(t.root().children.iter().all(|&c| t.node(c).ns == 2));
    }

    #[test]
    fn code_lengths_follow_depth() {
        let kws: Vec<String> = (0..300).map(|i| format!("w{}x{}", i % 17, i)).collect();
        let t = build_meaning(&kws, &TrigramEmbedding, &TreeConfig::meaning(2, 0, 5)).unwrap();
        for n in t.nodes() {
            assert_eq!(bits(&n.tau).len(), 2 * n.depth + 1);
            assert!(n.nc() <= 4);
        }
        for k in &kws {
            let leaf = t.leaf_of(k).unwrap();
            assert_eq!(t.node(leaf).values, vec![k.clone()]);
        }
    }
}
