//! Summarization trees: per-attribute trees that define which codes
//! summarize into which parent code, plus sibling-count vectors.

mod alph;
pub mod embed;
pub mod estimate;
mod hash;
pub mod kmeans;
mod meaning;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::code::{BitCode, Code, Scv};
use crate::error::{Error, Result};

pub use alph::{ALPH_FIELD_WIDTH, N_CHAR, TERMINATOR};
pub use embed::{EmbeddingProvider, FileEmbedding, TrigramEmbedding};
pub use estimate::{estimate_fscs_alph, estimate_fscs_hash, omega_nominal, omega_occupancy};
pub use hash::keyword_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Alph,
    Hash,
    Meaning,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alph" => Ok(Policy::Alph),
            "hash" => Ok(Policy::Hash),
            "meaning" => Ok(Policy::Meaning),
            other => Err(Error::Config(format!("unknown tree policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub policy: Policy,
    /// Branching exponent: a node has at most `2^c` children.
    pub c: u32,
    /// Depth of the hash tree (ignored by the other policies).
    pub d: u32,
    /// Hash seed for `Hash`, k-means++ seed for `Meaning`.
    pub seed: u64,
    /// Master-table prefix bits of the routing table built on this tree.
    pub b: u32,
    /// Hash space size: keywords land on leaves `0..slots`. Zero uses the
    /// whole `2^(c*d)` leaf level.
    #[serde(default)]
    pub slots: u64,
}

impl TreeConfig {
    pub fn hash(c: u32, d: u32, b: u32, seed: u64) -> Self {
        TreeConfig { policy: Policy::Hash, c, d, seed, b, slots: 0 }
    }

    pub fn meaning(c: u32, b: u32, seed: u64) -> Self {
        TreeConfig { policy: Policy::Meaning, c, d: 0, seed, b, slots: 0 }
    }

    pub fn alph() -> Self {
        TreeConfig { policy: Policy::Alph, c: 0, d: 0, seed: 0, b: 0, slots: 0 }
    }

    /// Hash tree over exactly `slots` leaves, at the shallowest depth that
    /// holds them.
    pub fn hash_slots(c: u32, slots: u64, b: u32, seed: u64) -> Self {
        let mut d = 1;
        while c * d < 62 && (1u64 << (c * d)) < slots {
            d += 1;
        }
        TreeConfig { slots, ..Self::hash(c, d, b, seed) }
    }

    /// Number of leaves keywords hash onto.
    pub fn hash_space(&self) -> u64 {
        match self.slots {
            0 if self.c * self.d >= 64 => u64::MAX,
            0 => 1u64 << (self.c * self.d),
            s => s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.policy {
            Policy::Alph => Ok(()),
            Policy::Hash | Policy::Meaning => {
                if self.c == 0 || self.c > 8 {
                    return Err(Error::InvalidConfig(format!("c = {} must be in 1..=8", self.c)));
                }
                if self.b % self.c != 0 {
                    return Err(Error::InvalidConfig(format!("b = {} is not a multiple of c = {}", self.b, self.c)));
                }
                if self.policy == Policy::Hash {
                    if self.d == 0 || self.c * self.d + 1 > crate::code::MAX_CODE_BITS {
                        return Err(Error::InvalidConfig(format!("c*d = {} does not fit a code", self.c * self.d)));
                    }
                    if self.slots > 0 && self.c * self.d < 64 && self.slots > 1u64 << (self.c * self.d) {
                        return Err(Error::InvalidConfig(format!("{} slots exceed the depth-{} leaf level", self.slots, self.d)));
                    }
                    if self.b / self.c >= self.d {
                        return Err(Error::InvalidConfig(format!(
                            "leaves at depth {} sit inside the {}-bit master prefix",
                            self.d, self.b
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Width in bits of one sibling-count field.
    pub fn field_width(&self) -> u32 {
        match self.policy {
            Policy::Alph => ALPH_FIELD_WIDTH,
            _ => self.c,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumTreeNode {
    pub tau: Code,
    /// Number of siblings (parent's child count minus one).
    pub ns: u16,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Distance from the root (root = 0).
    pub depth: u32,
    /// Keywords held by a leaf; several when hash codes collide or a
    /// meaning code is reused.
    pub values: Vec<String>,
    /// Cluster centroid (meaning trees only).
    pub centroid: Option<Vec<f64>>,
    /// Keywords in the subtree, used to update centroids incrementally.
    pub members: usize,
}

impl SumTreeNode {
    fn new(tau: Code, parent: Option<usize>, depth: u32) -> Self {
        SumTreeNode { tau, ns: 0, children: Vec::new(), parent, depth, values: Vec::new(), centroid: None, members: 0 }
    }

    pub fn nc(&self) -> usize {
        self.children.len()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A keyword that had to reuse an existing code because its cluster was
/// full.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alias {
    pub keyword: String,
    pub shares_with: String,
    pub code: Code,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumTree {
    cfg: TreeConfig,
    nodes: Vec<SumTreeNode>,
    by_code: HashMap<Code, usize>,
    by_keyword: BTreeMap<String, usize>,
    aliases: Vec<Alias>,
}

pub const ROOT: usize = 0;

impl SumTree {
    fn with_root(cfg: TreeConfig, root: Code) -> Self {
        let mut by_code = HashMap::new();
        by_code.insert(root.clone(), ROOT);
        SumTree {
            cfg,
            nodes: vec![SumTreeNode::new(root, None, 0)],
            by_code,
            by_keyword: BTreeMap::new(),
            aliases: Vec::new(),
        }
    }

    pub fn config(&self) -> &TreeConfig {
        &self.cfg
    }

    pub fn policy(&self) -> Policy {
        self.cfg.policy
    }

    pub fn nodes(&self) -> &[SumTreeNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &SumTreeNode {
        &self.nodes[idx]
    }

    pub fn root(&self) -> &SumTreeNode {
        &self.nodes[ROOT]
    }

    pub fn find(&self, code: &Code) -> Option<usize> {
        self.by_code.get(code).copied()
    }

    pub fn keyword_count(&self) -> usize {
        self.by_keyword.len()
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.by_keyword.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, keyword: &str) -> bool {
        self.by_keyword.contains_key(keyword)
    }

    pub fn leaf_of(&self, keyword: &str) -> Option<usize> {
        self.by_keyword.get(keyword).copied()
    }

    pub fn aliases(&self) -> &[Alias] {
        &self.aliases
    }

    /// Number of distinct leaves (occupied codes).
    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf() && !n.values.is_empty()).count()
    }

    /// Keywords sharing a leaf with at least one other keyword.
    pub fn colliding_keywords(&self) -> usize {
        self.nodes.iter().filter(|n| n.values.len() > 1).map(|n| n.values.len()).sum()
    }

    /// Smallest depth of any keyword-bearing leaf.
    pub fn min_leaf_depth(&self) -> Option<u32> {
        self.nodes.iter().filter(|n| !n.values.is_empty()).map(|n| n.depth).min()
    }

    fn add_node(&mut self, tau: Code, parent: usize) -> usize {
        let idx = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.by_code.insert(tau.clone(), idx);
        self.nodes.push(SumTreeNode::new(tau, Some(parent), depth));
        let tau_of = |n: &SumTreeNode| n.tau.clone();
        let pos = self.nodes[parent]
            .children
            .binary_search_by(|&c| tau_of(&self.nodes[c]).cmp(&self.nodes[idx].tau))
            .unwrap_or_else(|p| p);
        self.nodes[parent].children.insert(pos, idx);
        idx
    }

    fn refresh_ns(&mut self, parent: usize) {
        let nc = self.nodes[parent].children.len();
        let kids = self.nodes[parent].children.clone();
        for k in kids {
            self.nodes[k].ns = (nc - 1) as u16;
        }
    }

    fn attach_keyword(&mut self, keyword: &str, leaf: usize) {
        self.nodes[leaf].values.push(keyword.to_string());
        self.by_keyword.insert(keyword.to_string(), leaf);
        let mut cur = Some(leaf);
        while let Some(i) = cur {
            self.nodes[i].members += 1;
            cur = self.nodes[i].parent;
        }
    }

    /// Leaf code and full sibling-count vector of a keyword.
    pub fn encode(&self, keyword: &str) -> Result<(Code, Scv)> {
        match self.cfg.policy {
            Policy::Hash => {
                let code = hash::hash_code(keyword, &self.cfg)?;
                let scv = match self.find(&Code::Bits(code)) {
                    Some(leaf) => self.path_scv(leaf),
                    // unseen keyword: every node below the root is a lone child
                    None => Scv::from_fields(self.cfg.c, vec![0; self.cfg.d as usize]),
                };
                Ok((Code::Bits(code), scv))
            }
            Policy::Meaning => {
                let leaf = self.leaf_of(keyword).ok_or_else(|| Error::UnknownKeyword(keyword.into()))?;
                Ok((self.nodes[leaf].tau.clone(), self.path_scv(leaf)))
            }
            Policy::Alph => {
                if !self.contains(keyword) {
                    return Err(Error::UnknownKeyword(keyword.into()));
                }
                let code = alph::leaf_code(keyword);
                let scv = self.alph_scv(&code);
                Ok((Code::Alph(code), scv))
            }
        }
    }

    /// Sibling counts of every node from depth 1 down to `leaf`.
    fn path_scv(&self, leaf: usize) -> Scv {
        let mut fields = Vec::with_capacity(self.nodes[leaf].depth as usize);
        let mut cur = leaf;
        while let Some(p) = self.nodes[cur].parent {
            fields.push(self.nodes[cur].ns);
            cur = p;
        }
        fields.reverse();
        Scv::from_fields(self.cfg.field_width(), fields)
    }

    /// The analytic sibling-count vector used when exact counts are not
    /// available to the advertiser.
    pub fn estimated_scv(&self, code: &Code) -> Result<Scv> {
        match (self.cfg.policy, code) {
            (Policy::Hash, Code::Bits(b)) => {
                let omega = omega_occupancy(self.keyword_count().max(1), self.cfg.hash_space());
                let fields = (1..=b.depth(self.cfg.c))
                    .map(|l| estimate_fscs_hash(omega, self.cfg.c, self.cfg.d, l))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Scv::from_fields(self.cfg.c, fields))
            }
            (Policy::Meaning, Code::Bits(b)) => {
                let full = ((1u32 << self.cfg.c) - 1) as u16;
                Ok(Scv::from_fields(self.cfg.c, vec![full; b.depth(self.cfg.c) as usize]))
            }
            (Policy::Alph, Code::Alph(s)) => {
                let fields =
                    (1..=s.chars().count() as u32).map(estimate_fscs_alph).collect::<Result<Vec<_>>>()?;
                Ok(Scv::from_fields(ALPH_FIELD_WIDTH, fields))
            }
            _ => Err(Error::UnknownCode(code.to_string())),
        }
    }

    /// Codes of the other children of `code`'s parent.
    pub fn siblings(&self, code: &Code) -> Result<Vec<Code>> {
        let idx = self.find(code).ok_or_else(|| Error::UnknownCode(code.to_string()))?;
        let Some(p) = self.nodes[idx].parent else { return Ok(Vec::new()) };
        Ok(self.nodes[p].children.iter().filter(|&&c| c != idx).map(|&c| self.nodes[c].tau.clone()).collect())
    }

    /// Assigns a code to a keyword that was not present at build time and
    /// records it in the tree.
    pub fn assign_code_new_keyword(&mut self, keyword: &str, vector: Option<&[f64]>) -> Result<(Code, Scv)> {
        if self.contains(keyword) {
            return self.encode(keyword);
        }
        match self.cfg.policy {
            Policy::Hash => {
                self.insert_hashed(keyword)?;
            }
            Policy::Alph => {
                self.alph_insert(keyword)?;
            }
            Policy::Meaning => {
                let v = vector.ok_or_else(|| Error::MissingEmbedding(keyword.into()))?;
                self.meaning_insert(keyword, v)?;
            }
        }
        self.encode(keyword)
    }

    /// Nested JSON view: `{tau, ns, values, children}`.
    pub fn export_json(&self) -> Value {
        self.export_node(ROOT)
    }

    fn export_node(&self, idx: usize) -> Value {
        let n = &self.nodes[idx];
        let mut v = json!({ "tau": n.tau.to_string(), "ns": n.ns });
        if !n.values.is_empty() {
            v["values"] = json!(n.values);
        }
        if !n.children.is_empty() {
            v["children"] = Value::Array(n.children.iter().map(|&c| self.export_node(c)).collect());
        }
        v
    }
}

/// Parent code for hash and meaning codes: drop the last `c` bits.
/// Alphabetical parents depend on the sibling set and are not derivable
/// from the code alone.
pub fn parent_code(code: &Code, policy: Policy, c: u32) -> Result<Code> {
    match (policy, code) {
        (Policy::Hash | Policy::Meaning, Code::Bits(b)) => Ok(Code::Bits(b.parent(c)?)),
        _ => Err(Error::UnknownCode(format!("{code} has no locally derivable parent"))),
    }
}

pub use hash::build_hash;
pub use meaning::build_meaning;

pub fn build_alph<S: AsRef<str>>(keywords: &[S]) -> Result<SumTree> {
    alph::build(keywords)
}

/// Convenience: build whichever tree `cfg` asks for.
pub fn build<S: AsRef<str>>(keywords: &[S], cfg: &TreeConfig, emb: &dyn EmbeddingProvider) -> Result<SumTree> {
    match cfg.policy {
        Policy::Alph => build_alph(keywords),
        Policy::Hash => build_hash(keywords, cfg),
        Policy::Meaning => build_meaning(keywords, emb, cfg),
    }
}

pub(crate) fn bits(code: &Code) -> BitCode {
    code.as_bits().expect("bit code")
}
