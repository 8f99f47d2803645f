//! Node-level discovery logic: matching semantics, advertisement (AdvP)
//! and query forwarding (QFP).

mod node;
mod table;
pub mod trace;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::code::{Code, Scv};
use crate::error::{Error, Result};
use crate::sumtree::{Policy, SumTree};

pub use node::{effective_b, next_hops, InsertCounts, NodeState, QueryOutcome};
pub use table::AttrTable;

pub type NodeId = u32;
pub type StreamIdx = u32;

/// A data stream's metadata: one optional keyword per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub stream_id: String,
    /// Indexed by attribute; `None` is the absent value.
    pub values: Vec<Option<String>>,
}

impl Annotation {
    pub fn new(stream_id: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Annotation { stream_id: stream_id.into(), values }
    }

    pub fn present(&self) -> impl Iterator<Item = (usize, &str)> {
        self.values.iter().enumerate().filter_map(|(i, v)| v.as_deref().map(|v| (i, v)))
    }
}

/// Equal values, or either side absent.
pub fn attr_match(q: Option<&str>, ds: Option<&str>) -> bool {
    match (q, ds) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    }
}

/// Whether `count` matches out of `n` specified attributes reach `alpha`.
pub fn meets_alpha(count: usize, n: usize, alpha: f64) -> bool {
    count as f64 + 1e-9 >= alpha * n as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedDescriptor {
    pub attr: usize,
    pub code: Code,
    pub scv: Scv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTerm {
    pub raw: String,
    /// Routing code; `None` for raw-keyword (nCAC) routing.
    pub code: Option<Code>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: u64,
    pub src: NodeId,
    pub alpha: f64,
    /// Remaining forwarding hops (`u32::MAX` for unbounded).
    pub hop_bound: u32,
    /// Indexed by attribute; `None` leaves the attribute unconstrained.
    pub terms: Vec<Option<QueryTerm>>,
}

impl Query {
    pub fn specified(&self) -> usize {
        self.terms.iter().filter(|t| t.is_some()).count()
    }
}

/// Local alpha-match on raw keywords.
pub fn alpha_match_local(q: &Query, an: &Annotation) -> bool {
    let n = q.specified();
    let hits = q
        .terms
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.as_ref().map(|t| (i, t)))
        .filter(|(i, t)| attr_match(Some(&t.raw), an.values.get(*i).and_then(|v| v.as_deref())))
        .count();
    meets_alpha(hits, n, q.alpha)
}

/// Alpha-match comparing routing codes instead of keywords, so keywords
/// sharing a code count as equal.
pub fn alpha_match_coded(q: &Query, coded: &[Option<CodedDescriptor>]) -> bool {
    let n = q.specified();
    let hits = q
        .terms
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.as_ref().map(|t| (i, t)))
        .filter(|(i, t)| match (&t.code, coded.get(*i).and_then(|c| c.as_ref())) {
            (Some(qc), Some(dc)) => *qc == dc.code,
            (None, Some(_)) => false,
            _ => true,
        })
        .count();
    meets_alpha(hits, n, q.alpha)
}

/// Advertisement payload for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvMsg {
    pub adv_id: u64,
    pub stream: StreamIdx,
    pub descriptors: Vec<CodedDescriptor>,
    /// Attributes the stream leaves absent.
    pub absent: Vec<usize>,
    pub hops_remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Per-(descriptor, stream) entries keyed by raw keywords.
    NCac,
    /// Descriptor-only hash-coded entries, never summarized.
    NSum,
    /// Summarized tables over the given tree policy.
    Sp(Policy),
    /// `NSum` bounded to `cap` entries per attribute with LRU eviction.
    GsdBounded { cap: usize },
}

impl Mode {
    pub fn name(&self) -> String {
        match self {
            Mode::NCac => "ncac".into(),
            Mode::NSum => "nsum".into(),
            Mode::Sp(Policy::Alph) => "alph".into(),
            Mode::Sp(Policy::Hash) => "hash".into(),
            Mode::Sp(Policy::Meaning) => "meaning".into(),
            Mode::GsdBounded { cap } => format!("gsd{cap}"),
        }
    }

    /// The tree policy whose codes the mode routes on.
    pub fn policy(&self) -> Option<Policy> {
        match self {
            Mode::NCac => None,
            Mode::NSum | Mode::GsdBounded { .. } => Some(Policy::Hash),
            Mode::Sp(p) => Some(*p),
        }
    }

    pub fn summarizes(&self) -> bool {
        matches!(self, Mode::Sp(_))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "ncac" => Ok(Mode::NCac),
            "nsum" | "cac" => Ok(Mode::NSum),
            "alph" | "hash" | "meaning" => Ok(Mode::Sp(s.parse()?)),
            _ => match s.strip_prefix("gsd") {
                Some(n) => n.parse().map(|cap| Mode::GsdBounded { cap }).map_err(|_| Error::Config(format!("bad mode {s:?}"))),
                None => Err(Error::Config(format!("unknown mode {s:?}"))),
            },
        }
    }
}

/// How advertisements spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvPolicy {
    /// A node accepts one stream's advertisement only in the round it
    /// first arrives, records every sender of that round as a next hop,
    /// and forwards once to its other neighbors.
    FirstRound,
    /// Each arrival is processed on its own; descriptors the table
    /// already routes through the sender are not forwarded further.
    Suppress,
}

/// When a summarizing table compresses itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SummarizeTrigger {
    /// After each insert, along the inserted code's ancestors.
    OnInsert,
    /// Whole-table pass whenever a table exceeds the given entry count.
    SizeBound(usize),
    /// Whole-table pass when the caller settles the tables.
    Settle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScvMode {
    Exact,
    Estimated,
}

/// Maps keywords to codes through the per-attribute trees (the tree
/// server of the network).
#[derive(Debug, Clone)]
pub struct Codec {
    pub trees: Vec<Arc<SumTree>>,
    pub scv_mode: ScvMode,
}

impl Codec {
    pub fn encode(&self, attr: usize, keyword: &str) -> Result<CodedDescriptor> {
        let tree = self.trees.get(attr).ok_or_else(|| Error::Config(format!("no tree for attribute {attr}")))?;
        let (code, exact) = tree.encode(keyword)?;
        let scv = match self.scv_mode {
            ScvMode::Exact => exact,
            ScvMode::Estimated => tree.estimated_scv(&code)?,
        };
        Ok(CodedDescriptor { attr, code, scv })
    }

    pub fn encode_annotation(&self, an: &Annotation) -> Result<Vec<Option<CodedDescriptor>>> {
        an.values.iter().enumerate().map(|(i, v)| v.as_deref().map(|k| self.encode(i, k)).transpose()).collect()
    }
}

/// Node-wide settings shared by every node of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub mode: Mode,
    pub cov: f64,
    pub trigger: SummarizeTrigger,
    pub adv_policy: AdvPolicy,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(terms: &[Option<&str>], alpha: f64) -> Query {
        Query {
            id: 1,
            src: 0,
            alpha,
            hop_bound: u32::MAX,
            terms: terms.iter().map(|t| t.map(|r| QueryTerm { raw: r.into(), code: None })).collect(),
        }
    }

    #[test]
    fn attr_match_truth_table() {
        assert!(attr_match(Some("x"), Some("x")));
        assert!(attr_match(Some("x"), None));
        assert!(attr_match(None, Some("y")));
        assert!(!attr_match(Some("x"), Some("y")));
    }

    #[test]
    fn alpha_over_specified_attributes() {
        let an = Annotation::new("s", (0..15).map(|i| Some(format!("v{i}"))).collect());
        let all: Vec<Option<String>> = (0..15).map(|i| Some(format!("v{i}"))).collect();
        let mut terms: Vec<Option<&str>> = all.iter().map(|v| v.as_deref()).collect();
        assert!(alpha_match_local(&q(&terms, 1.0), &an));
        terms[3] = Some("other");
        assert!(!alpha_match_local(&q(&terms, 1.0), &an));
        assert!(alpha_match_local(&q(&terms, 14.0 / 15.0), &an));
        // unspecified attributes impose nothing
        let sparse = vec![Some("v0"), None, None];
        assert!(alpha_match_local(&q(&sparse, 1.0), &an));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::NCac, Mode::NSum, Mode::Sp(Policy::Hash), Mode::Sp(Policy::Alph), Mode::Sp(Policy::Meaning), Mode::GsdBounded { cap: 50 }] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
    }
}
