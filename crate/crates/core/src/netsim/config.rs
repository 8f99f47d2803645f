use std::path::PathBuf;

use serde::Serialize;

use crate::corpus::SynthOptions;
use crate::error::{Error, Result};
use crate::protocol::{AdvPolicy, Mode, ScvMode, SummarizeTrigger};
use crate::sumtree::Policy;

use super::placement::PlacementMode;

/// When the network rebuilds its trees and tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ReestablishTrigger {
    /// More than this many keywords added since the last build.
    DescriptorCount(usize),
    /// Unique keywords over code capacity above this ratio.
    DensityRatio(f64),
    /// Mean leaf-to-centroid distance above this value (Meaning only).
    IntraClusterDistance(f64),
    /// Every this many growth steps.
    Periodic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReestablishPolicy {
    pub trigger: ReestablishTrigger,
    /// Hash depth after a rebuild; `None` picks the smallest depth that
    /// brings the density ratio back to at most 1/4.
    pub new_d: Option<u32>,
}

pub const INF: u32 = u32::MAX;

/// Every parameter of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub name: String,
    pub n: usize,
    pub mode: Mode,
    pub cov: f64,
    pub c: u32,
    pub d: u32,
    pub b: u32,
    /// Target nominal hash density; overrides `d` per attribute when set.
    pub density: Option<f64>,
    pub alpha: f64,
    pub b_ad: u32,
    pub b_q: u32,
    pub scv_mode: ScvMode,
    pub trigger: SummarizeTrigger,
    pub adv_policy: AdvPolicy,
    pub placement: PlacementMode,
    pub regions: usize,
    pub clusters: usize,
    pub streams: usize,
    pub attrs: usize,
    pub vocab: usize,
    pub zipf_s: f64,
    pub topics: usize,
    pub topic_affinity: f64,
    pub absent_prob: f64,
    pub vocab_spread: f64,
    pub corpus: Option<PathBuf>,
    pub queries: usize,
    pub seed: u64,
    pub degree_weights: Option<Vec<f64>>,
    /// Fractional growth of nodes and streams per step.
    pub growth_rate: f64,
    pub growth_steps: usize,
    /// Vocabulary growth factor per step for newly added streams.
    pub vocab_growth: f64,
    pub reestablish: Option<ReestablishPolicy>,
    /// Also build an unsummarized twin to report the compression ratio.
    pub compare_nsum: bool,
    /// Queries cross-checked against a global scan (0 disables).
    pub self_check: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            name: "default".into(),
            n: 500,
            mode: Mode::Sp(Policy::Hash),
            cov: 1.0,
            c: 2,
            d: 5,
            b: 2,
            density: None,
            alpha: 1.0,
            b_ad: INF,
            b_q: INF,
            scv_mode: ScvMode::Exact,
            trigger: SummarizeTrigger::Settle,
            adv_policy: AdvPolicy::FirstRound,
            placement: PlacementMode::Region,
            regions: 7,
            clusters: 14,
            streams: 2000,
            attrs: 15,
            vocab: 400,
            zipf_s: 1.0,
            topics: 14,
            topic_affinity: 0.85,
            absent_prob: 0.4,
            vocab_spread: 1.0,
            corpus: None,
            queries: 200,
            seed: 1,
            degree_weights: None,
            growth_rate: 0.0,
            growth_steps: 0,
            vocab_growth: 1.0,
            reestablish: None,
            compare_nsum: false,
            self_check: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_hops(key: &str, v: &str) -> Result<u32> {
    match v {
        "inf" | "infinity" | "unbounded" => Ok(INF),
        _ => parse_num(key, v),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

/// Accepts decimals and simple fractions such as `3/4`.
pub fn parse_fraction(key: &str, v: &str) -> Result<f64> {
    match v.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
            if b == 0.0 {
                return Err(Error::Config(format!("{key}: division by zero")));
            }
            Ok(a / b)
        }
        None => parse_num(key, v),
    }
}

fn hops_str(h: u32) -> String {
    if h == INF {
        "inf".into()
    } else {
        h.to_string()
    }
}

pub const KEYS: &[&str] = &[
    "name", "n", "mode", "cov", "c", "d", "b", "density", "alpha", "b_ad", "b_q", "scv", "trigger", "adv", "placement", "regions", "clusters",
    "streams", "attrs", "vocab", "zipf_s", "topics", "topic_affinity", "absent_prob", "vocab_spread", "corpus", "queries", "seed", "degree_weights",
    "growth_rate", "growth_steps", "vocab_growth", "reestablish", "new_d", "compare_nsum", "self_check",
];

impl SimConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "name" => self.name = v.to_string(),
            "n" => self.n = parse_num(key, v)?,
            "mode" | "policy" => self.mode = v.parse()?,
            "cov" => self.cov = parse_fraction(key, v)?,
            "c" => self.c = parse_num(key, v)?,
            "d" => self.d = parse_num(key, v)?,
            "b" => self.b = parse_num(key, v)?,
            "density" => self.density = if v == "none" { None } else { Some(parse_fraction(key, v)?) },
            "alpha" => self.alpha = parse_fraction(key, v)?,
            "b_ad" => self.b_ad = parse_hops(key, v)?,
            "b_q" => self.b_q = parse_hops(key, v)?,
            "scv" => {
                self.scv_mode = match v {
                    "exact" => ScvMode::Exact,
                    "estimated" => ScvMode::Estimated,
                    _ => return Err(Error::Config(format!("scv: expected exact or estimated, got {v:?}"))),
                }
            }
            "trigger" => {
                self.trigger = match v.split_once(':') {
                    None if v == "settle" => SummarizeTrigger::Settle,
                    None if v == "insert" => SummarizeTrigger::OnInsert,
                    Some(("size", n)) => SummarizeTrigger::SizeBound(parse_num(key, n)?),
                    _ => return Err(Error::Config(format!("trigger: expected settle, insert or size:N, got {v:?}"))),
                }
            }
            "adv" => {
                self.adv_policy = match v {
                    "first" | "first_round" => AdvPolicy::FirstRound,
                    "suppress" => AdvPolicy::Suppress,
                    _ => return Err(Error::Config(format!("adv: expected first or suppress, got {v:?}"))),
                }
            }
            "placement" => {
                self.placement = match v {
                    "random" => PlacementMode::Random,
                    "region" => PlacementMode::Region,
                    _ => return Err(Error::Config(format!("placement: expected random or region, got {v:?}"))),
                }
            }
            "regions" => self.regions = parse_num(key, v)?,
            "clusters" => self.clusters = parse_num(key, v)?,
            "streams" => self.streams = parse_num(key, v)?,
            "attrs" => self.attrs = parse_num(key, v)?,
            "vocab" => self.vocab = parse_num(key, v)?,
            "zipf_s" => self.zipf_s = parse_num(key, v)?,
            "topics" => self.topics = parse_num(key, v)?,
            "topic_affinity" => self.topic_affinity = parse_num(key, v)?,
            "absent_prob" => self.absent_prob = parse_num(key, v)?,
            "vocab_spread" => self.vocab_spread = parse_num(key, v)?,
            "corpus" => self.corpus = if v == "none" || v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "queries" => self.queries = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "degree_weights" => {
                self.degree_weights = if v == "uniform" {
                    None
                } else {
                    Some(v.split(',').map(|w| parse_num(key, w.trim())).collect::<Result<_>>()?)
                }
            }
            "growth_rate" => self.growth_rate = parse_fraction(key, v)?,
            "growth_steps" => self.growth_steps = parse_num(key, v)?,
            "vocab_growth" => self.vocab_growth = parse_num(key, v)?,
            "reestablish" => {
                let trigger = match v.split_once(':') {
                    None if v == "none" => {
                        self.reestablish = None;
                        return Ok(());
                    }
                    Some(("descriptors", t)) => ReestablishTrigger::DescriptorCount(parse_num(key, t)?),
                    Some(("density", t)) => ReestablishTrigger::DensityRatio(parse_fraction(key, t)?),
                    Some(("distance", t)) => ReestablishTrigger::IntraClusterDistance(parse_num(key, t)?),
                    Some(("periodic", t)) => ReestablishTrigger::Periodic(parse_num(key, t)?),
                    _ => return Err(Error::Config(format!("reestablish: unknown trigger {v:?}"))),
                };
                let new_d = self.reestablish.and_then(|r| r.new_d);
                self.reestablish = Some(ReestablishPolicy { trigger, new_d });
            }
            "new_d" => {
                let d = if v == "auto" { None } else { Some(parse_num(key, v)?) };
                match &mut self.reestablish {
                    Some(r) => r.new_d = d,
                    None => self.reestablish = Some(ReestablishPolicy { trigger: ReestablishTrigger::Periodic(usize::MAX), new_d: d }),
                }
            }
            "compare_nsum" => self.compare_nsum = parse_bool(key, v)?,
            "self_check" => self.self_check = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of `key`, in the syntax `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let r = self.reestablish;
        Ok(match key {
            "name" => self.name.clone(),
            "n" => self.n.to_string(),
            "mode" | "policy" => self.mode.name(),
            "cov" => self.cov.to_string(),
            "c" => self.c.to_string(),
            "d" => self.d.to_string(),
            "b" => self.b.to_string(),
            "density" => self.density.map_or("none".into(), |x| x.to_string()),
            "alpha" => self.alpha.to_string(),
            "b_ad" => hops_str(self.b_ad),
            "b_q" => hops_str(self.b_q),
            "scv" => match self.scv_mode {
                ScvMode::Exact => "exact".into(),
                ScvMode::Estimated => "estimated".into(),
            },
            "trigger" => match self.trigger {
                SummarizeTrigger::Settle => "settle".into(),
                SummarizeTrigger::OnInsert => "insert".into(),
                SummarizeTrigger::SizeBound(n) => format!("size:{n}"),
            },
            "adv" => match self.adv_policy {
                AdvPolicy::FirstRound => "first".into(),
                AdvPolicy::Suppress => "suppress".into(),
            },
            "placement" => match self.placement {
                PlacementMode::Random => "random".into(),
                PlacementMode::Region => "region".into(),
            },
            "regions" => self.regions.to_string(),
            "clusters" => self.clusters.to_string(),
            "streams" => self.streams.to_string(),
            "attrs" => self.attrs.to_string(),
            "vocab" => self.vocab.to_string(),
            "zipf_s" => self.zipf_s.to_string(),
            "topics" => self.topics.to_string(),
            "topic_affinity" => self.topic_affinity.to_string(),
            "absent_prob" => self.absent_prob.to_string(),
            "vocab_spread" => self.vocab_spread.to_string(),
            "corpus" => self.corpus.as_ref().map_or("none".into(), |p| p.display().to_string()),
            "queries" => self.queries.to_string(),
            "seed" => self.seed.to_string(),
            "degree_weights" => self.degree_weights.as_ref().map_or("uniform".into(), |w| {
                w.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
            }),
            "growth_rate" => self.growth_rate.to_string(),
            "growth_steps" => self.growth_steps.to_string(),
            "vocab_growth" => self.vocab_growth.to_string(),
            "reestablish" => match r.map(|r| r.trigger) {
                None | Some(ReestablishTrigger::Periodic(usize::MAX)) => "none".into(),
                Some(ReestablishTrigger::DescriptorCount(t)) => format!("descriptors:{t}"),
                Some(ReestablishTrigger::DensityRatio(t)) => format!("density:{t}"),
                Some(ReestablishTrigger::IntraClusterDistance(t)) => format!("distance:{t}"),
                Some(ReestablishTrigger::Periodic(p)) => format!("periodic:{p}"),
            },
            "new_d" => r.and_then(|r| r.new_d).map_or("auto".into(), |d| d.to_string()),
            "compare_nsum" => self.compare_nsum.to_string(),
            "self_check" => self.self_check.to_string(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.cov) || self.cov == 0.0 {
            return bad("cov must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if self.c == 0 || self.c > 8 || self.b % self.c != 0 {
            return bad("need 1 <= c <= 8 and b a multiple of c");
        }
        if self.density.is_none() && (self.d == 0 || self.c * self.d > 62) {
            return bad("need 1 <= d and c*d <= 62");
        }
        if self.density.is_some_and(|x| x <= 0.0) {
            return bad("density must be positive");
        }
        if self.placement == PlacementMode::Region && (self.regions == 0 || self.regions > self.n) {
            return bad("regions must be in 1..=n");
        }
        if self.growth_rate < 0.0 {
            return bad("growth_rate must be non-negative");
        }
        Ok(())
    }

    pub fn synth_options(&self) -> SynthOptions {
        SynthOptions {
            n_streams: self.streams,
            n_attrs: self.attrs,
            vocab_size: self.vocab,
            zipf_s: self.zipf_s,
            topics: self.topics,
            topic_affinity: self.topic_affinity,
            absent_prob: self.absent_prob,
            vocab_spread: self.vocab_spread,
            seed: sub_seed(self.seed, 1),
        }
    }
}

/// Independent seed for one component of a run.
pub fn sub_seed(seed: u64, lane: u64) -> u64 {
    let mut z = seed.wrapping_add(lane.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A base configuration plus sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    /// (key, values), kept sorted by key.
    pub axes: Vec<(String, Vec<String>)>,
}

impl ExperimentSpec {
    /// Parses `key = value` lines. Keys under a `[sweep]` section take
    /// comma-separated value lists; other `[section]` headers only group.
    pub fn parse(text: &str) -> Result<ExperimentSpec> {
        let mut base = SimConfig::default();
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        let mut in_sweep = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(sec) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                in_sweep = sec.trim() == "sweep";
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let k = if k == "policy" { "mode" } else { k };
            if in_sweep {
                let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                if values.is_empty() {
                    return Err(Error::Config(format!("line {}: empty sweep axis {k}", i + 1)));
                }
                // check each value parses
                for val in &values {
                    base.clone().set(k, val).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
                }
                axes.retain(|(key, _)| key != k);
                axes.push((k.to_string(), values));
            } else {
                base.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
            }
        }
        axes.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(ExperimentSpec { base, axes })
    }

    /// Replaces (or adds) one axis.
    pub fn set_axis(&mut self, key: &str, values: Vec<String>) {
        self.axes.retain(|(k, _)| k != key);
        self.axes.push((key.to_string(), values));
        self.axes.sort_by(|a, b| a.0.cmp(&b.0));
    }

    /// Every sweep point, axes in key order with the last varying fastest.
    pub fn points(&self) -> Result<Vec<SimConfig>> {
        let mut out = vec![self.base.clone()];
        for (k, vals) in &self.axes {
            let mut next = Vec::with_capacity(out.len() * vals.len());
            for cfg in &out {
                for v in vals {
                    let mut c = cfg.clone();
                    c.set(k, v)?;
                    next.push(c);
                }
            }
            out = next;
        }
        for c in &out {
            c.validate()?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let mut c = SimConfig::default();
        c.set("reestablish", "density:1/2").unwrap();
        c.set("new_d", "7").unwrap();
        c.set("density", "1/8").unwrap();
        for k in KEYS {
            let v = c.get(k).unwrap();
            let mut d = c.clone();
            d.set(k, &v).unwrap();
            assert_eq!(d, c, "{k}");
        }
    }

    #[test]
    fn sweep_cross_product_in_key_order() {
        let spec = ExperimentSpec::parse("n = 50\n[sweep]\npolicy = hash,meaning,alph,nsum\ncov = 1/2, 3/4, 1\n").unwrap();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(spec.axes[0].0, "cov");
        assert_eq!((pts[0].cov, pts[0].mode.name()), (0.5, "hash".to_string()));
        assert_eq!(pts[1].mode.name(), "meaning");
        assert_eq!(pts[4].cov, 0.75);
        assert!(pts.iter().all(|p| p.n == 50));
    }

    #[test]
    fn errors_name_the_line() {
        let e = ExperimentSpec::parse("n = 5\ncov = lots\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
        assert!(ExperimentSpec::parse("bogus = 1\n").is_err());
    }
}
