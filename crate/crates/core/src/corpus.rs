//! Stream-annotation corpora: the text file format, a synthetic generator
//! and summary statistics.
//!
//! File format, one stream per line:
//! `stream_id<TAB>attr=value;attr=value;...` with absent attributes omitted.
//! An optional `#attrs<TAB>name;name;...` line fixes the attribute order;
//! other lines starting with `#` and blank lines are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::Annotation;

const SCHEMA_TAG: &str = "#attrs";

/// Topic stems: keywords of one topic share a stem so that character
/// trigram embeddings group them.
const STEMS: [&str; 16] = [
    "aqua", "pyro", "terra", "volt", "lumen", "sonic", "ferro", "cryo", "helio", "nano", "agri", "medi", "auto", "geo", "bio", "astro",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub attrs: Vec<String>,
    pub streams: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub streams: usize,
    pub attributes: usize,
    pub unique_per_attr: Vec<usize>,
    pub unique_total: usize,
    pub total_keywords: usize,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn valid_keyword(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', ';', '=', '\n', '\r'])
}

impl Corpus {
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a == name)
    }

    /// Distinct keywords of one attribute, sorted.
    pub fn keywords(&self, attr: usize) -> Vec<String> {
        let set: BTreeSet<&str> = self.streams.iter().filter_map(|s| s.values.get(attr).and_then(|v| v.as_deref())).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn stats(&self) -> CorpusStats {
        let unique_per_attr: Vec<usize> = (0..self.attrs.len()).map(|a| self.keywords(a).len()).collect();
        CorpusStats {
            streams: self.streams.len(),
            attributes: self.attrs.len(),
            unique_total: unique_per_attr.iter().sum(),
            unique_per_attr,
            total_keywords: self.streams.iter().map(|s| s.present().count()).sum(),
        }
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Corpus> {
        let mut attrs: Vec<String> = Vec::new();
        let mut fixed = false;
        let mut rows: Vec<(usize, String, Vec<(String, String)>)> = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let no = i + 1;
            let err = |msg: String| Error::Parse { line: no, msg };
            if let Some(rest) = line.strip_prefix(SCHEMA_TAG) {
                if fixed || !rows.is_empty() {
                    return Err(err("attribute schema must come first and only once".into()));
                }
                let rest = rest.strip_prefix('\t').ok_or_else(|| err("expected a tab after #attrs".into()))?;
                for name in rest.split(';').filter(|s| !s.is_empty()) {
                    if !valid_name(name) || attrs.iter().any(|a| a == name) {
                        return Err(err(format!("bad or repeated attribute name {name:?}")));
                    }
                    attrs.push(name.to_string());
                }
                fixed = true;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, body) = line.split_once('\t').ok_or_else(|| err("expected stream_id<TAB>descriptors".into()))?;
            if id.is_empty() || !valid_keyword(id) {
                return Err(err(format!("bad stream id {id:?}")));
            }
            if !ids.insert(id.to_string()) {
                return Err(err(format!("duplicate stream id {id:?}")));
            }
            let mut pairs = Vec::new();
            for part in body.split(';').filter(|p| !p.is_empty()) {
                let (a, v) = part.split_once('=').ok_or_else(|| err(format!("expected attr=value, got {part:?}")))?;
                if !valid_name(a) {
                    return Err(err(format!("bad attribute name {a:?}")));
                }
                if !valid_keyword(v) {
                    return Err(err(format!("bad keyword {v:?}")));
                }
                if pairs.iter().any(|(x, _): &(String, String)| x == a) {
                    return Err(err(format!("attribute {a:?} given twice")));
                }
                if !attrs.iter().any(|x| x == a) {
                    if fixed {
                        return Err(err(format!("attribute {a:?} not in the schema")));
                    }
                    attrs.push(a.to_string());
                }
                pairs.push((a.to_string(), v.to_string()));
            }
            rows.push((no, id.to_string(), pairs));
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 0, msg: "corpus holds no streams".into() });
        }
        let index: HashMap<&str, usize> = attrs.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let streams = rows
            .iter()
            .map(|(_, id, pairs)| {
                let mut values = vec![None; attrs.len()];
                for (a, v) in pairs {
                    values[index[a.as_str()]] = Some(v.clone());
                }
                Annotation::new(id.clone(), values)
            })
            .collect();
        Ok(Corpus { attrs, streams })
    }

    pub fn load(path: &Path) -> Result<Corpus> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SCHEMA_TAG}\t{}", self.attrs.join(";"))?;
        for s in &self.streams {
            let body: Vec<String> = s.present().map(|(i, v)| format!("{}={v}", self.attrs[i])).collect();
            writeln!(w, "{}\t{}", s.stream_id, body.join(";"))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Reads `attribute_name<TAB>keyword` records into per-attribute keyword
/// lists (first-appearance order, duplicates dropped).
pub fn parse_keywords<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let (a, k) = line.split_once('\t').ok_or_else(|| err("expected attribute<TAB>keyword".into()))?;
        if !valid_name(a) || !valid_keyword(k) {
            return Err(err(format!("bad record {line:?}")));
        }
        if seen.insert((a.to_string(), k.to_string())) {
            out.entry(a.to_string()).or_default().push(k.to_string());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthOptions {
    pub n_streams: usize,
    pub n_attrs: usize,
    pub vocab_size: usize,
    pub zipf_s: f64,
    /// Number of keyword topics; 0 draws every keyword from one Zipf law.
    pub topics: usize,
    /// Probability that a present value comes from the stream's topic.
    pub topic_affinity: f64,
    /// Mean absence probability. Attribute `a` is absent with probability
    /// rising linearly from 0 to twice the mean, so low-index attributes are
    /// nearly always filled and high-index ones are sparse.
    pub absent_prob: f64,
    /// Ratio between the largest and smallest per-attribute vocabulary;
    /// sizes are geometric around `vocab_size` and shuffled over attributes.
    pub vocab_spread: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { n_streams: 1000, n_attrs: 15, vocab_size: 400, zipf_s: 1.0, topics: 14, topic_affinity: 0.85, absent_prob: 0.4, vocab_spread: 1.0, seed: 1 }
    }
}

pub fn attr_name(i: usize) -> String {
    format!("attr{i:02}")
}

/// Name of keyword `w` of attribute `a` with `topics` topics.
fn keyword_name(a: usize, w: usize, topics: usize) -> String {
    let t = if topics == 0 { w % STEMS.len() } else { w % topics };
    format!("{}{}q{a}n{}", STEMS[t % STEMS.len()], t / STEMS.len(), w)
}

/// Zipf keyword draws per attribute with no topic structure.
pub fn synth_corpus(n_streams: usize, n_attrs: usize, vocab_size: usize, zipf_s: f64, seed: u64) -> Result<Corpus> {
    synth_corpus_with(&SynthOptions { n_streams, n_attrs, vocab_size, zipf_s, topics: 0, seed, ..SynthOptions::default() })
}

pub fn synth_corpus_with(o: &SynthOptions) -> Result<Corpus> {
    if o.n_streams == 0 || o.n_attrs == 0 || o.vocab_size == 0 || o.zipf_s <= 0.0 || o.vocab_spread < 1.0 {
        return Err(Error::Config("corpus parameters must be positive".into()));
    }
    if !(0.0..1.0).contains(&o.absent_prob) || !(0.0..=1.0).contains(&o.topic_affinity) {
        return Err(Error::Config("probabilities out of range".into()));
    }
    if o.topics > o.vocab_size {
        return Err(Error::Config("more topics than keywords".into()));
    }
    let zerr = |e: rand_distr::ZipfError| Error::Config(e.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut rank: Vec<usize> = (0..o.n_attrs).collect();
    rank.shuffle(&mut rng);
    let vocab: Vec<usize> = rank
        .iter()
        .map(|&r| {
            let x = if o.n_attrs == 1 { 0.5 } else { r as f64 / (o.n_attrs - 1) as f64 };
            ((o.vocab_size as f64 * o.vocab_spread.powf(x - 0.5)).round() as usize).max(o.topics).max(1)
        })
        .collect();
    let global = vocab.iter().map(|&v| Zipf::new(v as f64, o.zipf_s).map_err(zerr)).collect::<Result<Vec<_>>>()?;
    let per_topic = if o.topics > 0 {
        Some(vocab.iter().map(|&v| Zipf::new((v / o.topics) as f64, o.zipf_s).map_err(zerr)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let absent: Vec<f64> = (0..o.n_attrs)
        .map(|a| if o.n_attrs == 1 { o.absent_prob } else { (2.0 * o.absent_prob * a as f64 / (o.n_attrs - 1) as f64).min(0.95) })
        .collect();
    let names: Vec<Vec<String>> = (0..o.n_attrs).map(|a| (0..vocab[a]).map(|w| keyword_name(a, w, o.topics)).collect()).collect();
    let streams = (0..o.n_streams)
        .map(|i| {
            let topic = if o.topics > 0 { rng.random_range(0..o.topics) } else { 0 };
            let mut values: Vec<Option<String>> = (0..o.n_attrs)
                .map(|a| {
                    if rng.random_bool(absent[a]) {
                        return None;
                    }
                    let w = match &per_topic {
                        Some(z) if rng.random_bool(o.topic_affinity) => (z[a].sample(&mut rng) as usize - 1) * o.topics + topic,
                        _ => global[a].sample(&mut rng) as usize - 1,
                    };
                    Some(names[a][w.min(vocab[a] - 1)].clone())
                })
                .collect();
            if values.iter().all(Option::is_none) {
                let a = rng.random_range(0..o.n_attrs);
                values[a] = Some(names[a][global[a].sample(&mut rng) as usize - 1].clone());
            }
            Annotation::new(format!("s{i:06}"), values)
        })
        .collect();
    Ok(Corpus { attrs: (0..o.n_attrs).map(attr_name).collect(), streams })
}
