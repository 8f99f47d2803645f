use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sumroute::corpus::{Corpus, SynthOptions};
use sumroute::netsim::{run_scenario, run_sweep, ExperimentSpec};
use sumroute::protocol::trace::Tracer;
use sumroute::sumtree::{build, EmbeddingProvider, FileEmbedding, Policy, TreeConfig, TrigramEmbedding};
use sumroute::Error;

#[derive(Parser)]
#[command(name = "sumroute", version, about = "Summarization-compressed routing experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario file (`key = value` lines, optional `[sweep]` section).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cross-check this many queries per run against a global scan.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "50")]
    self_check: Option<usize>,
    /// Write the message trace of a single run to this file.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 2000)]
        streams: usize,
        #[arg(long, default_value_t = 15)]
        attrs: usize,
        #[arg(long, default_value_t = 400)]
        vocab: usize,
        #[arg(long, default_value_t = 1.0)]
        zipf: f64,
        /// Stream topics (clamped to the vocabulary size).
        #[arg(long, default_value_t = 14)]
        topics: usize,
    },
    /// Print corpus statistics.
    Stats { corpus: PathBuf },
    /// Build one tree per attribute and print every keyword's code.
    TreeBuild {
        corpus: PathBuf,
        #[arg(long, default_value = "hash")]
        policy: String,
        #[arg(long, default_value_t = 2)]
        c: u32,
        #[arg(long, default_value_t = 5)]
        d: u32,
        #[arg(long, default_value_t = 0)]
        b: u32,
        /// Only this attribute.
        #[arg(long)]
        attr: Option<String>,
        /// Word-vector file for meaning trees (`word x1 x2 ...` per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Run a scenario or sweep and write one CSV row per point.
    Run {
        /// Extra `key=value` settings applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads for sweeps (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a single scenario and write its message trace.
    Trace {
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_spec(common: &Common, set: &[String]) -> Result<ExperimentSpec, Error> {
    let mut spec = match &common.config {
        Some(p) => ExperimentSpec::parse(&std::fs::read_to_string(p)?)?,
        None => ExperimentSpec::parse("")?,
    };
    for kv in set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set {kv:?}: expected KEY=VALUE")))?;
        spec.base.set(k.trim(), v.trim())?;
        spec.axes.retain(|(a, _)| a != k.trim());
    }
    if let Some(s) = common.seed {
        spec.base.seed = s;
        spec.axes.retain(|(a, _)| a != "seed");
    }
    if let Some(n) = common.self_check {
        spec.base.self_check = n;
    }
    if let Some(p) = &spec.base.corpus {
        if !p.exists() {
            return Err(Error::Io(io::Error::new(io::ErrorKind::NotFound, format!("corpus {} not found", p.display()))));
        }
    }
    Ok(spec)
}

fn run_single(spec: &ExperimentSpec, sink: &mut dyn Write) -> Result<sumroute::netsim::Metrics, Error> {
    let points = spec.points()?;
    let [cfg] = points.as_slice() else {
        return Err(Error::Config(format!("tracing needs a single run, the sweep has {} points", points.len())));
    };
    let out = run_scenario(cfg, &mut Tracer::new(Some(&mut *sink)))?;
    sink.flush()?;
    Ok(out.metrics)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let common = &cli.common;
    match cli.cmd {
        Cmd::Synth { streams, attrs, vocab, zipf, topics } => {
            let o = SynthOptions {
                n_streams: streams,
                n_attrs: attrs,
                vocab_size: vocab,
                zipf_s: zipf,
                topics: topics.min(vocab).max(1),
                seed: common.seed.unwrap_or(1),
                ..SynthOptions::default()
            };
            let corpus = sumroute::corpus::synth_corpus_with(&o)?;
            let mut w = open_out(common.out.as_deref())?;
            corpus.write(&mut w)?;
            w.flush()?;
        }
        Cmd::Stats { corpus } => {
            let s = Corpus::load(&corpus)?.stats();
            let mut w = open_out(common.out.as_deref())?;
            writeln!(w, "streams\t{}", s.streams)?;
            writeln!(w, "attributes\t{}", s.attributes)?;
            writeln!(w, "unique_keywords\t{}", s.unique_total)?;
            writeln!(w, "total_keywords\t{}", s.total_keywords)?;
            for (i, u) in s.unique_per_attr.iter().enumerate() {
                writeln!(w, "unique[{i}]\t{u}")?;
            }
            w.flush()?;
        }
        Cmd::TreeBuild { corpus, policy, c, d, b, attr, embeddings } => {
            let corpus = Corpus::load(&corpus)?;
            let policy: Policy = policy.parse()?;
            let seed = common.seed.unwrap_or(1);
            let cfg = match policy {
                Policy::Hash => TreeConfig::hash(c, d, b, seed),
                Policy::Meaning => TreeConfig::meaning(c, b, seed),
                Policy::Alph => TreeConfig::alph(),
            };
            let emb: Box<dyn EmbeddingProvider> = match embeddings {
                Some(p) => Box::new(FileEmbedding::from_reader(BufReader::new(File::open(p)?))?),
                None => Box::new(TrigramEmbedding),
            };
            let mut w = open_out(common.out.as_deref())?;
            writeln!(w, "attr\tkeyword\tcode\tscv")?;
            for (a, name) in corpus.attrs.iter().enumerate() {
                if attr.as_ref().is_some_and(|x| x != name) {
                    continue;
                }
                let kws = corpus.keywords(a);
                if kws.is_empty() {
                    continue;
                }
                let tree = build(&kws, &cfg, emb.as_ref())?;
                for kw in &kws {
                    let (code, scv) = tree.encode(kw)?;
                    writeln!(w, "{name}\t{kw}\t{code}\t{scv}")?;
                }
            }
            w.flush()?;
        }
        Cmd::Run { ref set, jobs } => {
            let spec = load_spec(common, set)?;
            let w = open_out(common.out.as_deref())?;
            match &common.trace {
                Some(t) => {
                    let m = run_single(&spec, &mut BufWriter::new(File::create(t)?))?;
                    let cfg = &spec.points()?[0];
                    let mut csv = csv::Writer::from_writer(w);
                    let io = |e: csv::Error| Error::Io(e.into());
                    csv.write_record(sumroute::netsim::csv_header(&spec)).map_err(io)?;
                    csv.write_record(sumroute::netsim::csv_record(&spec, cfg, &m)?).map_err(io)?;
                    csv.flush()?;
                }
                None => {
                    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
                    run_sweep(&spec, jobs, w)?;
                }
            }
        }
        Cmd::Trace { ref set } => {
            let spec = load_spec(common, set)?;
            let path = common.out.as_deref().or(common.trace.as_deref());
            run_single(&spec, &mut open_out(path)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Invariant("x".into())), 2);
        assert_eq!(exit_code(&Error::Io(io::Error::other("x"))), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Parse { line: 1, msg: "x".into() }), 1);
    }
}
