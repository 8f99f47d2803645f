//! Parameter sweeps: a worker pool over sweep points and CSV output in
//! point order.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::protocol::trace::Tracer;

use super::config::{ExperimentSpec, SimConfig};
use super::run::{run_scenario, Metrics, METRIC_COLUMNS};

/// Runs every config on up to `workers` threads. Results come back in
/// input order whatever the completion order.
pub fn run_points(points: &[SimConfig], workers: usize) -> Vec<Result<Metrics>> {
    let slots: Vec<Mutex<Option<Result<Metrics>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, points.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = points.get(i) else { break };
                let r = run_scenario(cfg, &mut Tracer::off()).map(|o| o.metrics);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every point ran")).collect()
}

/// Leading CSV columns: run name, seed, then each sweep axis.
fn key_columns(spec: &ExperimentSpec) -> Vec<String> {
    let mut cols = vec!["name".to_string(), "seed".to_string()];
    cols.extend(spec.axes.iter().map(|(k, _)| k.clone()).filter(|k| k != "name" && k != "seed"));
    cols
}

pub fn csv_header(spec: &ExperimentSpec) -> Vec<String> {
    let mut cols = key_columns(spec);
    cols.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

/// One CSV record for a finished point.
pub fn csv_record(spec: &ExperimentSpec, cfg: &SimConfig, m: &Metrics) -> Result<Vec<String>> {
    let mut row = key_columns(spec).iter().map(|k| cfg.get(k)).collect::<Result<Vec<_>>>()?;
    let v = serde_json::to_value(m).map_err(|e| Error::Config(e.to_string()))?;
    for col in METRIC_COLUMNS {
        row.push(match &v[*col] {
            serde_json::Value::Null => "NaN".to_string(),
            other => other.to_string(),
        });
    }
    Ok(row)
}

/// Runs the whole sweep and writes the CSV. Rows for points before the
/// first failure are written; the failure is returned.
pub fn run_sweep<W: Write>(spec: &ExperimentSpec, workers: usize, out: W) -> Result<usize> {
    let points = spec.points()?;
    let results = run_points(&points, workers);
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(csv_header(spec)).map_err(io)?;
    for (cfg, r) in points.iter().zip(results) {
        let m = r?;
        w.write_record(csv_record(spec, cfg, &m)?).map_err(io)?;
    }
    w.flush()?;
    Ok(points.len())
}
