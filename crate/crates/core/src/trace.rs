//! Convergence trace: one record per executor call, written as CSV, and the
//! run-comparison metrics computed from two traces.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config_space::ConfigId;
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 4] = ["elapsed_s", "best_full_latency_s", "event", "config_id"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceEvent {
    Default,
    Lhs,
    SubsetEval,
    Backfill,
    Verify,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Default => "default",
            TraceEvent::Lhs => "lhs",
            TraceEvent::SubsetEval => "subset-eval",
            TraceEvent::Backfill => "backfill",
            TraceEvent::Verify => "verify",
        }
    }

    /// Events that measure a configuration on the whole workload.
    pub fn is_full(self) -> bool {
        matches!(self, TraceEvent::Default | TraceEvent::Verify)
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "default" => TraceEvent::Default,
            "lhs" => TraceEvent::Lhs,
            "subset-eval" => TraceEvent::SubsetEval,
            "backfill" => TraceEvent::Backfill,
            "verify" => TraceEvent::Verify,
            other => return Err(Error::Protocol(format!("unknown trace event `{other}`"))),
        })
    }
}

/// Clock reading and best full-workload latency right after one evaluation.
/// Before anything has been measured on the full workload the best is `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub elapsed_s: f64,
    pub best_full_latency_s: f64,
    pub event: TraceEvent,
    pub config_id: ConfigId,
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

pub fn write_trace<W: std::io::Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            fmt_f64(r.elapsed_s),
            fmt_f64(r.best_full_latency_s),
            r.event.to_string(),
            r.config_id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(records, std::io::BufWriter::new(file))
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Protocol(format!("unexpected trace header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Protocol(format!("bad number `{s}` in trace")))
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 4 {
            return Err(Error::Protocol(format!("trace row has {} fields", row.len())));
        }
        records.push(TraceRecord {
            elapsed_s: num(&row[0])?,
            best_full_latency_s: num(&row[1])?,
            event: row[2].parse()?,
            config_id: ConfigId(
                row[3]
                    .parse()
                    .map_err(|_| Error::Protocol(format!("bad config id `{}`", &row[3])))?,
            ),
        });
    }
    Ok(records)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_trace(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Speedup {
    Reached(f64),
    NotReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `(best_b − best_a) / best_b`, as a fraction.
    pub final_improvement: f64,
    pub time_to_optimal_speedup: Speedup,
}

fn final_best(trace: &[TraceRecord]) -> f64 {
    trace.iter().map(|r| r.best_full_latency_s).fold(f64::INFINITY, f64::min)
}

/// Earliest clock reading at which the trace's best is at most `target`.
pub fn time_to_reach(trace: &[TraceRecord], target: f64) -> Option<f64> {
    trace
        .iter()
        .find(|r| r.best_full_latency_s <= target)
        .map(|r| r.elapsed_s)
}

/// Compare run `a` against reference run `b`.
pub fn compare_runs(a: &[TraceRecord], b: &[TraceRecord]) -> Result<Comparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Protocol("cannot compare an empty trace".into()));
    }
    let best_a = final_best(a);
    let best_b = final_best(b);
    let t_b = time_to_reach(b, best_b).expect("b reaches its own best");
    let speedup = match time_to_reach(a, best_b) {
        Some(t_a) if t_a > 0.0 => Speedup::Reached(t_b / t_a),
        Some(_) if t_b == 0.0 => Speedup::Reached(1.0),
        Some(_) => Speedup::Reached(f64::INFINITY),
        None => Speedup::NotReached,
    };
    Ok(Comparison {
        final_improvement: (best_b - best_a) / best_b,
        time_to_optimal_speedup: speedup,
    })
}
