use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::TokenId;
use crate::error::{Error, Result};
use crate::inference::{decode_sentence, DecodeConfig, TraceRecord};
use crate::model::Model;
use crate::numerics::Real;

/// One decoding setup to time.
pub struct BenchEntry<'a, T> {
    pub name: String,
    pub model: &'a Model<T>,
    pub decode: DecodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub sentences: usize,
    pub avg_steps: f64,
    pub total_ms: f64,
    pub ms_per_sentence: f64,
    /// Baseline wall time over this entry's wall time.
    pub speedup: f64,
}

pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Per entry, the trace records of every sentence.
    pub traces: Vec<Vec<(usize, TraceRecord)>>,
}

/// Decodes `sources` one sentence at a time under every entry and reports
/// wall time and average step count, with speedups relative to the entry
/// named `baseline`.
pub fn latency_benchmark<T: Real>(
    entries: &[BenchEntry<'_, T>],
    sources: &[Vec<TokenId>],
    baseline: &str,
) -> Result<BenchResult> {
    if sources.is_empty() {
        return Err(Error::Validation("no sentences to benchmark".into()));
    }
    let mut rows = Vec::with_capacity(entries.len());
    let mut traces = Vec::with_capacity(entries.len());
    for e in entries {
        e.decode.validate()?;
        let mut steps = 0usize;
        let mut trace = Vec::new();
        let start = Instant::now();
        for (i, src) in sources.iter().enumerate() {
            let out = decode_sentence(e.model, src, &e.decode)?;
            steps += out.steps;
            trace.extend(out.trace.into_iter().map(|r| (i, r)));
        }
        let total_ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(BenchRow {
            name: e.name.clone(),
            sentences: sources.len(),
            avg_steps: steps as f64 / sources.len() as f64,
            total_ms,
            ms_per_sentence: total_ms / sources.len() as f64,
            speedup: 0.0,
        });
        traces.push(trace);
    }
    let base = rows
        .iter()
        .find(|r| r.name == baseline)
        .map(|r| r.total_ms)
        .ok_or_else(|| Error::Config(format!("no benchmark entry named {baseline:?}")))?;
    for r in &mut rows {
        r.speedup = if r.name == baseline { 1.0 } else { base / r.total_ms };
    }
    Ok(BenchResult { rows, traces })
}

pub fn write_bench_csv<W: Write>(mut w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "name,sentences,avg_steps,total_ms,ms_per_sentence,speedup")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.3},{:.4},{:.4}",
            r.name, r.sentences, r.avg_steps, r.total_ms, r.ms_per_sentence, r.speedup
        )?;
    }
    Ok(())
}
