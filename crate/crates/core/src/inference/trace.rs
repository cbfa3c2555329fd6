//! Decode trace log: JSON Lines, one object per line.
//!
//! ```text
//! {"v":1,"sentence":0,"kind":"iteration","t":1,"beam":0,"length":3,
//!  "tokens":[..],"confidences":[..],"mask":"<digest>","selected":true}
//! {"v":1,"sentence":0,"kind":"result","steps":2,"length":3,"tokens":[..],"converged":true}
//! ```
//!
//! Every sentence ends with exactly one `result` line; its step count must
//! equal the largest `t` among that sentence's iteration lines.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::TokenId;
use crate::error::{Error, Result};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TraceRecord {
    Iteration {
        t: usize,
        beam: usize,
        length: usize,
        tokens: Vec<TokenId>,
        confidences: Vec<f64>,
        mask: String,
        selected: bool,
    },
    Result {
        steps: usize,
        length: usize,
        tokens: Vec<TokenId>,
        converged: bool,
    },
}

#[derive(Serialize)]
struct LineOut<'a> {
    v: u32,
    sentence: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

/// Serializes `(sentence, record)` pairs, one line each.
pub fn write_trace<W: Write>(mut w: W, sentence: usize, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(&LineOut {
            v: TRACE_VERSION,
            sentence,
            record: r,
        })
        .map_err(|e| Error::Validation(format!("trace serialization: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<trace>", e))?;
    }
    Ok(())
}

/// Parses a trace log back into `(sentence, record)` pairs.
pub fn parse_trace(text: &str) -> Result<Vec<(usize, TraceRecord)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("trace line {}", i + 1);
        let mut value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::format(loc(), e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::format(loc(), "not a JSON object"))?;
        let v = obj
            .remove("v")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(loc(), "missing version"))?;
        if v != TRACE_VERSION as u64 {
            return Err(Error::format(loc(), format!("unsupported version {v}")));
        }
        let sentence = obj
            .remove("sentence")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(loc(), "missing sentence index"))?;
        let sentence = usize::try_from(sentence).map_err(|_| Error::format(loc(), "sentence index too large"))?;
        let record: TraceRecord =
            serde_json::from_value(value).map_err(|e| Error::format(loc(), e.to_string()))?;
        if let TraceRecord::Iteration { tokens, confidences, length, t, .. } = &record {
            if tokens.len() != *length || confidences.len() != *length || *t == 0 {
                return Err(Error::format(loc(), "inconsistent iteration record"));
            }
        }
        out.push((sentence, record));
    }
    Ok(out)
}

/// Step count per sentence recomputed from iteration lines (the largest
/// `t` seen), cross-checked against each `result` line.
pub fn recount_steps(records: &[(usize, TraceRecord)]) -> Result<BTreeMap<usize, usize>> {
    let mut max_t: BTreeMap<usize, usize> = BTreeMap::new();
    let mut reported: BTreeMap<usize, usize> = BTreeMap::new();
    for (s, r) in records {
        match r {
            TraceRecord::Iteration { t, .. } => {
                let e = max_t.entry(*s).or_default();
                *e = (*e).max(*t);
            }
            TraceRecord::Result { steps, .. } => {
                if reported.insert(*s, *steps).is_some() {
                    return Err(Error::Validation(format!("sentence {s} has two results")));
                }
            }
        }
    }
    for (s, steps) in &reported {
        let seen = max_t.get(s).copied().unwrap_or(0);
        if seen != *steps {
            return Err(Error::Validation(format!(
                "sentence {s}: result reports {steps} steps, iterations reach {seen}"
            )));
        }
    }
    if max_t.keys().any(|s| !reported.contains_key(s)) {
        return Err(Error::Validation("iteration lines without a result".into()));
    }
    Ok(max_t)
}
