use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{SentencePair, TokenId};
use crate::error::{Error, Result};
use crate::inference::{decode_sentence, DecodeConfig, TraceRecord, Translation};
use crate::model::Model;
use crate::numerics::Real;

use super::bleu::bleu;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub length: usize,
    pub count: usize,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthTable {
    pub bins: Vec<LengthBin>,
    /// Spearman correlation of length and steps; `None` when either is
    /// constant.
    pub spearman: Option<f64>,
}

/// Midranks (1-based), ties sharing the mean of their positions.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = mid;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Mean steps per generated length plus the length/steps rank correlation.
pub fn length_table(points: &[(usize, usize)]) -> LengthTable {
    let mut bins: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(len, steps) in points {
        let e = bins.entry(len).or_default();
        e.0 += 1;
        e.1 += steps;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1 as f64).collect();
    LengthTable {
        bins: bins
            .into_iter()
            .map(|(length, (count, total))| LengthBin {
                length,
                count,
                mean_steps: total as f64 / count as f64,
            })
            .collect(),
        spearman: spearman(&xs, &ys),
    }
}

/// Length table from the `result` records of parsed traces.
pub fn iterations_vs_length(traces: &[(usize, TraceRecord)]) -> LengthTable {
    let points: Vec<(usize, usize)> = traces
        .iter()
        .filter_map(|(_, r)| match r {
            TraceRecord::Result { steps, length, .. } => Some((*length, *steps)),
            _ => None,
        })
        .collect();
    length_table(&points)
}

pub fn exact_match(hypotheses: &[Vec<TokenId>], references: &[Vec<TokenId>]) -> f64 {
    if hypotheses.is_empty() {
        return 0.0;
    }
    let hits = hypotheses.iter().zip(references).filter(|(h, r)| h == r).count();
    100.0 * hits as f64 / hypotheses.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: usize,
    pub bleu: f64,
    /// Percentage of hypotheses equal to their reference.
    pub exact_match: f64,
    /// Percentage of hypotheses accepted by the task's validity check, when
    /// the task has one.
    pub valid: Option<f64>,
    pub avg_steps: f64,
    /// Sentences whose fixed-point check changed the output.
    pub fixed_point_violations: usize,
    pub lengths: LengthTable,
    pub config_digest: String,
    pub wall_ms_per_sentence: f64,
}

impl EvalReport {
    /// The report without wall-clock fields; identical inputs give
    /// identical values.
    pub fn deterministic(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("wall_ms_per_sentence");
        v
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "sentences {}\nBLEU {:.2}\nexact match {:.2}\n",
            self.sentences, self.bleu, self.exact_match
        );
        if let Some(v) = self.valid {
            s += &format!("valid {v:.2}\n");
        }
        s += &format!(
            "avg steps {:.3}\nms/sentence {:.3}\n",
            self.avg_steps, self.wall_ms_per_sentence
        );
        if let Some(r) = self.lengths.spearman {
            s += &format!("length/steps spearman {r:.3}\n");
        }
        s += "length count mean_steps\n";
        for b in &self.lengths.bins {
            s += &format!("{:>6} {:>5} {:>10.3}\n", b.length, b.count, b.mean_steps);
        }
        s
    }
}

/// Checks a task-specific notion of a correct output.
pub type Validity<'a> = &'a dyn Fn(&[TokenId], &[TokenId]) -> bool;

/// Decodes every pair one sentence at a time and scores the outputs
/// against the references.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    pairs: &[SentencePair],
    cfg: &DecodeConfig,
    validity: Option<Validity<'_>>,
    config_digest: &str,
) -> Result<(EvalReport, Vec<Translation>)> {
    if pairs.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let outputs: Vec<Translation> = pairs
        .iter()
        .map(|p| decode_sentence(model, &p.src, cfg))
        .collect::<Result<_>>()?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    Ok((score_outputs(pairs, &outputs, validity, config_digest, wall)?, outputs))
}

pub fn score_outputs(
    pairs: &[SentencePair],
    outputs: &[Translation],
    validity: Option<Validity<'_>>,
    config_digest: &str,
    wall_ms: f64,
) -> Result<EvalReport> {
    let hyps: Vec<Vec<TokenId>> = outputs.iter().map(|o| o.tokens.clone()).collect();
    let refs: Vec<Vec<TokenId>> = pairs.iter().map(|p| p.tgt.clone()).collect();
    let n = pairs.len();
    let points: Vec<(usize, usize)> = outputs.iter().map(|o| (o.tokens.len(), o.steps)).collect();
    Ok(EvalReport {
        sentences: n,
        bleu: bleu(&hyps, &refs)?,
        exact_match: exact_match(&hyps, &refs),
        valid: validity.map(|f| {
            let ok = pairs.iter().zip(&hyps).filter(|(p, h)| f(&p.src, h)).count();
            100.0 * ok as f64 / n as f64
        }),
        avg_steps: outputs.iter().map(|o| o.steps as f64).sum::<f64>() / n as f64,
        fixed_point_violations: outputs.iter().filter(|o| o.fixed_point == Some(false)).count(),
        lengths: length_table(&points),
        config_digest: config_digest.to_string(),
        wall_ms_per_sentence: wall_ms / n as f64,
    })
}
