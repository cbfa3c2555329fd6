use crate::data::{SentencePair, TokenId};
use crate::error::{Error, Result};
use crate::inference::{ar_beam_search, NextTokenModel};

/// Length-penalty grid searched during tuning: 0.0, 0.2, …, 2.0.
pub fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.2).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTuning {
    pub alpha: f64,
    /// `(alpha, dev score)` for every grid point.
    pub scores: Vec<(f64, f64)>,
}

fn decode_all<M: NextTokenModel>(
    teacher: &M,
    sources: impl Iterator<Item = Vec<TokenId>>,
    beam: usize,
    alpha: f64,
    max_len: usize,
) -> Result<Vec<Vec<TokenId>>> {
    sources
        .map(|src| {
            let ctx = teacher.context(&src)?;
            let cap = (2 * src.len() + 8).min(max_len);
            Ok(ar_beam_search(teacher, &ctx, beam, alpha, cap)?.tokens)
        })
        .collect()
}

/// Replaces every target with the teacher's beam-search output for its
/// source. Outputs are capped at `min(2|x| + 8, max_len)` tokens; an empty
/// output keeps the original target.
pub fn distill_corpus<M: NextTokenModel>(
    teacher: &M,
    pairs: &[SentencePair],
    beam: usize,
    alpha: f64,
    max_len: usize,
) -> Result<Vec<SentencePair>> {
    let outputs = decode_all(teacher, pairs.iter().map(|p| p.src.clone()), beam, alpha, max_len)?;
    Ok(pairs
        .iter()
        .zip(outputs)
        .map(|(p, out)| SentencePair {
            src: p.src.clone(),
            tgt: if out.is_empty() { p.tgt.clone() } else { out },
        })
        .collect())
}

/// Picks the length penalty from `grid` that maximizes `score` on `dev`
/// (first grid point wins ties). `score` receives the dev pairs and the
/// teacher outputs in the same order.
pub fn tune_alpha<M: NextTokenModel>(
    teacher: &M,
    dev: &[SentencePair],
    beam: usize,
    max_len: usize,
    grid: &[f64],
    score: &mut dyn FnMut(&[SentencePair], &[Vec<TokenId>]) -> Result<f64>,
) -> Result<AlphaTuning> {
    if grid.is_empty() || dev.is_empty() {
        return Err(Error::Validation("alpha tuning needs a grid and a dev set".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let outs = decode_all(teacher, dev.iter().map(|p| p.src.clone()), beam, alpha, max_len)?;
        scores.push((alpha, score(dev, &outs)?));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    Ok(AlphaTuning { alpha: best.0, scores })
}
