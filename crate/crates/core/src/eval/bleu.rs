use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    None,
    /// `(m+1)/(c+1)` for orders ≥ 2 whose clipped match count is zero.
    #[default]
    AddOne,
}

/// Sufficient statistics of corpus BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn add<T: Eq + Hash>(&mut self, cand: &[T], reference: &[T]) {
        self.cand_len += cand.len();
        self.ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            self.totals[n - 1] += cand.len().saturating_sub(n - 1);
            self.matches[n - 1] += c
                .iter()
                .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    pub fn precisions(&self, smoothing: Smoothing) -> [f64; MAX_ORDER] {
        let mut p = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            let (m, c) = (self.matches[n] as f64, self.totals[n] as f64);
            p[n] = if n > 0 && self.matches[n] == 0 && smoothing == Smoothing::AddOne {
                (m + 1.0) / (c + 1.0)
            } else if c == 0.0 {
                0.0
            } else {
                m / c
            };
        }
        p
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.cand_len == 0 {
            0.0
        } else if self.cand_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        }
    }

    /// BLEU on the 0–100 scale.
    pub fn score(&self, smoothing: Smoothing) -> f64 {
        let p = self.precisions(smoothing);
        if p.iter().any(|&x| x <= 0.0) {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / MAX_ORDER as f64;
        (100.0 * self.brevity_penalty() * log_mean.exp()).clamp(0.0, 100.0)
    }
}

/// Corpus-level BLEU: n-gram statistics are pooled over all sentences
/// before the precisions are formed.
pub fn bleu_with<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>], smoothing: Smoothing) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Validation("BLEU of an empty corpus".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Validation(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut stats = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        stats.add(c, r);
    }
    Ok(stats.score(smoothing))
}

pub fn bleu<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    bleu_with(candidates, references, Smoothing::AddOne)
}

pub fn sentence_bleu<T: Eq + Hash + Clone>(candidate: &[T], reference: &[T], smoothing: Smoothing) -> f64 {
    let mut stats = BleuStats::default();
    stats.add(candidate, reference);
    stats.score(smoothing)
}
