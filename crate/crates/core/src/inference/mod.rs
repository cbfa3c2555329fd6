//! Decoding: mask-predict, parallel easy-first with a length beam, the
//! fixed-order and all-but-itself ablations, and left-to-right beam search.
//!
//! The iterative decoders only need [`ConditionalModel`]: given a source
//! context and a batch of `(tokens, visibility mask)` requests, report the
//! argmax token and its probability at every position. The neural model
//! implements it, and so can small hand-written tables.

mod beam;
mod iterative;
mod neural;
mod trace;

pub use beam::{ar_beam_search, BeamOutput, NextTokenModel};
pub use iterative::{mask_predict, refine, DecodeOutcome, Ordering};
pub use neural::{decode_sentence, DecodeConfig, Algorithm, Translation};
pub use trace::{parse_trace, recount_steps, write_trace, TraceRecord, TRACE_VERSION};

use crate::data::TokenId;
use crate::error::{Error, Result};
use crate::model::VisibilityMask;

/// One forward request: current tokens and who may see what.
#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub tokens: &'a [TokenId],
    pub mask: &'a VisibilityMask,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub token: TokenId,
    pub prob: f64,
}

pub trait ConditionalModel {
    type Context;

    fn context(&self, src: &[TokenId]) -> Result<Self::Context>;

    /// Log-probabilities of lengths `1..=len()`.
    fn length_log_probs(&self, ctx: &Self::Context) -> Result<Vec<f64>>;

    /// Per request, the most probable token and its probability at every
    /// position. Requests are independent.
    fn predict(&self, ctx: &Self::Context, requests: &[Request<'_>]) -> Result<Vec<Vec<Prediction>>>;
}

/// One decoding state.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Probability of each current token when it was last predicted.
    pub confidences: Vec<f64>,
    /// Easy-first (or fixed) order, 1-based, when the decoder uses one.
    pub ranks: Option<Vec<usize>>,
    pub iteration: usize,
    pub converged: bool,
}

impl Hypothesis {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Average log confidence, the beam-selection score.
    pub fn score(&self) -> f64 {
        self.confidences.iter().map(|p| p.ln()).sum::<f64>() / self.len() as f64
    }
}

/// Index of the best hypothesis: highest average log confidence, ties to
/// the shorter one, then to the earlier beam.
pub fn best_index(hyps: &[Hypothesis]) -> usize {
    let mut best = 0;
    for k in 1..hyps.len() {
        let (a, b) = (hyps[k].score(), hyps[best].score());
        if a > b || (a == b && hyps[k].len() < hyps[best].len()) {
            best = k;
        }
    }
    best
}

/// Number of positions re-predicted at iteration `t`: `floor(N(T-t+1)/T)`.
pub fn mask_schedule(n: usize, t_max: usize, t: usize) -> usize {
    n * (t_max + 1 - t) / t_max
}

/// The `k` most probable lengths (1-based), ties to the shorter length.
pub fn length_beam(log_probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > log_probs.len() {
        return Err(Error::Validation(format!(
            "length beam {k} outside 1..={}",
            log_probs.len()
        )));
    }
    let mut order: Vec<usize> = (0..log_probs.len()).collect();
    order.sort_by(|&a, &b| log_probs[b].total_cmp(&log_probs[a]).then(a.cmp(&b)));
    Ok(order[..k].iter().map(|i| i + 1).collect())
}

/// Mean sequential steps over decoded sentences.
pub fn average_steps(steps: &[usize]) -> f64 {
    if steps.is_empty() {
        return 0.0;
    }
    steps.iter().sum::<usize>() as f64 / steps.len() as f64
}

#[cfg(test)]
mod tests;
