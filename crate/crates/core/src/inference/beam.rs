use crate::context::autoregressive_mask;
use crate::data::{TokenId, EOS};
use crate::error::{Error, Result};

use super::trace::TraceRecord;

/// Left-to-right scorer for beam search.
pub trait NextTokenModel {
    type Context;

    fn context(&self, src: &[TokenId]) -> Result<Self::Context>;

    /// For each prefix, log-probabilities of the next token over the whole
    /// vocabulary. `None` entries are tokens the search must never emit.
    fn next_log_probs(&self, ctx: &Self::Context, prefixes: &[&[TokenId]]) -> Result<Vec<Vec<Option<f64>>>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamOutput {
    /// Without the end-of-sentence token.
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    /// `log_prob / |Y|^alpha`, where `|Y|` counts the end-of-sentence token.
    pub score: f64,
    /// False when no hypothesis finished within the length cap.
    pub finished: bool,
    /// Sequential decoder passes.
    pub steps: usize,
    pub trace: Vec<TraceRecord>,
}

#[derive(Clone)]
struct Partial {
    tokens: Vec<TokenId>,
    probs: Vec<f64>,
    log_prob: f64,
}

fn normalized(log_prob: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        log_prob
    } else {
        log_prob / (len as f64).powf(alpha)
    }
}

/// Beam search to end-of-sentence. Each step keeps the `beam` best
/// expansions by total log-probability (ties: lexicographically smaller
/// token sequence); expansions ending in EOS leave the beam as finished.
/// Finished hypotheses are ranked by `log p / |Y|^alpha`.
pub fn ar_beam_search<M: NextTokenModel>(
    model: &M,
    ctx: &M::Context,
    beam: usize,
    alpha: f64,
    max_len: usize,
) -> Result<BeamOutput> {
    if beam == 0 {
        return Err(Error::Validation("beam size must be positive".into()));
    }
    let mut alive = vec![Partial {
        tokens: Vec::new(),
        probs: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Partial> = Vec::new();
    let mut trace = Vec::new();
    let mut steps = 0;
    while !alive.is_empty() && steps <= max_len {
        steps += 1;
        let prefixes: Vec<&[TokenId]> = alive.iter().map(|p| p.tokens.as_slice()).collect();
        let dists = model.next_log_probs(ctx, &prefixes)?;
        if dists.len() != alive.len() {
            return Err(Error::Dimension("scorer returned the wrong number of rows".into()));
        }
        let at_cap = alive[0].tokens.len() == max_len;
        let mut cands: Vec<(f64, Vec<TokenId>, usize, TokenId, f64)> = Vec::new();
        for (b, (p, dist)) in alive.iter().zip(&dists).enumerate() {
            for (tok, lp) in dist.iter().enumerate() {
                let Some(lp) = lp else { continue };
                let tok = tok as TokenId;
                // at the cap only EOS may extend a hypothesis
                if at_cap && tok != EOS {
                    continue;
                }
                let mut seq = p.tokens.clone();
                seq.push(tok);
                cands.push((p.log_prob + lp, seq, b, tok, lp.exp()));
            }
        }
        if cands.is_empty() {
            // nothing may follow: this pass produced no hypothesis
            steps -= 1;
            break;
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        cands.truncate(beam);
        let mut next = Vec::new();
        for (k, (lp, _, b, tok, prob)) in cands.into_iter().enumerate() {
            let mut p = alive[b].clone();
            p.log_prob = lp;
            p.probs.push(prob);
            let mut shown = p.tokens.clone();
            shown.push(tok);
            if tok != EOS {
                p.tokens.push(tok);
            }
            trace.push(TraceRecord::Iteration {
                t: steps,
                beam: k,
                length: shown.len(),
                tokens: shown,
                confidences: p.probs.clone(),
                mask: autoregressive_mask(p.probs.len()).digest(),
                selected: k == 0,
            });
            if tok == EOS {
                finished.push(p);
            } else {
                next.push(p);
            }
        }
        alive = next;
    }
    let pick = |set: &[Partial], extra: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in set.iter().enumerate() {
            let s = normalized(p.log_prob, p.tokens.len() + extra, alpha);
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        best
    };
    let (chosen, score, done) = match pick(&finished, 1) {
        Some((i, s)) => (finished[i].clone(), s, true),
        None => {
            let (i, s) = pick(&alive, 0).ok_or_else(|| Error::Validation("empty beam".into()))?;
            (alive[i].clone(), s, false)
        }
    };
    trace.push(TraceRecord::Result {
        steps,
        length: chosen.tokens.len(),
        tokens: chosen.tokens.clone(),
        converged: done,
    });
    Ok(BeamOutput {
        tokens: chosen.tokens,
        log_prob: chosen.log_prob,
        score,
        finished: done,
        steps,
        trace,
    })
}
