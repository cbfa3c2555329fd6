use serde::{Deserialize, Serialize};

use crate::context::{cloze_mask, from_order_mask, identity_ranks, ranks_from_confidence, reversed_ranks, shared_mask};
use crate::data::{TokenId, PAD};
use crate::error::{Error, Result};
use crate::model::VisibilityMask;

use super::trace::TraceRecord;
use super::{best_index, mask_schedule, ConditionalModel, Hypothesis, Prediction, Request};

/// How iterations after the first choose each position's context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// Ranks from the first iteration's confidences.
    EasyFirst,
    LeftToRight,
    RightToLeft,
    /// Every other position, every time (cloze mask).
    AllButItself,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub beams: Vec<Hypothesis>,
    pub best: usize,
    /// Sequential decoder passes; all beams of an iteration count once.
    pub steps: usize,
    /// The selected hypothesis repeated itself before the iteration cap.
    pub converged: bool,
    /// After convergence, whether one more iteration left the returned
    /// sequence unchanged (only when requested).
    pub fixed_point: Option<bool>,
    pub trace: Vec<TraceRecord>,
}

impl DecodeOutcome {
    pub fn hypothesis(&self) -> &Hypothesis {
        &self.beams[self.best]
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.beams[self.best].tokens
    }
}

fn check_args(lengths: &[usize], t_max: usize) -> Result<()> {
    if lengths.is_empty() || t_max == 0 {
        return Err(Error::Validation("need at least one length and one iteration".into()));
    }
    if lengths.contains(&0) {
        return Err(Error::Validation("hypothesis length must be positive".into()));
    }
    for (i, n) in lengths.iter().enumerate() {
        if lengths[..i].contains(n) {
            return Err(Error::Validation(format!("length {n} appears twice in the beam")));
        }
    }
    Ok(())
}

fn run<M: ConditionalModel>(
    model: &M,
    ctx: &M::Context,
    tokens: &[&[TokenId]],
    masks: &[&VisibilityMask],
) -> Result<Vec<Vec<Prediction>>> {
    let reqs: Vec<Request> = tokens
        .iter()
        .zip(masks)
        .map(|(t, m)| Request { tokens: t, mask: m })
        .collect();
    let out = model.predict(ctx, &reqs)?;
    if out.len() != reqs.len() || out.iter().zip(tokens).any(|(p, t)| p.len() != t.len()) {
        return Err(Error::Dimension("model returned the wrong number of predictions".into()));
    }
    Ok(out)
}

fn record(trace: &mut Vec<TraceRecord>, t: usize, hyps: &[Hypothesis], masks: &[&VisibilityMask], best: usize) {
    for (k, (h, m)) in hyps.iter().zip(masks).enumerate() {
        trace.push(TraceRecord::Iteration {
            t,
            beam: k,
            length: h.len(),
            tokens: h.tokens.clone(),
            confidences: h.confidences.clone(),
            mask: m.digest(),
            selected: k == best,
        });
    }
}

/// Parallel refinement with a length beam. The first iteration predicts
/// every position from the source alone; later iterations re-predict every
/// position given the previous iteration's tokens at the positions the
/// ordering allows. Returns as soon as the selected hypothesis repeats
/// itself, or after `t_max` iterations.
pub fn refine<M: ConditionalModel>(
    model: &M,
    ctx: &M::Context,
    lengths: &[usize],
    ordering: Ordering,
    t_max: usize,
    check_fixed_point: bool,
) -> Result<DecodeOutcome> {
    check_args(lengths, t_max)?;
    let mut trace = Vec::new();
    let empty: Vec<VisibilityMask> = lengths.iter().map(|&n| VisibilityMask::empty(n)).collect();
    let empty_refs: Vec<&VisibilityMask> = empty.iter().collect();
    let blanks: Vec<Vec<TokenId>> = lengths.iter().map(|&n| vec![PAD; n]).collect();
    let blank_refs: Vec<&[TokenId]> = blanks.iter().map(Vec::as_slice).collect();
    let first = run(model, ctx, &blank_refs, &empty_refs)?;
    let mut hyps: Vec<Hypothesis> = first
        .into_iter()
        .map(|p| {
            let confidences: Vec<f64> = p.iter().map(|x| x.prob).collect();
            let ranks = match ordering {
                Ordering::EasyFirst => Some(ranks_from_confidence(&confidences)),
                Ordering::LeftToRight => Some(identity_ranks(p.len())),
                Ordering::RightToLeft => Some(reversed_ranks(p.len())),
                Ordering::AllButItself => None,
            };
            Hypothesis {
                tokens: p.iter().map(|x| x.token).collect(),
                confidences,
                ranks,
                iteration: 1,
                converged: false,
            }
        })
        .collect();
    let mut best = best_index(&hyps);
    record(&mut trace, 1, &hyps, &empty_refs, best);
    // ranks are fixed after the first iteration, so are the masks
    let masks: Vec<VisibilityMask> = hyps
        .iter()
        .map(|h| match &h.ranks {
            Some(z) => from_order_mask(z),
            None => Ok(cloze_mask(h.len())),
        })
        .collect::<Result<_>>()?;
    let mask_refs: Vec<&VisibilityMask> = masks.iter().collect();

    for t in 2..=t_max {
        let prev: Vec<Vec<TokenId>> = hyps.iter().map(|h| h.tokens.clone()).collect();
        let prev_refs: Vec<&[TokenId]> = prev.iter().map(Vec::as_slice).collect();
        let preds = run(model, ctx, &prev_refs, &mask_refs)?;
        for (h, p) in hyps.iter_mut().zip(preds) {
            h.tokens = p.iter().map(|x| x.token).collect();
            h.confidences = p.iter().map(|x| x.prob).collect();
            h.iteration = t;
        }
        for (h, old) in hyps.iter_mut().zip(&prev) {
            h.converged = &h.tokens == old;
        }
        best = best_index(&hyps);
        record(&mut trace, t, &hyps, &mask_refs, best);
        if hyps[best].converged {
            let fixed_point = if check_fixed_point {
                let cur: Vec<&[TokenId]> = hyps.iter().map(|h| h.tokens.as_slice()).collect();
                let again = run(model, ctx, &cur, &mask_refs)?;
                Some(again[best].iter().map(|x| x.token).eq(hyps[best].tokens.iter().copied()))
            } else {
                None
            };
            trace.push(TraceRecord::Result {
                steps: t,
                length: hyps[best].len(),
                tokens: hyps[best].tokens.clone(),
                converged: true,
            });
            return Ok(DecodeOutcome {
                beams: hyps,
                best,
                steps: t,
                converged: true,
                fixed_point,
                trace,
            });
        }
    }
    trace.push(TraceRecord::Result {
        steps: t_max,
        length: hyps[best].len(),
        tokens: hyps[best].tokens.clone(),
        converged: false,
    });
    Ok(DecodeOutcome {
        beams: hyps,
        best,
        steps: t_max,
        converged: false,
        fixed_point: None,
        trace,
    })
}

/// Positions to re-predict: the `count` least confident, where ties count
/// the higher index as less confident.
fn lowest(conf: &[f64], count: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    let mut hidden = vec![false; conf.len()];
    for &i in &order[conf.len() - count..] {
        hidden[i] = true;
    }
    hidden
}

/// Mask-predict over a length beam. Iteration `t` re-predicts the
/// `floor(N(T-t+1)/T)` least confident positions of each hypothesis given
/// the other tokens; kept positions retain token and confidence. The
/// hypothesis with the highest average log confidence is returned.
///
/// Every iteration counts as a step. With `early_stop`, decoding ends
/// before the first iteration that would re-predict nothing in any beam.
pub fn mask_predict<M: ConditionalModel>(
    model: &M,
    ctx: &M::Context,
    lengths: &[usize],
    t_max: usize,
    early_stop: bool,
) -> Result<DecodeOutcome> {
    check_args(lengths, t_max)?;
    let mut trace = Vec::new();
    let mut hyps: Vec<Hypothesis> = lengths
        .iter()
        .map(|&n| Hypothesis {
            tokens: vec![PAD; n],
            confidences: vec![0.0; n],
            ranks: None,
            iteration: 0,
            converged: false,
        })
        .collect();
    let mut steps = 0;
    for t in 1..=t_max {
        let hidden: Vec<Vec<bool>> = hyps
            .iter()
            .map(|h| {
                let i = mask_schedule(h.len(), t_max, t);
                if t == 1 {
                    vec![true; h.len()]
                } else {
                    lowest(&h.confidences, i)
                }
            })
            .collect();
        let active: Vec<usize> = (0..hyps.len()).filter(|&k| hidden[k].contains(&true)).collect();
        if early_stop && active.is_empty() {
            break;
        }
        let masks: Vec<VisibilityMask> = hidden.iter().map(|h| shared_mask(h)).collect();
        let tokens: Vec<&[TokenId]> = active.iter().map(|&k| hyps[k].tokens.as_slice()).collect();
        let mask_refs: Vec<&VisibilityMask> = active.iter().map(|&k| &masks[k]).collect();
        let preds = if active.is_empty() {
            Vec::new()
        } else {
            run(model, ctx, &tokens, &mask_refs)?
        };
        for (&k, p) in active.iter().zip(preds) {
            let h = &mut hyps[k];
            for (pos, pred) in p.iter().enumerate() {
                if hidden[k][pos] {
                    h.tokens[pos] = pred.token;
                    h.confidences[pos] = pred.prob;
                }
            }
        }
        for h in hyps.iter_mut() {
            h.iteration = t;
        }
        steps = t;
        let all_masks: Vec<&VisibilityMask> = masks.iter().collect();
        record(&mut trace, t, &hyps, &all_masks, best_index(&hyps));
    }
    let best = best_index(&hyps);
    trace.push(TraceRecord::Result {
        steps,
        length: hyps[best].len(),
        tokens: hyps[best].tokens.clone(),
        converged: false,
    });
    Ok(DecodeOutcome {
        beams: hyps,
        best,
        steps,
        converged: false,
        fixed_point: None,
        trace,
    })
}
