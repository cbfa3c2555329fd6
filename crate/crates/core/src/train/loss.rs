use serde::{Deserialize, Serialize};

use crate::context::{autoregressive_mask, cloze_mask, cmlm_mask, from_order_mask, random_ranks, ranks_from_confidence, sample_disco_mask};
use crate::data::{SentencePair, TokenId, EOS};
use crate::error::{Error, Result};
use crate::model::{apply_mask_symbol, shift_right, ContextItem, DecoderKind, DiscoItem, Dropout, Encoded, Model, VisibilityMask};
use crate::numerics::{Graph, Real, RngStream, Var};

/// Training objective; each decoder kind supports a subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Every position sees a uniformly sized random subset of the others.
    Disco,
    /// Masked-LM: shared context, loss on masked positions only.
    Cmlm,
    /// Empty-context pass, then a pass under the order it implies.
    EasyFirst,
    /// Left-to-right.
    Autoregressive,
    /// Random factorization order.
    Permutation,
    /// Every other position.
    Cloze,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown objective {s:?}")))
    }
}

impl Objective {
    pub fn supported_by(self, kind: DecoderKind) -> bool {
        match kind {
            DecoderKind::Disco => true,
            DecoderKind::Cmlm => self == Objective::Cmlm,
            DecoderKind::Autoregressive { .. } => self == Objective::Autoregressive,
        }
    }
}

/// Loss of a batch: `total = word + length` as a tape scalar, with the two
/// parts as plain numbers for logging.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub word: f64,
    pub length: f64,
    pub tokens: usize,
}

fn concat_targets(pairs: &[&SentencePair]) -> Vec<usize> {
    pairs.iter().flat_map(|p| p.tgt.iter().map(|&t| t as usize)).collect()
}

fn length_term<T: Real>(g: &mut Graph<T>, model: &Model<T>, enc: &Encoded, pairs: &[&SentencePair], eps: f64) -> Result<Var> {
    let bins = model.config().max_length_bins;
    let targets: Vec<usize> = pairs
        .iter()
        .map(|p| {
            if p.tgt.is_empty() || p.tgt.len() > bins {
                Err(Error::Length(format!("target length {} outside 1..={bins}", p.tgt.len())))
            } else {
                Ok(p.tgt.len() - 1)
            }
        })
        .collect::<Result<_>>()?;
    let logits = model.length_logits(g, enc)?;
    g.cross_entropy(logits, &targets, eps)
}

fn disco_items<'a>(pairs: &[&'a SentencePair], masks: &'a [VisibilityMask], enc: &Encoded) -> Vec<DiscoItem<'a>> {
    pairs
        .iter()
        .zip(masks)
        .zip(&enc.spans)
        .map(|((p, m), &span)| DiscoItem {
            tokens: &p.tgt,
            mask: Some(m),
            enc_span: span,
        })
        .collect()
}

/// Smoothed NLL restricted to the flagged rows (mean over them).
fn masked_rows_loss<T: Real>(
    g: &mut Graph<T>,
    logits: Var,
    pairs: &[&SentencePair],
    masked: &[Vec<bool>],
    eps: f64,
) -> Result<(Var, usize)> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut offset = 0;
    for (p, m) in pairs.iter().zip(masked) {
        for (i, &hidden) in m.iter().enumerate() {
            if hidden {
                rows.push(offset + i);
                targets.push(p.tgt[i] as usize);
            }
        }
        offset += p.tgt.len();
    }
    let picked = g.gather(logits, &rows)?;
    Ok((g.cross_entropy(picked, &targets, eps)?, rows.len()))
}

/// Batch loss under `objective`: token-mean smoothed word NLL plus the
/// sentence-mean smoothed NLL of the true length (left-to-right models
/// have no length term). `mask_rngs` holds one stream per pair.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<T: Real>(
    g: &mut Graph<T>,
    model: &Model<T>,
    pairs: &[&SentencePair],
    objective: Objective,
    eps: f64,
    mask_rngs: &mut [RngStream],
    drop: &mut Dropout<'_>,
) -> Result<LossParts> {
    let kind = model.config().decoder;
    if !objective.supported_by(kind) {
        return Err(Error::Config(format!(
            "objective {objective:?} does not apply to a {kind:?} decoder"
        )));
    }
    if pairs.is_empty() || mask_rngs.len() != pairs.len() {
        return Err(Error::Validation("need one mask stream per pair".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.src.is_empty() || p.tgt.is_empty()) {
        return Err(Error::Validation(format!("empty sentence in pair {p:?}")));
    }
    let srcs: Vec<&[TokenId]> = pairs.iter().map(|p| p.src.as_slice()).collect();
    let enc = model.encode_batch(g, &srcs, drop)?;
    let tokens: usize = pairs.iter().map(|p| p.tgt.len()).sum();

    if let DecoderKind::Autoregressive { contextless } = kind {
        let full: Vec<Vec<TokenId>> = pairs
            .iter()
            .map(|p| p.tgt.iter().copied().chain([EOS]).collect())
            .collect();
        let targets: Vec<usize> = full.iter().flatten().map(|&t| t as usize).collect();
        let logits = if contextless {
            let masks: Vec<VisibilityMask> = full.iter().map(|t| autoregressive_mask(t.len())).collect();
            let items: Vec<DiscoItem> = full
                .iter()
                .zip(&masks)
                .zip(&enc.spans)
                .map(|((t, m), &span)| DiscoItem {
                    tokens: t,
                    mask: Some(m),
                    enc_span: span,
                })
                .collect();
            model.disco_logits(g, enc.states, &items, drop)?
        } else {
            let inputs: Vec<Vec<TokenId>> = full.iter().map(|t| shift_right(t)).collect();
            let items: Vec<ContextItem> = inputs
                .iter()
                .zip(&enc.spans)
                .map(|(t, &span)| ContextItem {
                    inputs: t,
                    causal: true,
                    enc_span: span,
                })
                .collect();
            model.contextual_logits(g, enc.states, &items, drop)?
        };
        let word = g.cross_entropy(logits, &targets, eps)?;
        return Ok(LossParts {
            total: word,
            word: g.scalar(word).f64(),
            length: 0.0,
            tokens: targets.len(),
        });
    }

    let length = length_term(g, model, &enc, pairs, eps)?;
    let targets = concat_targets(pairs);
    let word = match objective {
        Objective::Disco | Objective::Permutation | Objective::Cloze | Objective::Autoregressive => {
            let masks: Vec<VisibilityMask> = pairs
                .iter()
                .zip(mask_rngs.iter_mut())
                .map(|(p, rng)| {
                    let n = p.tgt.len();
                    Ok(match objective {
                        Objective::Disco => sample_disco_mask(n, rng),
                        Objective::Permutation => from_order_mask(&random_ranks(n, rng))?,
                        Objective::Cloze => cloze_mask(n),
                        _ => autoregressive_mask(n),
                    })
                })
                .collect::<Result<_>>()?;
            let items = disco_items(pairs, &masks, &enc);
            let logits = model.disco_logits(g, enc.states, &items, drop)?;
            g.cross_entropy(logits, &targets, eps)?
        }
        Objective::Cmlm => {
            let drawn: Vec<(VisibilityMask, Vec<bool>)> = pairs
                .iter()
                .zip(mask_rngs.iter_mut())
                .map(|(p, rng)| cmlm_mask(p.tgt.len(), rng))
                .collect();
            let hidden: Vec<Vec<bool>> = drawn.iter().map(|(_, h)| h.clone()).collect();
            let logits = if kind == DecoderKind::Cmlm {
                let inputs: Vec<Vec<TokenId>> = pairs
                    .iter()
                    .zip(&hidden)
                    .map(|(p, h)| {
                        let kept: Vec<bool> = h.iter().map(|x| !x).collect();
                        apply_mask_symbol(&p.tgt, &kept)
                    })
                    .collect();
                let items: Vec<ContextItem> = inputs
                    .iter()
                    .zip(&enc.spans)
                    .map(|(t, &span)| ContextItem {
                        inputs: t,
                        causal: false,
                        enc_span: span,
                    })
                    .collect();
                model.contextual_logits(g, enc.states, &items, drop)?
            } else {
                let masks: Vec<VisibilityMask> = drawn.into_iter().map(|(m, _)| m).collect();
                let items = disco_items(pairs, &masks, &enc);
                model.disco_logits(g, enc.states, &items, drop)?
            };
            masked_rows_loss(g, logits, pairs, &hidden, eps)?.0
        }
        Objective::EasyFirst => {
            let empty: Vec<VisibilityMask> = pairs.iter().map(|p| VisibilityMask::empty(p.tgt.len())).collect();
            let items = disco_items(pairs, &empty, &enc);
            let first = model.disco_logits(g, enc.states, &items, drop)?;
            let first_loss = g.cross_entropy(first, &targets, eps)?;
            // confidence of the reference token at each position
            let (_, v) = g.shape(first);
            let values = g.value(first);
            let mut orders = Vec::with_capacity(pairs.len());
            let mut row = 0;
            for p in pairs {
                let conf: Vec<f64> = p
                    .tgt
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let r: Vec<f64> = values[(row + i) * v..(row + i + 1) * v].iter().map(|x| x.f64()).collect();
                        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let lse = max + r.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                        (r[t as usize] - lse).exp()
                    })
                    .collect();
                row += p.tgt.len();
                orders.push(from_order_mask(&ranks_from_confidence(&conf))?);
            }
            let items = disco_items(pairs, &orders, &enc);
            let second = model.disco_logits(g, enc.states, &items, drop)?;
            let second_loss = g.cross_entropy(second, &targets, eps)?;
            g.add(first_loss, second_loss)?
        }
    };
    let total = g.add(word, length)?;
    Ok(LossParts {
        total,
        word: g.scalar(word).f64(),
        length: g.scalar(length).f64(),
        tokens,
    })
}

fn single<T: Real>(model: &Model<T>, src: &[TokenId], tgt: &[TokenId], objective: Objective, eps: f64, rng: &mut RngStream) -> Result<f64> {
    let pair = SentencePair {
        src: src.to_vec(),
        tgt: tgt.to_vec(),
    };
    let mut g = Graph::new();
    let mut rngs = [rng.clone()];
    let parts = batch_loss(&mut g, model, &[&pair], objective, eps, &mut rngs, &mut Dropout::off())?;
    *rng = rngs[0].clone();
    Ok(g.scalar(parts.total).f64())
}

/// Random-context loss of one pair, dropout off.
pub fn disco_loss<T: Real>(model: &Model<T>, src: &[TokenId], tgt: &[TokenId], eps: f64, rng: &mut RngStream) -> Result<f64> {
    single(model, src, tgt, Objective::Disco, eps, rng)
}

pub fn cmlm_loss<T: Real>(model: &Model<T>, src: &[TokenId], tgt: &[TokenId], eps: f64, rng: &mut RngStream) -> Result<f64> {
    single(model, src, tgt, Objective::Cmlm, eps, rng)
}

pub fn easy_first_training_loss<T: Real>(model: &Model<T>, src: &[TokenId], tgt: &[TokenId], eps: f64) -> Result<f64> {
    single(model, src, tgt, Objective::EasyFirst, eps, &mut RngStream::new(0))
}
