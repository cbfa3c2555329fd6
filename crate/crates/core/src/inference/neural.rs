use serde::{Deserialize, Serialize};

use crate::context::autoregressive_mask;
use crate::data::{TokenId, EOS, NUM_SPECIALS, PAD};
use crate::error::{Error, Result};
use crate::model::{apply_mask_symbol, shift_right, ContextItem, DecoderKind, DiscoItem, Dropout, Model, VisibilityMask};
use crate::numerics::{Graph, Real, Tensor, Var};

use super::beam::{ar_beam_search, NextTokenModel};
use super::iterative::{mask_predict, refine, Ordering};
use super::trace::TraceRecord;
use super::{length_beam, ConditionalModel, Prediction, Request};

/// Hidden positions of a mask whose rows all agree off the diagonal.
fn shared_hidden(mask: &VisibilityMask) -> Result<Vec<bool>> {
    let n = mask.size();
    let hidden: Vec<bool> = (0..n)
        .map(|m| !(0..n).any(|r| r != m && mask.observes(r, m)))
        .collect();
    for r in 0..n {
        for m in 0..n {
            if r != m && mask.observes(r, m) == hidden[m] {
                return Err(Error::Validation(
                    "the masked-LM decoder needs identical visibility rows".into(),
                ));
            }
        }
    }
    Ok(hidden)
}

fn split_rows<T: Real>(g: &Graph<T>, logits: Var, lens: &[usize]) -> Vec<Vec<Vec<f64>>> {
    let (_, v) = g.shape(logits);
    let data = g.value(logits);
    let mut out = Vec::with_capacity(lens.len());
    let mut row = 0;
    for &n in lens {
        out.push(
            (0..n)
                .map(|i| data[(row + i) * v..(row + i + 1) * v].iter().map(|x| x.f64()).collect())
                .collect(),
        );
        row += n;
    }
    out
}

fn argmax_word(logits: &[f64]) -> Prediction {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + total.ln();
    let first = if logits.len() > NUM_SPECIALS { NUM_SPECIALS } else { 0 };
    let mut best = first;
    for i in first + 1..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    Prediction {
        token: best as TokenId,
        prob: (logits[best] - lse).exp(),
    }
}

impl<T: Real> ConditionalModel for Model<T> {
    type Context = Tensor<T>;

    fn context(&self, src: &[TokenId]) -> Result<Tensor<T>> {
        self.encode(src)
    }

    fn length_log_probs(&self, ctx: &Tensor<T>) -> Result<Vec<f64>> {
        self.predict_length(ctx)
    }

    fn predict(&self, ctx: &Tensor<T>, requests: &[Request<'_>]) -> Result<Vec<Vec<Prediction>>> {
        let mut g = Graph::new();
        let states = g.input_tensor(ctx);
        let span = (0, ctx.as_matrix().0);
        let lens: Vec<usize> = requests.iter().map(|r| r.tokens.len()).collect();
        let logits = if self.config().decoder.has_contextless_kv() {
            let items: Vec<DiscoItem> = requests
                .iter()
                .map(|r| DiscoItem {
                    tokens: r.tokens,
                    mask: Some(r.mask),
                    enc_span: span,
                })
                .collect();
            self.disco_logits(&mut g, states, &items, &mut Dropout::off())?
        } else if self.config().decoder == DecoderKind::Cmlm {
            let inputs: Vec<Vec<TokenId>> = requests
                .iter()
                .map(|r| {
                    let hidden = shared_hidden(r.mask)?;
                    let kept: Vec<bool> = hidden.iter().map(|h| !h).collect();
                    Ok(apply_mask_symbol(r.tokens, &kept))
                })
                .collect::<Result<_>>()?;
            let items: Vec<ContextItem> = inputs
                .iter()
                .map(|t| ContextItem {
                    inputs: t,
                    causal: false,
                    enc_span: span,
                })
                .collect();
            self.contextual_logits(&mut g, states, &items, &mut Dropout::off())?
        } else {
            return Err(Error::Validation(
                "a standard left-to-right decoder cannot refine in parallel".into(),
            ));
        };
        Ok(split_rows(&g, logits, &lens)
            .into_iter()
            .map(|rows| rows.iter().map(|r| argmax_word(r)).collect())
            .collect())
    }
}

impl<T: Real> NextTokenModel for Model<T> {
    type Context = Tensor<T>;

    fn context(&self, src: &[TokenId]) -> Result<Tensor<T>> {
        self.encode(src)
    }

    fn next_log_probs(&self, ctx: &Tensor<T>, prefixes: &[&[TokenId]]) -> Result<Vec<Vec<Option<f64>>>> {
        let kind = self.config().decoder;
        if !matches!(kind, DecoderKind::Autoregressive { .. }) {
            return Err(Error::Validation("beam search needs a left-to-right model".into()));
        }
        let mut g = Graph::new();
        let states = g.input_tensor(ctx);
        let span = (0, ctx.as_matrix().0);
        let padded: Vec<Vec<TokenId>> = prefixes
            .iter()
            .map(|p| p.iter().copied().chain([PAD]).collect())
            .collect();
        let lens: Vec<usize> = padded.iter().map(Vec::len).collect();
        let logits = if kind.has_contextless_kv() {
            let masks: Vec<VisibilityMask> = lens.iter().map(|&n| autoregressive_mask(n)).collect();
            let items: Vec<DiscoItem> = padded
                .iter()
                .zip(&masks)
                .map(|(t, m)| DiscoItem {
                    tokens: t,
                    mask: Some(m),
                    enc_span: span,
                })
                .collect();
            self.disco_logits(&mut g, states, &items, &mut Dropout::off())?
        } else {
            let inputs: Vec<Vec<TokenId>> = padded.iter().map(|t| shift_right(t)).collect();
            let items: Vec<ContextItem> = inputs
                .iter()
                .map(|t| ContextItem {
                    inputs: t,
                    causal: true,
                    enc_span: span,
                })
                .collect();
            self.contextual_logits(&mut g, states, &items, &mut Dropout::off())?
        };
        Ok(split_rows(&g, logits, &lens)
            .into_iter()
            .map(|rows| {
                let last = rows.last().expect("non-empty");
                let max = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + last.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                last.iter()
                    .enumerate()
                    .map(|(i, z)| {
                        (i as TokenId == EOS || i >= NUM_SPECIALS).then_some(z - lse)
                    })
                    .collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    EasyFirst,
    MaskPredict,
    LeftToRight,
    RightToLeft,
    AllButItself,
    /// Left-to-right beam search (autoregressive models).
    Beam,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown decoding algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub algorithm: Algorithm,
    /// Candidate lengths decoded in parallel.
    pub length_beam: usize,
    pub max_iter: usize,
    /// Beam width of left-to-right search.
    pub beam: usize,
    /// Length penalty exponent of left-to-right search.
    pub alpha: f64,
    /// Mask-predict stops before an iteration that re-predicts nothing.
    pub early_stop: bool,
    /// Run one extra iteration after convergence and report whether the
    /// returned sequence survives it.
    pub check_fixed_point: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            algorithm: Algorithm::EasyFirst,
            length_beam: 5,
            max_iter: 10,
            beam: 5,
            alpha: 1.0,
            early_stop: false,
            check_fixed_point: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length_beam == 0 || self.max_iter == 0 || self.beam == 0 {
            return Err(Error::Config(
                "decode.length_beam, decode.max_iter and decode.beam must be positive".into(),
            ));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("decode.alpha {} must be >= 0", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub tokens: Vec<TokenId>,
    pub steps: usize,
    pub converged: bool,
    pub fixed_point: Option<bool>,
    pub trace: Vec<TraceRecord>,
}

/// Decodes one source sentence with the configured algorithm.
pub fn decode_sentence<T: Real>(model: &Model<T>, src: &[TokenId], cfg: &DecodeConfig) -> Result<Translation> {
    let ctx = model.encode(src)?;
    if cfg.algorithm == Algorithm::Beam {
        let cap = (2 * src.len() + 8).min(model.config().max_length_bins);
        let out = ar_beam_search(model, &ctx, cfg.beam, cfg.alpha, cap)?;
        return Ok(Translation {
            tokens: out.tokens,
            steps: out.steps,
            converged: out.finished,
            fixed_point: None,
            trace: out.trace,
        });
    }
    let lp = model.predict_length(&ctx)?;
    let lengths = length_beam(&lp, cfg.length_beam.min(lp.len()))?;
    let out = match cfg.algorithm {
        Algorithm::MaskPredict => mask_predict(model, &ctx, &lengths, cfg.max_iter, cfg.early_stop)?,
        alg => {
            let ordering = match alg {
                Algorithm::EasyFirst => Ordering::EasyFirst,
                Algorithm::LeftToRight => Ordering::LeftToRight,
                Algorithm::RightToLeft => Ordering::RightToLeft,
                _ => Ordering::AllButItself,
            };
            refine(model, &ctx, &lengths, ordering, cfg.max_iter, cfg.check_fixed_point)?
        }
    };
    Ok(Translation {
        tokens: out.tokens().to_vec(),
        steps: out.steps,
        converged: out.converged,
        fixed_point: out.fixed_point,
        trace: out.trace,
    })
}
