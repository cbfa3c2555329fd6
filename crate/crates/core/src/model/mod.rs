//! Encoder–decoder network.
//!
//! The encoder is a standard pre-norm transformer over `[LENGTH, x_1..x_S]`.
//! The disentangled decoder keeps two streams per target position `n`:
//!
//! * keys/values of every layer are projections of `w_n + p_n` only, so they
//!   never carry information from other positions;
//! * the query stream starts from `p_n` alone and is refined layer by layer
//!   through self-attention restricted to the visibility row of `n`, then
//!   unmasked cross-attention and a feed-forward block.
//!
//! Row `n` of the output therefore depends only on the source, the positions,
//! and the tokens that row `n` observes, whatever the mask looks like.
//!
//! Parameter names (stable, used by checkpoints):
//! `src_embed`, `tgt_embed` (tied with the output projection), `enc.pos`,
//! `dec.pos`, `enc.{i}.{ln_attn,attn.{q,k,v,o},ln_ffn,ffn.{up,down}}`,
//! `enc.norm`, `dec.{i}.{ln_self,ln_kv,self.{q,k,v,o},ln_cross,cross.{q,k,v,o},
//! ln_ffn,ffn.{up,down}}`, `dec.norm`, `length`. Linear layers store `.w`
//! (`in×out`) and `.b`; norms store `.g` and `.b`.

mod checkpoint;
mod config;
mod mask;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{default_length_bins, DecoderKind, ModelConfig};
pub use mask::VisibilityMask;

use rand_distr::{Distribution, Normal};

use crate::data::vocab::{TokenId, EOS, LENGTH, MASK};
use crate::error::{Error, Result};
use crate::numerics::{kernels, AttnBlock, Graph, ParamId, ParamStore, Real, RngStream, Tensor, Var};

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone)]
struct EncLayer {
    ln_attn: Norm,
    attn: Attn,
    ln_ffn: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct DecLayer {
    ln_self: Norm,
    ln_kv: Option<Norm>,
    self_attn: Attn,
    ln_cross: Norm,
    cross: Attn,
    ln_ffn: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct Layout {
    src_embed: ParamId,
    tgt_embed: ParamId,
    enc_pos: ParamId,
    dec_pos: ParamId,
    enc: Vec<EncLayer>,
    enc_norm: Norm,
    dec: Vec<DecLayer>,
    dec_norm: Norm,
    length: Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

type Register<'a> = dyn FnMut(&str, usize, usize, Init) -> Result<ParamId> + 'a;

impl Layout {
    fn build(c: &ModelConfig, reg: &mut Register<'_>) -> Result<Self> {
        let d = c.model_dim;
        let linear = |reg: &mut Register<'_>, name: &str, i: usize, o: usize| -> Result<Linear> {
            Ok(Linear {
                w: reg(&format!("{name}.w"), i, o, Init::Normal)?,
                b: reg(&format!("{name}.b"), 1, o, Init::Zeros)?,
            })
        };
        let norm = |reg: &mut Register<'_>, name: &str| -> Result<Norm> {
            Ok(Norm {
                g: reg(&format!("{name}.g"), 1, d, Init::Ones)?,
                b: reg(&format!("{name}.b"), 1, d, Init::Zeros)?,
            })
        };
        let attn = |reg: &mut Register<'_>, name: &str| -> Result<Attn> {
            Ok(Attn {
                q: linear(reg, &format!("{name}.q"), d, d)?,
                k: linear(reg, &format!("{name}.k"), d, d)?,
                v: linear(reg, &format!("{name}.v"), d, d)?,
                o: linear(reg, &format!("{name}.o"), d, d)?,
            })
        };
        let ffn = |reg: &mut Register<'_>, name: &str| -> Result<Ffn> {
            Ok(Ffn {
                up: linear(reg, &format!("{name}.up"), d, c.hidden_dim)?,
                down: linear(reg, &format!("{name}.down"), c.hidden_dim, d)?,
            })
        };

        let src_embed = reg("src_embed", c.src_vocab, d, Init::Normal)?;
        let tgt_embed = reg("tgt_embed", c.tgt_vocab, d, Init::Normal)?;
        let enc_pos = reg("enc.pos", c.max_positions + 1, d, Init::Normal)?;
        let dec_pos = reg("dec.pos", c.max_target_rows(), d, Init::Normal)?;
        let mut enc = Vec::with_capacity(c.enc_layers);
        for i in 0..c.enc_layers {
            enc.push(EncLayer {
                ln_attn: norm(reg, &format!("enc.{i}.ln_attn"))?,
                attn: attn(reg, &format!("enc.{i}.attn"))?,
                ln_ffn: norm(reg, &format!("enc.{i}.ln_ffn"))?,
                ffn: ffn(reg, &format!("enc.{i}.ffn"))?,
            });
        }
        let enc_norm = norm(reg, "enc.norm")?;
        let mut dec = Vec::with_capacity(c.dec_layers);
        for i in 0..c.dec_layers {
            let ln_self = norm(reg, &format!("dec.{i}.ln_self"))?;
            let ln_kv = if c.decoder.has_contextless_kv() {
                Some(norm(reg, &format!("dec.{i}.ln_kv"))?)
            } else {
                None
            };
            dec.push(DecLayer {
                ln_self,
                ln_kv,
                self_attn: attn(reg, &format!("dec.{i}.self"))?,
                ln_cross: norm(reg, &format!("dec.{i}.ln_cross"))?,
                cross: attn(reg, &format!("dec.{i}.cross"))?,
                ln_ffn: norm(reg, &format!("dec.{i}.ln_ffn"))?,
                ffn: ffn(reg, &format!("dec.{i}.ffn"))?,
            });
        }
        let dec_norm = norm(reg, "dec.norm")?;
        let length = linear(reg, "length", d, c.max_length_bins)?;
        Ok(Layout {
            src_embed,
            tgt_embed,
            enc_pos,
            dec_pos,
            enc,
            enc_norm,
            dec,
            dec_norm,
            length,
        })
    }
}

/// Dropout switch threaded through a forward pass.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut RngStream>,
}

impl<'r> Dropout<'r> {
    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn on(rate: f64, rng: &'r mut RngStream) -> Self {
        Dropout {
            rate,
            rng: Some(rng),
        }
    }

    fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => g.dropout(x, self.rate, rng),
            _ => x,
        }
    }
}

/// Encoder output for a stack of sentences: sentence `i` occupies rows
/// `spans[i].0 .. spans[i].0 + spans[i].1` of `states`, LENGTH row first.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub states: Var,
    pub spans: Vec<(usize, usize)>,
}

/// One target sequence for the disentangled decoder.
#[derive(Debug, Clone, Copy)]
pub struct DiscoItem<'a> {
    pub tokens: &'a [TokenId],
    /// `None` means every row observes nothing.
    pub mask: Option<&'a VisibilityMask>,
    /// Encoder rows this sequence cross-attends to.
    pub enc_span: (usize, usize),
}

/// One input sequence for the contextual (standard) decoder.
#[derive(Debug, Clone, Copy)]
pub struct ContextItem<'a> {
    pub inputs: &'a [TokenId],
    pub causal: bool,
    pub enc_span: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Real> Model<T> {
    /// Fresh model: weights from N(0, 0.02), biases zero, norms at γ=1, β=0.
    pub fn new(config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, &mut |name, r, c, init| {
            let t = match init {
                Init::Normal => Tensor::from_fn(vec![r, c], |_| T::of(normal.sample(rng))),
                Init::Zeros => Tensor::zeros(vec![r, c]),
                Init::Ones => Tensor::from_fn(vec![r, c], |_| T::one()),
            };
            params.add(name, t)
        })?;
        Ok(Model {
            config,
            params,
            layout,
        })
    }

    /// Reassemble a model from a configuration and stored tensors; names and
    /// shapes must match what the configuration implies.
    pub fn from_parts(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let mut expected = Vec::new();
        let layout = Layout::build(&config, &mut |name, r, c, _| {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Validation(format!("missing parameter {name}")))?;
            if params.get(id).shape() != [r, c] {
                return Err(Error::Dimension(format!(
                    "parameter {name} has shape {:?}, expected [{r}, {c}]",
                    params.get(id).shape()
                )));
            }
            expected.push(id);
            Ok(id)
        })?;
        if expected.len() != params.len() {
            return Err(Error::Validation(format!(
                "{} stored parameters, configuration uses {}",
                params.len(),
                expected.len()
            )));
        }
        Ok(Model {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn check_ids(&self, ids: &[TokenId], vocab: usize, side: &str) -> Result<()> {
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= vocab) {
            return Err(Error::Index(format!("{side} token {bad} with vocabulary {vocab}")));
        }
        Ok(())
    }

    fn linear(&self, g: &mut Graph<T>, l: Linear, x: Var) -> Result<Var> {
        let w = g.param(&self.params, l.w);
        let b = g.param(&self.params, l.b);
        let h = g.matmul(x, w)?;
        g.add_row(h, b)
    }

    fn norm(&self, g: &mut Graph<T>, n: Norm, x: Var) -> Result<Var> {
        let gain = g.param(&self.params, n.g);
        let bias = g.param(&self.params, n.b);
        g.layer_norm(x, gain, bias)
    }

    fn ffn(&self, g: &mut Graph<T>, f: Ffn, x: Var) -> Result<Var> {
        let h = self.linear(g, f.up, x)?;
        let h = g.gelu(h);
        self.linear(g, f.down, h)
    }

    fn embed(&self, g: &mut Graph<T>, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = g.param(&self.params, table);
        g.gather(t, ids)
    }

    /// Decoder position embeddings for items of the given lengths.
    fn dec_positions(&self, g: &mut Graph<T>, lens: &[usize]) -> Result<Var> {
        let pos: Vec<usize> = lens.iter().flat_map(|&n| 0..n).collect();
        self.embed(g, self.layout.dec_pos, &pos)
    }

    /// Encodes a stack of source sentences, prepending LENGTH to each.
    pub fn encode_batch(
        &self,
        g: &mut Graph<T>,
        srcs: &[&[TokenId]],
        drop: &mut Dropout<'_>,
    ) -> Result<Encoded> {
        let mut ids = Vec::new();
        let mut pos = Vec::new();
        let mut spans = Vec::with_capacity(srcs.len());
        for src in srcs {
            if src.len() > self.config.max_positions {
                return Err(Error::Length(format!(
                    "source of {} tokens exceeds {}",
                    src.len(),
                    self.config.max_positions
                )));
            }
            self.check_ids(src, self.config.src_vocab, "source")?;
            spans.push((ids.len(), src.len() + 1));
            ids.push(LENGTH as usize);
            ids.extend(src.iter().map(|&t| t as usize));
            pos.extend(0..=src.len());
        }
        let w = self.embed(g, self.layout.src_embed, &ids)?;
        let p = self.embed(g, self.layout.enc_pos, &pos)?;
        let mut h = g.add(w, p)?;
        h = drop.apply(g, h);
        let blocks: Vec<AttnBlock> = spans
            .iter()
            .map(|&(s, n)| AttnBlock {
                q_start: s,
                q_len: n,
                k_start: s,
                k_len: n,
                visible: None,
            })
            .collect();
        let heads = self.config.heads;
        for layer in &self.layout.enc {
            let x = self.norm(g, layer.ln_attn, h)?;
            let q = self.linear(g, layer.attn.q, x)?;
            let k = self.linear(g, layer.attn.k, x)?;
            let v = self.linear(g, layer.attn.v, x)?;
            let a = g.attention(q, k, v, heads, blocks.clone())?;
            let a = self.linear(g, layer.attn.o, a)?;
            let a = drop.apply(g, a);
            h = g.add(h, a)?;
            let x = self.norm(g, layer.ln_ffn, h)?;
            let f = self.ffn(g, layer.ffn, x)?;
            let f = drop.apply(g, f);
            h = g.add(h, f)?;
        }
        let states = self.norm(g, self.layout.enc_norm, h)?;
        Ok(Encoded { states, spans })
    }

    /// Length logits (`B × max_length_bins`) from each LENGTH-token state;
    /// column `l` scores target length `l + 1`.
    pub fn length_logits(&self, g: &mut Graph<T>, enc: &Encoded) -> Result<Var> {
        let rows: Vec<usize> = enc.spans.iter().map(|&(s, _)| s).collect();
        let x = g.gather(enc.states, &rows)?;
        self.linear(g, self.layout.length, x)
    }

    fn cross_attend(
        &self,
        g: &mut Graph<T>,
        layer: &DecLayer,
        h: Var,
        enc_states: Var,
        blocks: &[AttnBlock],
    ) -> Result<Var> {
        let x = self.norm(g, layer.ln_cross, h)?;
        let q = self.linear(g, layer.cross.q, x)?;
        let k = self.linear(g, layer.cross.k, enc_states)?;
        let v = self.linear(g, layer.cross.v, enc_states)?;
        let a = g.attention(q, k, v, self.config.heads, blocks.to_vec())?;
        self.linear(g, layer.cross.o, a)
    }

    fn check_targets(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() > self.config.max_target_rows() {
            return Err(Error::Length(format!(
                "target of {} positions exceeds {}",
                tokens.len(),
                self.config.max_target_rows()
            )));
        }
        self.check_ids(tokens, self.config.tgt_vocab, "target")
    }

    fn output_logits(&self, g: &mut Graph<T>, h: Var) -> Result<Var> {
        let h = self.norm(g, self.layout.dec_norm, h)?;
        let e = g.param(&self.params, self.layout.tgt_embed);
        g.matmul_bt(h, e)
    }

    /// Disentangled decoding of a stack of target sequences; returns one
    /// logit row per target position, stacked in item order.
    pub fn disco_logits(
        &self,
        g: &mut Graph<T>,
        enc_states: Var,
        items: &[DiscoItem<'_>],
        drop: &mut Dropout<'_>,
    ) -> Result<Var> {
        let mut ids = Vec::new();
        let mut lens = Vec::with_capacity(items.len());
        let mut self_blocks = Vec::with_capacity(items.len());
        let mut cross_blocks = Vec::with_capacity(items.len());
        for item in items {
            let n = item.tokens.len();
            self.check_targets(item.tokens)?;
            if let Some(m) = item.mask {
                if m.size() != n {
                    return Err(Error::Dimension(format!(
                        "mask of size {} for {n} target tokens",
                        m.size()
                    )));
                }
            }
            let start = ids.len();
            self_blocks.push(AttnBlock {
                q_start: start,
                q_len: n,
                k_start: start,
                k_len: n,
                visible: Some(match item.mask {
                    Some(m) => m.as_slice().to_vec(),
                    None => vec![false; n * n],
                }),
            });
            cross_blocks.push(AttnBlock {
                q_start: start,
                q_len: n,
                k_start: item.enc_span.0,
                k_len: item.enc_span.1,
                visible: None,
            });
            ids.extend(item.tokens.iter().map(|&t| t as usize));
            lens.push(n);
        }
        let w = self.embed(g, self.layout.tgt_embed, &ids)?;
        let p = self.dec_positions(g, &lens)?;
        let kv_in = g.add(w, p)?;
        let kv_in = drop.apply(g, kv_in);
        let mut h = drop.apply(g, p);
        let heads = self.config.heads;
        for layer in &self.layout.dec {
            let ln_kv = layer.ln_kv.ok_or_else(|| {
                Error::Validation("decoder has no contextless key/value norms".into())
            })?;
            // keys and values: w_n + p_n only, never the running state
            let kv = self.norm(g, ln_kv, kv_in)?;
            let k = self.linear(g, layer.self_attn.k, kv)?;
            let v = self.linear(g, layer.self_attn.v, kv)?;
            let x = self.norm(g, layer.ln_self, h)?;
            let q = self.linear(g, layer.self_attn.q, x)?;
            let a = g.attention(q, k, v, heads, self_blocks.clone())?;
            let a = self.linear(g, layer.self_attn.o, a)?;
            let a = drop.apply(g, a);
            h = g.add(h, a)?;
            let c = self.cross_attend(g, layer, h, enc_states, &cross_blocks)?;
            let c = drop.apply(g, c);
            h = g.add(h, c)?;
            let x = self.norm(g, layer.ln_ffn, h)?;
            let f = self.ffn(g, layer.ffn, x)?;
            let f = drop.apply(g, f);
            h = g.add(h, f)?;
        }
        self.output_logits(g, h)
    }

    /// Standard decoder: every layer's keys, values and queries come from the
    /// running states. `causal` restricts position `n` to inputs `0..=n`.
    pub fn contextual_logits(
        &self,
        g: &mut Graph<T>,
        enc_states: Var,
        items: &[ContextItem<'_>],
        drop: &mut Dropout<'_>,
    ) -> Result<Var> {
        let mut ids = Vec::new();
        let mut lens = Vec::with_capacity(items.len());
        let mut self_blocks = Vec::with_capacity(items.len());
        let mut cross_blocks = Vec::with_capacity(items.len());
        for item in items {
            let n = item.inputs.len();
            self.check_targets(item.inputs)?;
            let start = ids.len();
            self_blocks.push(AttnBlock {
                q_start: start,
                q_len: n,
                k_start: start,
                k_len: n,
                visible: item
                    .causal
                    .then(|| (0..n).flat_map(|i| (0..n).map(move |j| j <= i)).collect()),
            });
            cross_blocks.push(AttnBlock {
                q_start: start,
                q_len: n,
                k_start: item.enc_span.0,
                k_len: item.enc_span.1,
                visible: None,
            });
            ids.extend(item.inputs.iter().map(|&t| t as usize));
            lens.push(n);
        }
        let w = self.embed(g, self.layout.tgt_embed, &ids)?;
        let p = self.dec_positions(g, &lens)?;
        let mut h = g.add(w, p)?;
        h = drop.apply(g, h);
        let heads = self.config.heads;
        for layer in &self.layout.dec {
            let x = self.norm(g, layer.ln_self, h)?;
            let q = self.linear(g, layer.self_attn.q, x)?;
            let k = self.linear(g, layer.self_attn.k, x)?;
            let v = self.linear(g, layer.self_attn.v, x)?;
            let a = g.attention(q, k, v, heads, self_blocks.clone())?;
            let a = self.linear(g, layer.self_attn.o, a)?;
            let a = drop.apply(g, a);
            h = g.add(h, a)?;
            let c = self.cross_attend(g, layer, h, enc_states, &cross_blocks)?;
            let c = drop.apply(g, c);
            h = g.add(h, c)?;
            let x = self.norm(g, layer.ln_ffn, h)?;
            let f = self.ffn(g, layer.ffn, x)?;
            let f = drop.apply(g, f);
            h = g.add(h, f)?;
        }
        self.output_logits(g, h)
    }

    // ---- single-sentence conveniences ----

    /// Encoder states `[S+1 × d]`, LENGTH state first.
    pub fn encode(&self, src: &[TokenId]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let enc = self.encode_batch(&mut g, &[src], &mut Dropout::off())?;
        Ok(g.tensor(enc.states))
    }

    fn enc_leaf(&self, g: &mut Graph<T>, enc: &Tensor<T>) -> Result<(Var, (usize, usize))> {
        let (rows, cols) = enc.as_matrix();
        if cols != self.config.model_dim || rows == 0 {
            return Err(Error::Dimension(format!(
                "encoder states {rows}x{cols}, model width {}",
                self.config.model_dim
            )));
        }
        Ok((g.input_tensor(enc), (0, rows)))
    }

    /// Logits `[N × V]`; row `n` is the distribution of `Y_n` given the
    /// source and the tokens row `n` of `mask` observes.
    pub fn disco_forward(
        &self,
        enc: &Tensor<T>,
        tgt: &[TokenId],
        mask: &VisibilityMask,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let (states, span) = self.enc_leaf(&mut g, enc)?;
        let item = DiscoItem {
            tokens: tgt,
            mask: Some(mask),
            enc_span: span,
        };
        let out = self.disco_logits(&mut g, states, &[item], &mut Dropout::off())?;
        Ok(g.tensor(out))
    }

    /// Standard left-to-right decoder: row `n` scores `Y_n` given `Y_<n`
    /// (inputs are `[EOS, Y_0, .., Y_{N-2}]`). Appending EOS to `tgt` yields
    /// the extra row that scores end-of-sentence.
    pub fn vanilla_ar_forward(&self, enc: &Tensor<T>, tgt: &[TokenId]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let (states, span) = self.enc_leaf(&mut g, enc)?;
        let inputs = shift_right(tgt);
        let item = ContextItem {
            inputs: &inputs,
            causal: true,
            enc_span: span,
        };
        let out = self.contextual_logits(&mut g, states, &[item], &mut Dropout::off())?;
        Ok(g.tensor(out))
    }

    /// Left-to-right scoring with whichever decoder this model carries:
    /// contextless keys/values under a causal visibility mask, or the
    /// standard decoder.
    pub fn ar_forward(&self, enc: &Tensor<T>, tgt: &[TokenId]) -> Result<Tensor<T>> {
        if self.config.decoder.has_contextless_kv() {
            let mask = VisibilityMask::from_fn(tgt.len(), |n, m| m < n);
            self.disco_forward(enc, tgt, &mask)
        } else {
            self.vanilla_ar_forward(enc, tgt)
        }
    }

    /// Bidirectional standard decoder over tokens where masked positions
    /// already hold the mask symbol.
    pub fn cmlm_forward(&self, enc: &Tensor<T>, tokens: &[TokenId]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let (states, span) = self.enc_leaf(&mut g, enc)?;
        let item = ContextItem {
            inputs: tokens,
            causal: false,
            enc_span: span,
        };
        let out = self.contextual_logits(&mut g, states, &[item], &mut Dropout::off())?;
        Ok(g.tensor(out))
    }

    /// Log-probabilities of target lengths `1..=max_length_bins`.
    pub fn predict_length(&self, enc: &Tensor<T>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let (states, span) = self.enc_leaf(&mut g, enc)?;
        let encoded = Encoded {
            states,
            spans: vec![span],
        };
        let logits = self.length_logits(&mut g, &encoded)?;
        Ok(log_softmax(g.value(logits)))
    }
}

/// `[EOS, t_0, .., t_{N-2}]`: decoder inputs for left-to-right scoring.
pub fn shift_right(tgt: &[TokenId]) -> Vec<TokenId> {
    let mut inputs = Vec::with_capacity(tgt.len());
    if !tgt.is_empty() {
        inputs.push(EOS);
        inputs.extend_from_slice(&tgt[..tgt.len() - 1]);
    }
    inputs
}

/// Replace unobserved positions with the mask symbol.
pub fn apply_mask_symbol(tokens: &[TokenId], observed: &[bool]) -> Vec<TokenId> {
    tokens
        .iter()
        .zip(observed)
        .map(|(&t, &o)| if o { t } else { MASK })
        .collect()
}

pub(crate) fn log_softmax<T: Real>(row: &[T]) -> Vec<f64> {
    let row64: Vec<f64> = row.iter().map(|x| x.f64()).collect();
    let lse = kernels::log_sum_exp(&row64);
    row64.iter().map(|z| z - lse).collect()
}

#[cfg(test)]
mod tests;
