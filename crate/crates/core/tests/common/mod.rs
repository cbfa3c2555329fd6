//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use disco::data::TokenId;
use disco::inference::{ConditionalModel, Prediction, Request};
use disco::model::{Model, VisibilityMask};
use disco::Result;

/// Plain-`f64` view of a model's parameters, looked up by name.
pub struct Weights<'a> {
    model: &'a Model<f64>,
}

impl<'a> Weights<'a> {
    pub fn new(model: &'a Model<f64>) -> Self {
        Weights { model }
    }

    fn t(&self, name: &str) -> (&[usize], &[f64]) {
        let t = self
            .model
            .params()
            .by_name(name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        (t.shape(), t.data())
    }

    fn row(&self, name: &str, r: usize) -> Vec<f64> {
        let (shape, data) = self.t(name);
        let c = shape[1];
        data[r * c..(r + 1) * c].to_vec()
    }

    /// `x · W + b` for the linear layer `name`.
    fn linear(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let (shape, w) = self.t(&format!("{name}.w"));
        let (_, b) = self.t(&format!("{name}.b"));
        let (i, o) = (shape[0], shape[1]);
        assert_eq!(x.len(), i);
        (0..o)
            .map(|j| b[j] + (0..i).map(|k| x[k] * w[k * o + j]).sum::<f64>())
            .collect()
    }

    fn norm(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let (_, g) = self.t(&format!("{name}.g"));
        let (_, b) = self.t(&format!("{name}.b"));
        let d = x.len() as f64;
        let mean = x.iter().sum::<f64>() / d;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let s = (var + 1e-5).sqrt();
        x.iter()
            .enumerate()
            .map(|(i, v)| g[i] * (v - mean) / s + b[i])
            .collect()
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Multi-head attention of one query over `keys`/`values`; no keys gives a
/// zero vector.
fn attend(q: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>], heads: usize) -> Vec<f64> {
    let d = q.len();
    let dh = d / heads;
    let mut out = vec![0.0; d];
    if keys.is_empty() {
        return out;
    }
    for h in 0..heads {
        let r = h * dh..(h + 1) * dh;
        let scores: Vec<f64> = keys
            .iter()
            .map(|k| q[r.clone()].iter().zip(&k[r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = e.iter().sum();
        for (p, v) in e.iter().zip(values) {
            for (o, x) in out[r.clone()].iter_mut().zip(&v[r.clone()]) {
                *o += p / z * x;
            }
        }
    }
    out
}

fn ffn(w: &Weights<'_>, name: &str, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = w.linear(&format!("{name}.up"), x).into_iter().map(gelu).collect();
    w.linear(&format!("{name}.down"), &h)
}

/// Encoder states for `src`, one row per input (LENGTH token first).
pub fn oracle_encode(model: &Model<f64>, src: &[TokenId]) -> Vec<Vec<f64>> {
    let w = Weights::new(model);
    let c = model.config();
    let mut ids = vec![disco::data::LENGTH as usize];
    ids.extend(src.iter().map(|&t| t as usize));
    let mut h: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(i, &t)| add(&w.row("src_embed", t), &w.row("enc.pos", i)))
        .collect();
    for l in 0..c.enc_layers {
        let x: Vec<Vec<f64>> = h.iter().map(|r| w.norm(&format!("enc.{l}.ln_attn"), r)).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|r| w.linear(&format!("enc.{l}.attn.k"), r)).collect();
        let v: Vec<Vec<f64>> = x.iter().map(|r| w.linear(&format!("enc.{l}.attn.v"), r)).collect();
        for (i, xi) in x.iter().enumerate() {
            let q = w.linear(&format!("enc.{l}.attn.q"), xi);
            let a = w.linear(&format!("enc.{l}.attn.o"), &attend(&q, &k, &v, c.heads));
            h[i] = add(&h[i], &a);
        }
        for hi in h.iter_mut() {
            let f = ffn(&w, &format!("enc.{l}.ffn"), &w.norm(&format!("enc.{l}.ln_ffn"), hi));
            *hi = add(hi, &f);
        }
    }
    h.iter().map(|r| w.norm("enc.norm", r)).collect()
}

/// Logits of target position `n` alone, computed from the tokens row `n`
/// of `mask` observes and nothing else.
pub fn oracle_row(model: &Model<f64>, enc: &[Vec<f64>], tgt: &[TokenId], mask: &VisibilityMask, n: usize) -> Vec<f64> {
    let w = Weights::new(model);
    let c = model.config();
    let seen: Vec<usize> = (0..tgt.len()).filter(|&m| mask.observes(n, m)).collect();
    let kv_in: Vec<Vec<f64>> = seen
        .iter()
        .map(|&m| add(&w.row("tgt_embed", tgt[m] as usize), &w.row("dec.pos", m)))
        .collect();
    let mut h = w.row("dec.pos", n);
    for l in 0..c.dec_layers {
        let p = format!("dec.{l}");
        let kv: Vec<Vec<f64>> = kv_in.iter().map(|r| w.norm(&format!("{p}.ln_kv"), r)).collect();
        let k: Vec<Vec<f64>> = kv.iter().map(|r| w.linear(&format!("{p}.self.k"), r)).collect();
        let v: Vec<Vec<f64>> = kv.iter().map(|r| w.linear(&format!("{p}.self.v"), r)).collect();
        let q = w.linear(&format!("{p}.self.q"), &w.norm(&format!("{p}.ln_self"), &h));
        h = add(&h, &w.linear(&format!("{p}.self.o"), &attend(&q, &k, &v, c.heads)));

        let ek: Vec<Vec<f64>> = enc.iter().map(|r| w.linear(&format!("{p}.cross.k"), r)).collect();
        let ev: Vec<Vec<f64>> = enc.iter().map(|r| w.linear(&format!("{p}.cross.v"), r)).collect();
        let q = w.linear(&format!("{p}.cross.q"), &w.norm(&format!("{p}.ln_cross"), &h));
        h = add(&h, &w.linear(&format!("{p}.cross.o"), &attend(&q, &ek, &ev, c.heads)));

        let f = ffn(&w, &format!("{p}.ffn"), &w.norm(&format!("{p}.ln_ffn"), &h));
        h = add(&h, &f);
    }
    let x = w.norm("dec.norm", &h);
    (0..c.tgt_vocab)
        .map(|t| w.row("tgt_embed", t).iter().zip(&x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Decoder given by an explicit table. Keys are `(length, position,
/// observed (position, token) pairs in increasing position)`; a query the
/// table does not list is a test failure, so the table also pins down which
/// contexts the decoder may ask for.
pub struct TableModel {
    pub length_log_probs: Vec<f64>,
    pub table: HashMap<(usize, usize, Vec<(usize, TokenId)>), Prediction>,
}

impl TableModel {
    pub fn new(length_log_probs: Vec<f64>) -> Self {
        TableModel {
            length_log_probs,
            table: HashMap::new(),
        }
    }

    pub fn set(&mut self, len: usize, pos: usize, seen: &[(usize, TokenId)], token: TokenId, prob: f64) {
        self.table.insert((len, pos, seen.to_vec()), Prediction { token, prob });
    }
}

impl ConditionalModel for TableModel {
    type Context = ();

    fn context(&self, _src: &[TokenId]) -> Result<()> {
        Ok(())
    }

    fn length_log_probs(&self, _ctx: &()) -> Result<Vec<f64>> {
        Ok(self.length_log_probs.clone())
    }

    fn predict(&self, _ctx: &(), requests: &[Request<'_>]) -> Result<Vec<Vec<Prediction>>> {
        Ok(requests
            .iter()
            .map(|r| {
                let len = r.tokens.len();
                (0..len)
                    .map(|n| {
                        let seen: Vec<(usize, TokenId)> =
                            (0..len).filter(|&m| r.mask.observes(n, m)).map(|m| (m, r.tokens[m])).collect();
                        *self
                            .table
                            .get(&(len, n, seen.clone()))
                            .unwrap_or_else(|| panic!("table has no entry for length {len}, position {n}, context {seen:?}"))
                    })
                    .collect()
            })
            .collect())
    }
}

pub const HONG: TokenId = 5;
pub const KONG: TokenId = 6;
pub const NEW: TokenId = 7;
pub const YORK: TokenId = 8;

/// Two-word, two-mode table: "Hong Kong" or "New York". Each position
/// follows the other when it sees it; alone, position 0 leans to Hong and
/// position 1 (slightly more confidently) to York. "New" given "York" stays
/// below York's own confidence so easy-first keeps the same order.
pub fn two_mode_table() -> TableModel {
    let mut m = TableModel::new(vec![-2.0, -0.2, -2.5]);
    m.set(2, 0, &[], HONG, 0.51);
    m.set(2, 1, &[], YORK, 0.52);
    m.set(2, 0, &[(1, KONG)], HONG, 0.95);
    m.set(2, 0, &[(1, YORK)], NEW, 0.50);
    m.set(2, 1, &[(0, HONG)], KONG, 0.95);
    m.set(2, 1, &[(0, NEW)], YORK, 0.95);
    m
}

pub fn is_mixed(tokens: &[TokenId]) -> bool {
    tokens == [HONG, YORK] || tokens == [NEW, KONG]
}
