//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Every value on the tape is a row-major matrix (scalars are `1×1`). Ops are
//! recorded in evaluation order; `backward` replays them in reverse and
//! accumulates into the gradient buffers of the parameters that fed the tape.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, View};
use crate::numerics::{ParamId, ParamStore, Real, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One independent attention problem inside a stacked batch: queries
/// `q_start..q_start+q_len` attend to keys `k_start..k_start+k_len`.
///
/// `visible` is `q_len × k_len`, row-major; `None` means fully visible.
#[derive(Debug, Clone)]
pub struct AttnBlock {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
    pub visible: Option<Vec<bool>>,
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gather {
        src: Var,
        idx: Vec<usize>,
    },
    Dropout {
        x: Var,
        keep: Vec<T>,
    },
    MaskedSoftmax {
        x: Var,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        blocks: Vec<AttnBlock>,
        probs: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        eps: T,
        probs: Vec<T>,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
}

/// The tape.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("tape nodes are well-formed")
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "input {rows}x{cols} with {} entries",
                data.len()
            )));
        }
        Ok(self.push(rows, cols, data, Op::Input))
    }

    pub fn input_tensor(&mut self, t: &Tensor<T>) -> Var {
        let (r, c) = t.as_matrix();
        self.push(r, c, t.data().to_vec(), Op::Input)
    }

    /// Leaf for a stored parameter; repeated requests share one node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.get(id);
        let (r, c) = t.as_matrix();
        let v = self.push(r, c, t.data().to_vec(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Dimension(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            View::new(self.value(a), m, k),
            View::new(self.value(b), k, n),
            T::zero(),
            &mut out,
        );
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(Error::Dimension(format!("matmul_bt {m}x{k} by ({n}x{k2})^T")));
        }
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            View::new(self.value(a), m, k),
            View::new(self.value(b), n, k).t(),
            T::zero(),
            &mut out,
        );
        Ok(self.push(m, n, out, Op::MatMulBt(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::Dimension(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| *x + *y)
            .collect();
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::Dimension(format!(
                "add_row {r}x{c} with {:?}",
                self.shape(row)
            )));
        }
        let bias = self.value(row);
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|xs| xs.iter().zip(bias).map(|(x, b)| *x + *b))
            .collect();
        Ok(self.push(r, c, out, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| *x * *y)
            .collect();
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| *x * s).collect();
        self.push(r, c, out, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| kernels::gelu(*x)).collect();
        self.push(r, c, out, Op::Gelu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Per-row normalization over the last extent followed by `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, d) = self.shape(x);
        if self.shape(gain) != (1, d) || self.shape(bias) != (1, d) {
            return Err(Error::Dimension(format!("layer_norm width {d}")));
        }
        let mut xhat = vec![T::zero(); r * d];
        let mut rstd = Vec::with_capacity(r);
        for (xs, hs) in self.value(x).chunks(d).zip(xhat.chunks_mut(d)) {
            rstd.push(kernels::normalize_row(xs, hs));
        }
        let g = self.value(gain);
        let b = self.value(bias);
        let out = xhat
            .chunks(d)
            .flat_map(|hs| hs.iter().zip(g).zip(b).map(|((h, g), b)| *h * *g + *b))
            .collect();
        Ok(self.push(
            r,
            d,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Row lookup: output row `i` is row `idx[i]` of `src`.
    pub fn gather(&mut self, src: Var, idx: &[usize]) -> Result<Var> {
        let (rows, c) = self.shape(src);
        if let Some(bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Index(format!("row {bad} of {rows}")));
        }
        let v = self.value(src);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        Ok(self.push(
            idx.len(),
            c,
            out,
            Op::Gather {
                src,
                idx: idx.to_vec(),
            },
        ))
    }

    /// Inverted dropout. With `p == 0` the input is returned unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut RngStream) -> Var {
        if p <= 0.0 {
            return x;
        }
        let (r, c) = self.shape(x);
        let scale = T::of(1.0 / (1.0 - p));
        let keep: Vec<T> = (0..r * c)
            .map(|_| if rng.uniform() >= p { scale } else { T::zero() })
            .collect();
        let out = self
            .value(x)
            .iter()
            .zip(&keep)
            .map(|(a, k)| *a * *k)
            .collect();
        self.push(r, c, out, Op::Dropout { x, keep })
    }

    /// Row-wise softmax restricted to `visible` columns.
    pub fn masked_softmax(&mut self, x: Var, visible: &[bool]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if visible.len() != r * c {
            return Err(Error::Dimension(format!(
                "mask of {} entries for {r}x{c} scores",
                visible.len()
            )));
        }
        let mut out = vec![T::zero(); r * c];
        for ((s, v), o) in self
            .value(x)
            .chunks(c)
            .zip(visible.chunks(c))
            .zip(out.chunks_mut(c))
        {
            kernels::masked_softmax_row(s, v, o);
        }
        Ok(self.push(r, c, out, Op::MaskedSoftmax { x }))
    }

    /// Multi-head scaled dot-product attention over independent blocks.
    ///
    /// `q` has the query rows, `k`/`v` the key rows; all three are `·×d` with
    /// `d` split evenly into `heads`. Query rows not covered by any block
    /// produce zeros.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        blocks: Vec<AttnBlock>,
    ) -> Result<Var> {
        let (qr, d) = self.shape(q);
        let (kr, dk) = self.shape(k);
        if self.shape(v) != (kr, dk) || dk != d {
            return Err(Error::Dimension(format!(
                "attention q {qr}x{d}, k {kr}x{dk}, v {:?}",
                self.shape(v)
            )));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Dimension(format!("{heads} heads for width {d}")));
        }
        for b in &blocks {
            if b.q_start + b.q_len > qr || b.k_start + b.k_len > kr {
                return Err(Error::Dimension(format!("attention block {b:?} out of range")));
            }
            if let Some(m) = &b.visible {
                if m.len() != b.q_len * b.k_len {
                    return Err(Error::Dimension("attention block mask size".into()));
                }
            }
        }
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let total: usize = blocks.iter().map(|b| heads * b.q_len * b.k_len).sum();
        let mut probs = vec![T::zero(); total];
        let mut out = vec![T::zero(); qr * d];
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut offset = 0;
        let mut scores = Vec::new();
        let all_visible = Vec::new();
        for b in &blocks {
            scores.resize(b.k_len, T::zero());
            let visible = match &b.visible {
                Some(m) => m.as_slice(),
                None => all_visible.as_slice(),
            };
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..b.q_len {
                    let qrow = &qv[(b.q_start + i) * d..][cols.clone()];
                    for (j, s) in scores.iter_mut().enumerate() {
                        let krow = &kv[(b.k_start + j) * d..][cols.clone()];
                        *s = dot(qrow, krow) * scale;
                    }
                    let p = &mut probs[offset..offset + b.k_len];
                    if visible.is_empty() {
                        kernels::softmax_row(&scores, p);
                    } else {
                        kernels::masked_softmax_row(
                            &scores,
                            &visible[i * b.k_len..(i + 1) * b.k_len],
                            p,
                        );
                    }
                    let orow = &mut out[(b.q_start + i) * d..][cols.clone()];
                    for (j, pj) in p.iter().enumerate() {
                        if *pj == T::zero() {
                            continue;
                        }
                        let vrow = &vv[(b.k_start + j) * d..][cols.clone()];
                        for (o, x) in orow.iter_mut().zip(vrow) {
                            *o += *pj * *x;
                        }
                    }
                    offset += b.k_len;
                }
            }
        }
        Ok(self.push(
            qr,
            d,
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                blocks,
                probs,
            },
        ))
    }

    /// Mean over rows of the label-smoothed negative log likelihood:
    /// `(1-eps)·NLL(target) + eps·mean_v NLL(v)`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], eps: f64) -> Result<Var> {
        let (r, vocab) = self.shape(logits);
        if targets.len() != r {
            return Err(Error::Dimension(format!(
                "{} targets for {r} logit rows",
                targets.len()
            )));
        }
        if let Some(bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Index(format!("target {bad} with vocabulary {vocab}")));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Validation(format!("label smoothing {eps}")));
        }
        let e = T::of(eps);
        let vf = T::of(vocab as f64);
        let mut probs = vec![T::zero(); r * vocab];
        let mut total = T::zero();
        for ((row, &t), p) in self
            .value(logits)
            .chunks(vocab)
            .zip(targets)
            .zip(probs.chunks_mut(vocab))
        {
            let lse = kernels::log_sum_exp(row);
            let mean_logit = row.iter().copied().sum::<T>() / vf;
            total += (T::one() - e) * (lse - row[t]) + e * (lse - mean_logit);
            for (pv, z) in p.iter_mut().zip(row) {
                *pv = (*z - lse).exp();
            }
        }
        let loss = total / T::of(r as f64);
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                eps: e,
                probs,
            },
        ))
    }

    /// Reverse accumulation from a scalar `loss` into the parameter store.
    /// Gradients add onto whatever the store already holds.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.node_gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads[i]) {
                store.get_mut(*id).accumulate_grad(g);
            }
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to every node on the tape.
    pub fn node_gradients(&self, loss: Var) -> Result<Vec<Option<Vec<T>>>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                let ga = slot(grads, *a, m * k);
                kernels::gemm(
                    View::new(g, m, n),
                    View::new(self.value(*b), k, n).t(),
                    T::one(),
                    ga,
                );
                let gb = slot(grads, *b, k * n);
                kernels::gemm(
                    View::new(self.value(*a), m, k).t(),
                    View::new(g, m, n),
                    T::one(),
                    gb,
                );
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                let ga = slot(grads, *a, m * k);
                kernels::gemm(
                    View::new(g, m, n),
                    View::new(self.value(*b), n, k),
                    T::one(),
                    ga,
                );
                let gb = slot(grads, *b, n * k);
                kernels::gemm(
                    View::new(g, m, n).t(),
                    View::new(self.value(*a), m, k),
                    T::one(),
                    gb,
                );
            }
            Op::Add(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                add_into(slot(grads, *b, g.len()), g);
            }
            Op::AddRow(a, row) => {
                add_into(slot(grads, *a, g.len()), g);
                let gr = slot(grads, *row, cols);
                for gs in g.chunks(cols) {
                    add_into(gr, gs);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, g.len());
                for ((o, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                    *o += *gi * *y;
                }
                let gb = slot(grads, *b, g.len());
                for ((o, gi), x) in gb.iter_mut().zip(g).zip(av) {
                    *o += *gi * *x;
                }
            }
            Op::Scale(a, s) => {
                let ga = slot(grads, *a, g.len());
                for (o, gi) in ga.iter_mut().zip(g) {
                    *o += *gi * *s;
                }
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                let ga = slot(grads, *a, g.len());
                for ((o, gi), x) in ga.iter_mut().zip(g).zip(av) {
                    *o += *gi * kernels::gelu_grad(*x);
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                let ga = slot(grads, *a, n);
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = cols;
                let gv = self.value(*gain).to_vec();
                {
                    let gg = slot(grads, *gain, d);
                    for (gs, hs) in g.chunks(d).zip(xhat.chunks(d)) {
                        for ((o, gi), h) in gg.iter_mut().zip(gs).zip(hs) {
                            *o += *gi * *h;
                        }
                    }
                }
                {
                    let gb = slot(grads, *bias, d);
                    for gs in g.chunks(d) {
                        add_into(gb, gs);
                    }
                }
                let gx = slot(grads, *x, rows * d);
                let df = T::of(d as f64);
                let mut dh = vec![T::zero(); d];
                for r in 0..rows {
                    let gs = &g[r * d..(r + 1) * d];
                    let hs = &xhat[r * d..(r + 1) * d];
                    for ((o, gi), w) in dh.iter_mut().zip(gs).zip(&gv) {
                        *o = *gi * *w;
                    }
                    let mean_dh = dh.iter().copied().sum::<T>() / df;
                    let mean_dh_h = dh.iter().zip(hs).map(|(a, b)| *a * *b).sum::<T>() / df;
                    let out = &mut gx[r * d..(r + 1) * d];
                    for ((o, a), h) in out.iter_mut().zip(&dh).zip(hs) {
                        *o += rstd[r] * (*a - mean_dh - *h * mean_dh_h);
                    }
                }
            }
            Op::Gather { src, idx } => {
                let (sr, c) = self.shape(*src);
                let gs = slot(grads, *src, sr * c);
                for (r, &i) in idx.iter().enumerate() {
                    add_into(&mut gs[i * c..(i + 1) * c], &g[r * c..(r + 1) * c]);
                }
            }
            Op::Dropout { x, keep } => {
                let gx = slot(grads, *x, g.len());
                for ((o, gi), k) in gx.iter_mut().zip(g).zip(keep) {
                    *o += *gi * *k;
                }
            }
            Op::MaskedSoftmax { x } => {
                let p = &node.value;
                let gx = slot(grads, *x, g.len());
                for ((ps, gs), out) in p.chunks(cols).zip(g.chunks(cols)).zip(gx.chunks_mut(cols)) {
                    let s: T = ps.iter().zip(gs).map(|(a, b)| *a * *b).sum();
                    for ((o, pi), gi) in out.iter_mut().zip(ps).zip(gs) {
                        *o += *pi * (*gi - s);
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                blocks,
                probs,
            } => self.backprop_attention(*q, *k, *v, *heads, blocks, probs, g, grads),
            Op::CrossEntropy {
                logits,
                targets,
                eps,
                probs,
            } => {
                let (r, vocab) = self.shape(*logits);
                let scale = g[0] / T::of(r as f64);
                let uniform = *eps / T::of(vocab as f64);
                let gl = slot(grads, *logits, r * vocab);
                for ((out, p), &t) in gl.chunks_mut(vocab).zip(probs.chunks(vocab)).zip(targets) {
                    for (j, (o, pj)) in out.iter_mut().zip(p).enumerate() {
                        let target = if j == t { T::one() - *eps } else { T::zero() };
                        *o += scale * (*pj - target - uniform);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        blocks: &[AttnBlock],
        probs: &[T],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let (qr, d) = self.shape(q);
        let (kr, _) = self.shape(k);
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut gq = vec![T::zero(); qr * d];
        let mut gk = vec![T::zero(); kr * d];
        let mut gv = vec![T::zero(); kr * d];
        let mut dp = Vec::new();
        let mut offset = 0;
        for b in blocks {
            dp.resize(b.k_len, T::zero());
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..b.q_len {
                    let p = &probs[offset..offset + b.k_len];
                    offset += b.k_len;
                    let qi = (b.q_start + i) * d;
                    let grow = &g[qi..][cols.clone()];
                    let mut s = T::zero();
                    for (j, (dpj, pj)) in dp.iter_mut().zip(p).enumerate() {
                        if *pj == T::zero() {
                            *dpj = T::zero();
                            continue;
                        }
                        let kj = (b.k_start + j) * d;
                        *dpj = dot(grow, &vv[kj..][cols.clone()]);
                        s += *pj * *dpj;
                        for (o, x) in gv[kj..][cols.clone()].iter_mut().zip(grow) {
                            *o += *pj * *x;
                        }
                    }
                    for (j, (dpj, pj)) in dp.iter().zip(p).enumerate() {
                        if *pj == T::zero() {
                            continue;
                        }
                        let ds = *pj * (*dpj - s) * scale;
                        let kj = (b.k_start + j) * d;
                        for (c, o) in cols.clone().zip(gq[qi..][cols.clone()].iter_mut()) {
                            *o += ds * kv[kj + c];
                        }
                        for (c, o) in cols.clone().zip(gk[kj..][cols.clone()].iter_mut()) {
                            *o += ds * qv[qi + c];
                        }
                    }
                }
            }
        }
        add_into(slot(grads, q, qr * d), &gq);
        add_into(slot(grads, k, kr * d), &gk);
        add_into(slot(grads, v, kr * d), &gv);
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}
