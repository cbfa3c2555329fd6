use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real};

/// Linear warmup to `peak` at `warmup`, then `peak·sqrt(warmup/step)`.
pub fn lr_at(step: u64, peak: f64, warmup: u64) -> f64 {
    let step = step.max(1) as f64;
    let warmup = warmup.max(1) as f64;
    if step <= warmup {
        peak * step / warmup
    } else {
        peak * (warmup / step).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.01,
        }
    }
}

/// Bias-corrected Adam with decoupled weight decay:
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + λθ)`.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        AdamW {
            config,
            step: 0,
            m: params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect(),
            v: params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect(),
        }
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// Applies one update from the gradients held in `params` (missing
    /// gradients count as zero). Non-finite gradients abort the step
    /// before anything changes.
    pub fn update(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        let ids: Vec<_> = params.ids().collect();
        if ids.len() != self.m.len() {
            return Err(Error::Dimension("optimizer state does not match parameters".into()));
        }
        for &id in &ids {
            if let Some(g) = params.get(id).grad() {
                if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "gradient of {} at index {i} is {} (step {})",
                        params.name(id),
                        g[i],
                        self.step + 1
                    )));
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let (lr_t, wd, eps) = (T::of(lr), T::of(c.weight_decay), T::of(c.eps));
        let (bc1, bc2) = (T::of(bc1), T::of(bc2));
        for (k, &id) in ids.iter().enumerate() {
            let t = params.get_mut(id);
            let grad: Vec<T> = t.grad().map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); t.len()]);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                let gi = grad[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *x -= lr_t * (mhat / (vhat.sqrt() + eps) + wd * *x);
            }
        }
        Ok(())
    }
}
