use serde::{Deserialize, Serialize};

use crate::data::{batch_by_tokens, SentencePair};
use crate::error::{Error, Result};
use crate::model::{Dropout, Model};
use crate::numerics::{Graph, Real, RngStream};

use super::average::BestCheckpoints;
use super::loss::{batch_loss, Objective};
use super::optim::{lr_at, AdamConfig, AdamW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub max_steps: u64,
    pub tokens_per_batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub dropout: f64,
    /// Size of the best-checkpoint pool averaged at the end.
    pub checkpoints_to_average: usize,
    /// Dev evaluation interval in steps; the last step is always evaluated.
    pub eval_every: u64,
    /// Loss is logged every this many steps.
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Disco,
            peak_lr: 3e-4,
            warmup_steps: 500,
            max_steps: 5000,
            tokens_per_batch: 2048,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-6,
            weight_decay: 0.01,
            label_smoothing: 0.1,
            dropout: 0.1,
            checkpoints_to_average: 5,
            eval_every: 500,
            log_every: 50,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train.{what}")));
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if self.warmup_steps == 0 {
            return bad("warmup_steps must be at least 1");
        }
        if self.max_steps == 0 || self.tokens_per_batch == 0 || self.eval_every == 0 || self.log_every == 0 {
            return bad("max_steps, tokens_per_batch, eval_every and log_every must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("adam_eps must be positive and weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) || !(0.0..1.0).contains(&self.dropout) {
            return bad("label_smoothing and dropout must lie in [0, 1)");
        }
        if self.checkpoints_to_average == 0 {
            return bad("checkpoints_to_average must be at least 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TrainEvent {
    /// Means over the steps since the previous `Loss` event.
    Loss {
        step: u64,
        epoch: u64,
        lr: f64,
        loss: f64,
        word: f64,
        length: f64,
        tokens: usize,
    },
    Eval {
        step: u64,
        metric: f64,
        kept: bool,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Average of the best checkpoints.
    pub model: Model<T>,
    /// Parameters after the last step.
    pub last: Model<T>,
    /// `(step, metric)` of the averaged checkpoints, best first.
    pub averaged: Vec<(u64, f64)>,
    pub events: Vec<TrainEvent>,
    pub steps: u64,
}

/// Trains `model` on `pairs`. `evaluate` scores a model on held-out data
/// (higher is better); its results pick the checkpoints that are averaged
/// into the returned model.
///
/// Randomness is drawn from streams derived from `cfg.seed` by purpose and
/// position (batch order per epoch, context masks per epoch and pair,
/// dropout per step), so runs with the same seed are identical.
pub fn train<T: Real>(
    model: Model<T>,
    pairs: &[SentencePair],
    cfg: &TrainConfig,
    evaluate: &mut dyn FnMut(&Model<T>) -> Result<f64>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Validation("empty training corpus".into()));
    }
    let mut model = model;
    let root = RngStream::new(cfg.seed);
    let mut opt = AdamW::new(cfg.adam(), model.params());
    let mut best = BestCheckpoints::new(cfg.checkpoints_to_average);
    let mut events = Vec::new();
    let mut window = (0.0, 0.0, 0.0, 0usize, 0u64);
    let mut step = 0u64;
    let mut epoch = 0u64;
    while step < cfg.max_steps {
        let mut order_rng = root.derive("batches", &[epoch]);
        let batches = batch_by_tokens(pairs, cfg.tokens_per_batch, Some(&mut order_rng))?;
        for batch in &batches {
            if step >= cfg.max_steps {
                break;
            }
            step += 1;
            let members: Vec<&SentencePair> = batch.indices.iter().map(|&i| &pairs[i]).collect();
            let mut mask_rngs: Vec<RngStream> = batch
                .indices
                .iter()
                .map(|&i| root.derive("mask", &[epoch, i as u64]))
                .collect();
            let mut drop_rng = root.derive("dropout", &[step]);
            let mut drop = Dropout::on(cfg.dropout, &mut drop_rng);
            let mut g = Graph::new();
            let parts = batch_loss(
                &mut g,
                &model,
                &members,
                cfg.objective,
                cfg.label_smoothing,
                &mut mask_rngs,
                &mut drop,
            )?;
            let total = g.scalar(parts.total).f64();
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("loss {total} at step {step}")));
            }
            model.params_mut().zero_grads();
            g.backward(parts.total, model.params_mut())?;
            let lr = lr_at(step, cfg.peak_lr, cfg.warmup_steps);
            opt.update(model.params_mut(), lr)?;

            window.0 += total;
            window.1 += parts.word;
            window.2 += parts.length;
            window.3 += parts.tokens;
            window.4 += 1;
            if step.is_multiple_of(cfg.log_every) || step == cfg.max_steps {
                let k = window.4 as f64;
                events.push(TrainEvent::Loss {
                    step,
                    epoch,
                    lr,
                    loss: window.0 / k,
                    word: window.1 / k,
                    length: window.2 / k,
                    tokens: window.3,
                });
                window = (0.0, 0.0, 0.0, 0, 0);
            }
            if step.is_multiple_of(cfg.eval_every) || step == cfg.max_steps {
                let metric = evaluate(&model)?;
                if !metric.is_finite() {
                    return Err(Error::NonFinite(format!("dev metric {metric} at step {step}")));
                }
                let kept = best.offer(metric, step, model.params());
                events.push(TrainEvent::Eval { step, metric, kept });
            }
        }
        epoch += 1;
    }
    let averaged = Model::from_parts(model.config().clone(), best.average()?)?;
    Ok(TrainOutcome {
        model: averaged,
        averaged: best.entries().iter().map(|e| (e.step, e.metric)).collect(),
        last: model,
        events,
        steps: step,
    })
}
