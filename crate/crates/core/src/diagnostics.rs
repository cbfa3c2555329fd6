//! Self-checks of the network: context leakage under perturbation and
//! finite-difference gradients of the training loss.

use serde::Serialize;

use crate::context::{cloze_mask, sample_disco_mask};
use crate::data::{SentencePair, TokenId, NUM_SPECIALS};
use crate::error::Result;
use crate::model::{DecoderKind, Dropout, Model, ModelConfig, VisibilityMask};
use crate::numerics::{grad_check, GradCheckReport, Graph, ParamStore, RngStream};
use crate::train::{batch_loss, Objective};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakReport {
    pub trials: usize,
    pub rows_checked: usize,
    /// Largest change of any logit in row `n` when every token outside
    /// `Y_obs^n` is replaced.
    pub max_deviation: f64,
}

impl LeakReport {
    fn merge(&mut self, other: &LeakReport) {
        self.trials += other.trials;
        self.rows_checked += other.rows_checked;
        self.max_deviation = self.max_deviation.max(other.max_deviation);
    }
}

/// Mask kinds cycled through by the leak checks.
fn trial_mask(trial: usize, n: usize, rng: &mut RngStream) -> VisibilityMask {
    match trial % 6 {
        // two positions observing each other, the rest random
        0 if n >= 2 => {
            let mut m = sample_disco_mask(n, rng);
            for k in 0..n {
                m.set(0, k, k == 1);
                m.set(1, k, k == 0);
            }
            m
        }
        1 => cloze_mask(n),
        2 => VisibilityMask::empty(n),
        _ => sample_disco_mask(n, rng),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs `trials` random (mask, source, target) instances through `model`
/// and perturbs, for every row, all target tokens that row must not see.
pub fn leak_check_model(model: &Model<f64>, trials: usize, rng: &mut RngStream) -> Result<LeakReport> {
    let cfg = model.config();
    let vocab = cfg.tgt_vocab;
    let max_n = cfg.max_positions.min(cfg.max_length_bins).max(1);
    let mut report = LeakReport {
        trials,
        rows_checked: 0,
        max_deviation: 0.0,
    };
    for trial in 0..trials {
        let n = 1 + rng.below(max_n);
        let src: Vec<TokenId> = (0..1 + rng.below(cfg.max_positions))
            .map(|_| rng.below(cfg.src_vocab) as TokenId)
            .collect();
        let enc = model.encode(&src)?;
        let mask = trial_mask(trial, n, rng);
        let tgt: Vec<TokenId> = (0..n).map(|_| rng.below(vocab) as TokenId).collect();
        let base = model.disco_forward(&enc, &tgt, &mask)?;
        for row in 0..n {
            let mut other = tgt.clone();
            for (pos, t) in other.iter_mut().enumerate() {
                if !mask.observes(row, pos) {
                    *t = ((*t as usize + 1 + rng.below(vocab - 1)) % vocab) as TokenId;
                }
            }
            let alt = model.disco_forward(&enc, &other, &mask)?;
            report.max_deviation = report.max_deviation.max(max_abs_diff(base.row(row), alt.row(row)));
            report.rows_checked += 1;
        }
    }
    Ok(report)
}

/// Random small DisCo configuration; weights are blown up so that leaks
/// would be far above rounding.
fn random_model(rng: &mut RngStream) -> Result<Model<f64>> {
    let heads = [1, 2, 4][rng.below(3)];
    let cfg = ModelConfig {
        enc_layers: 1 + rng.below(2),
        dec_layers: 1 + rng.below(3),
        model_dim: heads * (1 + rng.below(4)),
        hidden_dim: 2 + rng.below(14),
        heads,
        src_vocab: 6 + rng.below(12),
        tgt_vocab: 6 + rng.below(12),
        max_positions: 12,
        max_length_bins: 12,
        dropout: 0.0,
        label_smoothing: 0.0,
        decoder: DecoderKind::Disco,
    };
    let mut model = Model::new(cfg, rng)?;
    let scale = 1.0 + 19.0 * rng.uniform();
    for id in model.params().ids().collect::<Vec<_>>() {
        for x in model.params_mut().get_mut(id).data_mut() {
            *x *= scale;
        }
    }
    Ok(model)
}

/// Leak check over `trials` instances, drawing a fresh random configuration
/// every `per_model` trials.
pub fn leak_suite(trials: usize, per_model: usize, seed: u64) -> Result<LeakReport> {
    let mut rng = RngStream::new(seed);
    let mut report = LeakReport {
        trials: 0,
        rows_checked: 0,
        max_deviation: 0.0,
    };
    let per_model = per_model.max(1);
    while report.trials < trials {
        let model = random_model(&mut rng)?;
        let k = per_model.min(trials - report.trials);
        report.merge(&leak_check_model(&model, k, &mut rng)?);
    }
    Ok(report)
}

/// Smallest useful model: one layer each side, width 4.
pub fn micro_config(decoder: DecoderKind) -> ModelConfig {
    ModelConfig {
        enc_layers: 1,
        dec_layers: 1,
        model_dim: 4,
        hidden_dim: 6,
        heads: 2,
        src_vocab: 9,
        tgt_vocab: 9,
        max_positions: 4,
        max_length_bins: 5,
        dropout: 0.0,
        label_smoothing: 0.0,
        decoder,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub parameters: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
}

impl From<(usize, GradCheckReport)> for GradReport {
    fn from((parameters, r): (usize, GradCheckReport)) -> Self {
        GradReport {
            parameters,
            checked: r.checked,
            max_rel_error: r.max_rel_error,
            worst: r.worst,
        }
    }
}

/// Central-difference check of the full training loss (word plus length
/// terms, label smoothing 0.1) at `coords` random coordinates.
///
/// Key-projection biases are skipped: they shift every attention score of
/// a query equally, so their exact gradient is zero and a finite difference
/// there only measures rounding.
pub fn training_grad_check(
    config: ModelConfig,
    objective: Objective,
    coords: usize,
    step: f64,
    seed: u64,
) -> Result<GradReport> {
    let mut rng = RngStream::new(seed);
    let mut model = Model::<f64>::new(config.clone(), &mut rng)?;
    // training-scale init gives tiny gradients; spread the logits out
    for id in model.params().ids().collect::<Vec<_>>() {
        for x in model.params_mut().get_mut(id).data_mut() {
            *x *= 5.0;
        }
    }
    let word = |rng: &mut RngStream, v: usize| (NUM_SPECIALS + rng.below(v - NUM_SPECIALS)) as TokenId;
    let pairs: Vec<SentencePair> = (0..3)
        .map(|_| {
            let sn = 1 + rng.below(config.max_positions);
            let tn = 1 + rng.below(config.max_positions.min(config.max_length_bins));
            SentencePair {
                src: (0..sn).map(|_| word(&mut rng, config.src_vocab)).collect(),
                tgt: (0..tn).map(|_| word(&mut rng, config.tgt_vocab)).collect(),
            }
        })
        .collect();
    let mask_root = rng.derive("grad-check-masks", &[]);
    let f = |g: &mut Graph<f64>, store: &ParamStore<f64>| {
        let m = Model::from_parts(config.clone(), store.clone())?;
        let refs: Vec<&SentencePair> = pairs.iter().collect();
        let mut rngs: Vec<RngStream> = (0..pairs.len() as u64)
            .map(|i| mask_root.derive("mask", &[i]))
            .collect();
        Ok(batch_loss(g, &m, &refs, objective, 0.1, &mut rngs, &mut Dropout::off())?.total)
    };
    let mut store = model.params().clone();
    let ids: Vec<_> = store.ids().filter(|&id| !store.name(id).ends_with(".k.b")).collect();
    let picked: Vec<_> = (0..coords)
        .map(|_| {
            let id = ids[rng.below(ids.len())];
            (id, rng.below(store.get(id).len()))
        })
        .collect();
    let report = grad_check(f, &mut store, step, Some(&picked))?;
    Ok((model.num_parameters(), report).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_leak_suite_passes() {
        let r = leak_suite(60, 10, 3).unwrap();
        assert_eq!(r.trials, 60);
        assert!(r.rows_checked >= 60);
        assert!(r.max_deviation <= 1e-9, "{r:?}");
    }

    #[test]
    fn micro_model_is_small() {
        let m = Model::<f64>::new(micro_config(DecoderKind::Disco), &mut RngStream::new(1)).unwrap();
        assert!(m.num_parameters() <= 1000, "{}", m.num_parameters());
    }

    #[test]
    fn micro_gradient_check() {
        let r = training_grad_check(micro_config(DecoderKind::Disco), Objective::Disco, 40, 1e-5, 5).unwrap();
        assert_eq!(r.checked, 40);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
}
