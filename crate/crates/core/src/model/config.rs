use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which decoder the network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    /// Contextless keys/values and a position-only query stream; every
    /// position has its own visibility row.
    Disco,
    /// Left-to-right decoder. `contextless` selects disentangled keys/values
    /// under a causal visibility mask instead of a standard decoder.
    Autoregressive { contextless: bool },
    /// Bidirectional standard decoder fed with an explicit mask symbol.
    Cmlm,
}

impl DecoderKind {
    pub fn has_contextless_kv(self) -> bool {
        matches!(
            self,
            DecoderKind::Disco | DecoderKind::Autoregressive { contextless: true }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Longest source sentence, in tokens (corpora also cap targets here).
    pub max_positions: usize,
    /// Support of the length head: lengths `1..=max_length_bins`.
    pub max_length_bins: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub decoder: DecoderKind,
}

impl ModelConfig {
    /// Transformer-base dimensions.
    pub fn base_scale(src_vocab: usize, tgt_vocab: usize, max_positions: usize) -> Self {
        ModelConfig {
            enc_layers: 6,
            dec_layers: 6,
            model_dim: 512,
            hidden_dim: 2048,
            heads: 8,
            src_vocab,
            tgt_vocab,
            max_positions,
            max_length_bins: default_length_bins(max_positions),
            dropout: 0.1,
            label_smoothing: 0.1,
            decoder: DecoderKind::Disco,
        }
    }

    pub fn desk_scale(src_vocab: usize, tgt_vocab: usize, max_positions: usize) -> Self {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            model_dim: 64,
            hidden_dim: 128,
            heads: 4,
            ..Self::base_scale(src_vocab, tgt_vocab, max_positions)
        }
    }

    /// Decoder position table size: every length the length head can
    /// propose, plus the end-of-sentence row of left-to-right scoring.
    pub fn max_target_rows(&self) -> usize {
        self.max_length_bins + 1
    }

    pub fn with_decoder(mut self, decoder: DecoderKind) -> Self {
        self.decoder = decoder;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("model_dim", self.model_dim),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("max_positions", self.max_positions),
            ("max_length_bins", self.max_length_bins),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model.heads ({}) must divide model.model_dim ({})",
                self.heads, self.model_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout {} not in [0,1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "model.label_smoothing {} not in [0,1)",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

/// Length-head support for a given sentence cap: `2·cap + 8`.
pub fn default_length_bins(max_positions: usize) -> usize {
    2 * max_positions + 8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let p = ModelConfig::base_scale(100, 100, 64);
        assert_eq!((p.enc_layers, p.dec_layers, p.heads), (6, 6, 8));
        assert_eq!((p.model_dim, p.hidden_dim), (512, 2048));
        let d = ModelConfig::desk_scale(37, 37, 12);
        assert_eq!((d.enc_layers, d.dec_layers, d.heads), (2, 2, 4));
        assert_eq!((d.model_dim, d.hidden_dim), (64, 128));
        assert_eq!(d.max_length_bins, 32);
        p.validate().unwrap();
        d.validate().unwrap();
    }

    #[test]
    fn heads_must_divide_width() {
        let mut c = ModelConfig::desk_scale(10, 10, 8);
        c.heads = 5;
        assert!(c.validate().is_err());
    }
}
