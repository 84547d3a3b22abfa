use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::DEFAULT_GAMMA;
use crate::error::{Error, Result};
use crate::vocab::NUM_SPECIAL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Standard encoder-decoder Transformer over the whole document.
    BaselineTransformer,
    /// Group attention on lower layers, gated group/global attention on top.
    GTransformer,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-transformer" | "baseline" | "transformer" => Ok(Variant::BaselineTransformer),
            "g-transformer" | "gtransformer" => Ok(Variant::GTransformer),
            other => Err(Error::config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Number of top layers using combined attention.
    pub k_combined: usize,
    pub gamma: f64,
    pub dropout: f64,
    pub word_dropout: f64,
    pub label_smoothing: f64,
    /// Global attention over other source sentences (encoder self-attention
    /// and decoder cross-attention) in combined layers.
    pub source_context: bool,
    /// Global attention over previous target sentences (decoder
    /// self-attention) in combined layers.
    pub target_context: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::base(64)
    }
}

impl ModelConfig {
    /// 6 layers, 8 heads, 512/2048 widths.
    pub fn base(vocab_size: usize) -> Self {
        ModelConfig {
            variant: Variant::GTransformer,
            vocab_size,
            n_layers: 6,
            n_heads: 8,
            d_model: 512,
            d_ff: 2048,
            k_combined: 2,
            gamma: DEFAULT_GAMMA,
            dropout: 0.3,
            word_dropout: 0.3,
            label_smoothing: 0.1,
            source_context: true,
            target_context: true,
        }
    }

    pub fn big(vocab_size: usize) -> Self {
        ModelConfig {
            n_heads: 16,
            d_model: 1024,
            d_ff: 4096,
            ..Self::base(vocab_size)
        }
    }

    pub fn large(vocab_size: usize) -> Self {
        ModelConfig {
            n_layers: 12,
            ..Self::big(vocab_size)
        }
    }

    /// Desk-scale model: 2 layers, d_model 64.
    pub fn toy(vocab_size: usize) -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            k_combined: 1,
            dropout: 0.1,
            word_dropout: 0.0,
            ..Self::base(vocab_size)
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Whether layer `l` (0-based from the bottom) uses combined attention.
    pub fn is_combined(&self, layer: usize) -> bool {
        self.variant == Variant::GTransformer && layer + self.k_combined >= self.n_layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= NUM_SPECIAL {
            return Err(Error::config("vocab_size must exceed the reserved marker ids"));
        }
        if self.n_layers == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::config("layer count and widths must be positive"));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "n_heads {} must divide d_model {}",
                self.n_heads, self.d_model
            )));
        }
        if self.k_combined > self.n_layers {
            return Err(Error::config(format!(
                "k_combined {} exceeds n_layers {}",
                self.k_combined, self.n_layers
            )));
        }
        if self.gamma.is_nan() || self.gamma > 0.0 {
            return Err(Error::config("gamma must be a non-positive number"));
        }
        for (name, p) in [("dropout", self.dropout), ("label_smoothing", self.label_smoothing)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(format!("{name} {p} outside [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.word_dropout) {
            return Err(Error::config("word_dropout outside [0, 1]"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}
