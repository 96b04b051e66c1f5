use alloc::format;

use crate::numerics::DEFAULT_LN_EPS;
use crate::{Error, Result};

/// Where LayerNorm sits relative to the residual connections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    /// BERT-style: LayerNorm after each residual add, embedding LayerNorm,
    /// bidirectional attention, masked-LM objective.
    PostLnEncoder,
    /// GPT-style: LayerNorm before each sub-module, final LayerNorm before
    /// the head, causal attention, next-token objective.
    PreLnDecoder,
}

impl Variant {
    pub fn is_causal(self) -> bool {
        matches!(self, Variant::PreLnDecoder)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::PostLnEncoder => "post-ln-encoder",
            Variant::PreLnDecoder => "pre-ln-decoder",
        }
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post-ln-encoder" | "encoder" | "bert" => Ok(Variant::PostLnEncoder),
            "pre-ln-decoder" | "decoder" | "gpt" => Ok(Variant::PreLnDecoder),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

/// Architecture descriptor.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub variant: Variant,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub vocab: usize,
    pub max_seq: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_ln_eps"))]
    pub ln_eps: f32,
}

#[cfg(feature = "serde")]
fn default_ln_eps() -> f32 {
    DEFAULT_LN_EPS
}

impl ModelConfig {
    /// Config with `hidden = heads * head_dim` and `ffn_dim = 4 * hidden`.
    pub fn new(
        variant: Variant,
        layers: usize,
        heads: usize,
        head_dim: usize,
        vocab: usize,
        max_seq: usize,
    ) -> Self {
        let hidden = heads * head_dim;
        Self {
            variant,
            layers,
            hidden,
            heads,
            head_dim,
            ffn_dim: 4 * hidden,
            vocab,
            max_seq,
            ln_eps: DEFAULT_LN_EPS,
        }
    }

    pub fn with_ffn_dim(mut self, ffn_dim: usize) -> Self {
        self.ffn_dim = ffn_dim;
        self
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    /// Same model with `heads` heads of unchanged head dimension and the
    /// FFN scaled by the same factor.
    pub fn widened_to_heads(mut self, heads: usize) -> Self {
        let ratio_num = heads;
        let ratio_den = self.heads;
        self.heads = heads;
        self.hidden = heads * self.head_dim;
        self.ffn_dim = self.ffn_dim * ratio_num / ratio_den;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg| Err(Error::InvalidConfig(msg));
        if self.layers < 1 {
            return fail(format!("layers must be >= 1, got {}", self.layers));
        }
        if self.heads < 1 || self.head_dim < 1 {
            return fail(format!("heads ({}) and head_dim ({}) must be >= 1", self.heads, self.head_dim));
        }
        if self.hidden != self.heads * self.head_dim {
            return fail(format!(
                "hidden {} != heads {} * head_dim {}",
                self.hidden, self.heads, self.head_dim
            ));
        }
        if self.vocab < 2 {
            return fail(format!("vocab must be >= 2, got {}", self.vocab));
        }
        if self.ffn_dim < 1 {
            return fail(format!("ffn_dim must be >= 1, got {}", self.ffn_dim));
        }
        if self.max_seq < 1 {
            return fail(format!("max_seq must be >= 1, got {}", self.max_seq));
        }
        if !(self.ln_eps >= 0.0 && self.ln_eps.is_finite()) {
            return fail(format!("ln_eps must be finite and >= 0, got {}", self.ln_eps));
        }
        Ok(())
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        let d = self.hidden;
        let per_layer = 4 * (d * d + d) + 2 * d * self.ffn_dim + self.ffn_dim + d + 4 * d;
        self.vocab * d + self.max_seq * d + 2 * d + self.layers * per_layer + d * self.vocab + self.vocab
    }

    pub fn per_layer_param_count(&self) -> usize {
        let d = self.hidden;
        4 * (d * d + d) + 2 * d * self.ffn_dim + self.ffn_dim + d + 4 * d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_must_factor_into_heads() {
        let mut c = ModelConfig::new(Variant::PostLnEncoder, 2, 4, 16, 32, 16);
        assert!(c.validate().is_ok());
        c.hidden = 65;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_degenerate_sizes() {
        let base = ModelConfig::new(Variant::PostLnEncoder, 1, 2, 4, 11, 8);
        assert!(base.with_layers(0).validate().is_err());
        let mut c = base;
        c.vocab = 1;
        assert!(c.validate().is_err());
        assert!(base.with_ffn_dim(0).validate().is_err());
    }

    #[test]
    fn widen_keeps_head_dim() {
        let c = ModelConfig::new(Variant::PreLnDecoder, 2, 4, 16, 32, 16).widened_to_heads(8);
        assert_eq!((c.hidden, c.head_dim, c.ffn_dim), (128, 16, 512));
        assert!(c.validate().is_ok());
    }
}
