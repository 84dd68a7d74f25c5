use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::NUM_RESERVED;

/// Strided CNN front end followed by a stack of (bi)directional LSTMs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub n_cnn_layers: usize,
    pub cnn_stride_time: usize,
    pub cnn_channels: usize,
    pub cnn_kernel_time: usize,
    pub n_rnn_layers: usize,
    pub rnn_hidden: usize,
    pub bidirectional: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 13,
            n_cnn_layers: 2,
            cnn_stride_time: 2,
            cnn_channels: 128,
            cnn_kernel_time: 3,
            n_rnn_layers: 3,
            rnn_hidden: 512,
            bidirectional: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.cnn_stride_time == 0
            || self.cnn_kernel_time == 0
            || self.rnn_hidden == 0
            || (self.n_cnn_layers > 0 && self.cnn_channels == 0)
        {
            return Err(Error::invalid(format!("invalid encoder config {self:?}")));
        }
        Ok(())
    }

    /// Width of the encoder output states.
    pub fn output_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.rnn_hidden
        } else {
            self.rnn_hidden
        }
    }

    /// Number of frames left after the strided CNN stack.
    pub fn output_len(&self, input_len: usize) -> usize {
        (0..self.n_cnn_layers).fold(input_len, |t, _| t.div_ceil(self.cnn_stride_time))
    }

    /// Tags of every probe point: `input`, `cnn1..`, `rnn1..`.
    pub fn layer_tags(&self) -> Vec<String> {
        std::iter::once("input".to_string())
            .chain((1..=self.n_cnn_layers).map(|i| format!("cnn{i}")))
            .chain((1..=self.n_rnn_layers).map(|i| format!("rnn{i}")))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionType {
    /// `score(s, h) = s^T W h`.
    Bilinear,
}

/// Embedding, LSTM stack and attention-augmented output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub embed_dim: usize,
    pub n_rnn_layers: usize,
    pub rnn_hidden: usize,
    pub attention_type: AttentionType,
    pub vocab_size: usize,
}

impl DecoderConfig {
    pub fn with_vocab(vocab_size: usize) -> Self {
        Self {
            embed_dim: 128,
            n_rnn_layers: 3,
            rnn_hidden: 256,
            attention_type: AttentionType::Bilinear,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < NUM_RESERVED + 1 {
            return Err(Error::invalid(format!(
                "vocab_size {} leaves no real tokens",
                self.vocab_size
            )));
        }
        if self.embed_dim == 0 || self.rnn_hidden == 0 || self.n_rnn_layers == 0 {
            return Err(Error::invalid(format!("invalid decoder config {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_is_iterated_ceil_halving() {
        let cfg = EncoderConfig::default();
        assert_eq!(cfg.output_len(9), 3);
        assert_eq!(cfg.output_len(8), 2);
        assert_eq!(cfg.output_len(1), 1);
        assert_eq!(cfg.output_dim(), 1024);
    }

    #[test]
    fn default_tags() {
        let tags = EncoderConfig::default().layer_tags();
        assert_eq!(tags, ["input", "cnn1", "cnn2", "rnn1", "rnn2", "rnn3"]);
    }

    #[test]
    fn rejects_tiny_vocab() {
        assert!(DecoderConfig::with_vocab(4).validate().is_err());
        assert!(DecoderConfig::with_vocab(5).validate().is_ok());
    }
}
