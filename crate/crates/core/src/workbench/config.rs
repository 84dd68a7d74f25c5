use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::BeamConfig;
use crate::model::{DecoderConfig, EncoderConfig, Seq2Seq};
use crate::probing::{DEFAULT_FRAME_CAP, DEFAULT_TRAIN_FRACTION};
use crate::train::{key_values, TrainConfig};

use super::synth::SynthSpec;

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

/// Everything a training, decoding or probing stage reads from a
/// `key = value` config file. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `input_dim` is taken from the data at train time.
    pub encoder: EncoderConfig,
    /// `vocab_size` is taken from the BPE vocabulary at train time.
    pub decoder: DecoderConfig,
    pub train: TrainConfig,
    pub bpe_merges: usize,
    pub beam: BeamConfig,
    pub strip_tone_diacritics: bool,
    pub max_seconds: f64,
    pub probe_frame_cap: usize,
    pub probe_train_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::with_vocab(crate::text::NUM_RESERVED + 1),
            train: TrainConfig {
                batch_size: 16,
                max_epochs: 100,
                ..TrainConfig::default()
            },
            bpe_merges: 1000,
            beam: BeamConfig::default(),
            strip_tone_diacritics: false,
            max_seconds: 16.0,
            probe_frame_cap: DEFAULT_FRAME_CAP,
            probe_train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "encoder.cnn_layers" => self.encoder.n_cnn_layers = num(key, value)?,
            "encoder.cnn_stride" => self.encoder.cnn_stride_time = num(key, value)?,
            "encoder.cnn_channels" => self.encoder.cnn_channels = num(key, value)?,
            "encoder.cnn_kernel" => self.encoder.cnn_kernel_time = num(key, value)?,
            "encoder.layers" => self.encoder.n_rnn_layers = num(key, value)?,
            "encoder.hidden" => self.encoder.rnn_hidden = num(key, value)?,
            "encoder.bidirectional" => self.encoder.bidirectional = num(key, value)?,
            "decoder.embed_dim" => self.decoder.embed_dim = num(key, value)?,
            "decoder.layers" => self.decoder.n_rnn_layers = num(key, value)?,
            "decoder.hidden" => self.decoder.rnn_hidden = num(key, value)?,
            "bpe_merges" => self.bpe_merges = num(key, value)?,
            "beam_size" => self.beam.beam_size = num(key, value)?,
            "len_norm_alpha" => self.beam.len_norm_alpha = num(key, value)?,
            "max_len" => self.beam.max_len = Some(num(key, value)?),
            "strip_tone_diacritics" => self.strip_tone_diacritics = num(key, value)?,
            "max_seconds" => self.max_seconds = num(key, value)?,
            "probe_frame_cap" => self.probe_frame_cap = num(key, value)?,
            "probe_train_fraction" => self.probe_train_fraction = num(key, value)?,
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in key_values(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.train.validate()?;
        if !(cfg.max_seconds > 0.0)
            || !(0.0 < cfg.probe_train_fraction && cfg.probe_train_fraction < 1.0)
        {
            return Err(Error::invalid(
                "max_seconds must be positive and probe_train_fraction in (0, 1)",
            ));
        }
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    pub fn model(&self, input_dim: usize, vocab_size: usize) -> Result<Seq2Seq> {
        let encoder = EncoderConfig {
            input_dim,
            ..self.encoder.clone()
        };
        let decoder = DecoderConfig {
            vocab_size,
            ..self.decoder.clone()
        };
        Seq2Seq::new(encoder, decoder)
    }
}

/// Options of the `synth-data` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// `a` or `b`.
    pub language: String,
    pub n_utterances: usize,
    pub n_references: usize,
    /// Name mixed into the root seed; distinct names give distinct corpora
    /// (for example train, dev and test sets of one language).
    pub stream: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            language: "a".into(),
            n_utterances: 200,
            n_references: 1,
            stream: "train".into(),
        }
    }
}

impl SynthOptions {
    pub fn parse(text: &str) -> Result<Self> {
        let mut o = Self::default();
        for (k, v) in key_values(text)? {
            match k.as_str() {
                "language" => o.language = v,
                "n_utterances" => o.n_utterances = num(&k, &v)?,
                "n_references" => o.n_references = num(&k, &v)?,
                "stream" => o.stream = v,
                _ => return Err(Error::invalid(format!("unknown synth key {k:?}"))),
            }
        }
        Ok(o)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    /// The generator spec for `seed`; utterance ids are prefixed with the
    /// language and stream.
    pub fn spec(&self, seed: u64) -> Result<SynthSpec> {
        let mut spec = match self.language.as_str() {
            "a" => SynthSpec::language_a(self.n_utterances, seed),
            "b" => SynthSpec::language_b(self.n_utterances, seed),
            other => {
                return Err(Error::invalid(format!(
                    "unknown synthetic language {other:?}"
                )))
            }
        };
        spec.n_references = self.n_references;
        spec.utt_prefix = format!("{}-{}", spec.utt_prefix, self.stream);
        Ok(spec)
    }
}
