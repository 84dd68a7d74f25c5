//! The shared ASR/AST encoder-decoder: strided CNNs and a bidirectional
//! LSTM stack on the encoder side, an attentional LSTM decoder, and
//! encoder-only parameter transfer.

mod config;
mod decoder;
mod encoder;
mod loss;
mod params;
mod transfer;

pub use config::{AttentionType, DecoderConfig, EncoderConfig};
pub use decoder::{decode_step, decoder_shapes, DecoderSession, DecoderState, StepOutput};
pub use encoder::{encode, encode_batch, encoder_shapes, EncoderStates, LayerOutput};
pub use loss::{ForwardOptions, InputSampler, LossOutput, TeacherForcing, TrainingBatch};
pub use params::{round_to_storage, ParameterSet, DECODER_PREFIX, ENCODER_PREFIX};
pub use transfer::transfer_encoder;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Mat;
use crate::error::{Error, Result};

/// Encoder and decoder configuration of one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl Seq2Seq {
    pub fn new(encoder: EncoderConfig, decoder: DecoderConfig) -> Result<Self> {
        encoder.validate()?;
        decoder.validate()?;
        Ok(Self { encoder, decoder })
    }

    /// Every parameter name and shape, encoder first.
    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut shapes = encoder_shapes(&self.encoder);
        shapes.extend(decoder_shapes(&self.decoder, self.encoder.output_dim()));
        shapes
    }

    /// Fresh parameters: uniform fan-in scaled weights, unit forget-gate
    /// bias, identity batch norm.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParameterSet {
        let mut params = ParameterSet::new();
        for (name, (rows, cols)) in self.shapes() {
            let mut uniform =
                |bound: f64| Mat::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound));
            let mut value = if name.ends_with(".bn.gamma") || name.ends_with(".running_var") {
                Mat::ones((rows, cols))
            } else if name.ends_with(".bn.beta") || name.ends_with(".running_mean") {
                Mat::zeros((rows, cols))
            } else if name.contains(".rnn") && name.ends_with(".bias") {
                let h = cols / 4;
                Mat::from_shape_fn((rows, cols), |(_, k)| {
                    if (h..2 * h).contains(&k) {
                        1.0
                    } else {
                        0.0
                    }
                })
            } else if name.contains(".rnn") {
                uniform(1.0 / ((cols / 4) as f64).sqrt())
            } else if name == "decoder.embedding" {
                uniform(0.5)
            } else if name == "decoder.output.bias" {
                Mat::zeros((rows, cols))
            } else if name.ends_with(".bias") {
                uniform(1.0 / (rows as f64).sqrt().max(1.0))
            } else {
                uniform(1.0 / (rows as f64).sqrt())
            };
            round_to_storage(&mut value);
            params.insert(name, value).expect("shape names are unique");
        }
        params
    }

    /// Verifies that `params` holds exactly this model's names and shapes.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let shapes = self.shapes();
        let mut problems = Vec::new();
        for (name, shape) in &shapes {
            match params.get(name) {
                None => problems.push(format!("missing {name}")),
                Some(v) if v.dim() != *shape => problems.push(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    v.dim()
                )),
                Some(_) => {}
            }
        }
        if params.len() != shapes.len() {
            problems.push(format!(
                "{} parameters present, {} expected",
                params.len(),
                shapes.len()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigMismatch(problems.join("; ")))
        }
    }
}
