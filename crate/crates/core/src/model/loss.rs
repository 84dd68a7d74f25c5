use ndarray::ArrayView2;
use rand::RngCore;

use super::decoder::{check_tokens, decoder_step_on_tape, AttnSource, DecoderLayout, DecoderMasks};
use super::encoder::{encode_on_tape, EncoderLayout, Regime};
use super::params::ParameterSet;
use super::Seq2Seq;
use crate::autograd::{BatchNormStats, Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::text::{BOS, EOS, PAD};

/// Picks the decoder input at each step from the gold previous token and
/// the model's own previous prediction.
pub trait InputSampler {
    fn choose(&mut self, gold_prev: usize, model_prev: usize, rng: &mut dyn RngCore) -> usize;
}

/// Always feeds the gold token.
pub struct TeacherForcing;

impl InputSampler for TeacherForcing {
    fn choose(&mut self, gold_prev: usize, _model_prev: usize, _rng: &mut dyn RngCore) -> usize {
        gold_prev
    }
}

/// Padded feature/target pairs. Every target ends with eos.
pub struct TrainingBatch<'a> {
    pub feats: Vec<ArrayView2<'a, f32>>,
    pub targets: Vec<&'a [usize]>,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    /// Batch-norm batch statistics and dropout (training regime).
    pub train: bool,
    pub dropout: f64,
    pub compute_grads: bool,
}

impl ForwardOptions {
    pub fn evaluation() -> Self {
        Self {
            train: false,
            dropout: 0.0,
            compute_grads: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean negative log-likelihood per target token.
    pub loss: f64,
    pub n_tokens: usize,
    /// Target tokens whose argmax prediction was correct.
    pub n_correct: usize,
    pub grads: Option<Vec<Mat>>,
    /// Batch statistics per CNN layer (training regime only).
    pub bn_stats: Vec<(usize, BatchNormStats)>,
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

impl Seq2Seq {
    /// Cross-entropy of the batch targets, averaged over non-pad tokens,
    /// with gradients for every parameter when requested.
    pub fn forward_loss(
        &self,
        params: &ParameterSet,
        batch: &TrainingBatch,
        opts: ForwardOptions,
        sampler: &mut dyn InputSampler,
        rng: &mut dyn RngCore,
    ) -> Result<LossOutput> {
        let b = batch.feats.len();
        if b == 0 || batch.targets.len() != b {
            return Err(Error::Empty("training batch".into()));
        }
        let vocab = self.decoder.vocab_size;
        for tgt in &batch.targets {
            if tgt.last() != Some(&EOS) {
                return Err(Error::invalid("training targets must end with eos"));
            }
            check_tokens(tgt, vocab)?;
        }

        let enc_layout = EncoderLayout::resolve(&self.encoder, params)?;
        let dec_layout = DecoderLayout::resolve(&self.decoder, self.encoder.output_dim(), params)?;
        let mut tape = Tape::new(params.values());

        let (enc, masks) = {
            let mut regime = Regime {
                batch_stats: opts.train,
                dropout: if opts.train { opts.dropout } else { 0.0 },
                rng: Some(&mut *rng),
            };
            let enc = encode_on_tape(
                &self.encoder,
                &enc_layout,
                &mut tape,
                &batch.feats,
                &mut regime,
                false,
            )?;
            let hd = self.decoder.rnn_hidden;
            let masks = DecoderMasks {
                embedding: regime.dropout_mask(b, self.decoder.embed_dim),
                layers: (0..self.decoder.n_rnn_layers)
                    .map(|_| regime.dropout_mask(b, hd))
                    .collect(),
            };
            (enc, masks)
        };

        let attn_w = tape.param(dec_layout.attention);
        let keys = tape.matmul(enc.states, attn_w);
        let src = AttnSource {
            keys,
            values: enc.states,
            enc_batch: b,
            src_of: (0..b).collect(),
            lens: enc.lens.clone(),
        };

        let zeros = tape.constant(Mat::zeros((b, self.decoder.rnn_hidden)));
        let mut state: Vec<(Var, Var)> = vec![(zeros, zeros); self.decoder.n_rnn_layers];
        let max_len = batch.targets.iter().map(|t| t.len()).max().unwrap();
        let mut model_prev = vec![BOS; b];
        let mut losses = Vec::with_capacity(max_len);
        let (mut n_tokens, mut n_correct) = (0, 0);
        for t in 0..max_len {
            let inputs: Vec<usize> = (0..b)
                .map(|i| {
                    let tgt = batch.targets[i];
                    if t == 0 {
                        BOS
                    } else if t < tgt.len() {
                        sampler.choose(tgt[t - 1], model_prev[i], rng)
                    } else {
                        PAD
                    }
                })
                .collect();
            let step =
                decoder_step_on_tape(&dec_layout, &mut tape, &inputs, &state, &src, Some(&masks));
            state = step.state;
            let targets: Vec<Option<usize>> = batch
                .targets
                .iter()
                .map(|tgt| tgt.get(t).copied())
                .collect();
            let logits = tape.value(step.logits);
            for (i, target) in targets.iter().enumerate() {
                let pred = argmax(logits.row(i));
                model_prev[i] = pred;
                if let Some(gold) = *target {
                    n_tokens += 1;
                    n_correct += usize::from(pred == gold);
                }
            }
            losses.push(tape.cross_entropy(step.logits, targets));
        }
        let row = tape.concat_cols(&losses);
        let ones = tape.constant(Mat::ones((losses.len(), 1)));
        let total = tape.matmul(row, ones);
        let loss = tape.value(total)[[0, 0]] / n_tokens as f64;
        let grads = opts
            .compute_grads
            .then(|| tape.backward(total, 1.0 / n_tokens as f64));
        let bn_stats = enc
            .bn_nodes
            .iter()
            .map(|&(l, v)| (l, tape.batch_norm_stats(v).expect("bn node").clone()))
            .collect();
        Ok(LossOutput {
            loss,
            n_tokens,
            n_correct,
            grads,
            bn_stats,
        })
    }
}
