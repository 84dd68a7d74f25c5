use ndarray::Axis;

use super::config::DecoderConfig;
use super::encoder::{lookup, lstm_shapes, EncoderStates, LstmParams};
use super::params::ParameterSet;
use crate::autograd::{Mat, Tape, Var};
use crate::error::{Error, Result};

/// Expected `decoder.*` parameter names and shapes for encoder output width
/// `enc_dim`.
pub fn decoder_shapes(cfg: &DecoderConfig, enc_dim: usize) -> Vec<(String, (usize, usize))> {
    let mut out = vec![(
        "decoder.embedding".to_string(),
        (cfg.vocab_size, cfg.embed_dim),
    )];
    for l in 1..=cfg.n_rnn_layers {
        let input = if l == 1 {
            cfg.embed_dim
        } else {
            cfg.rnn_hidden
        };
        out.extend(lstm_shapes(
            &format!("decoder.rnn{l}"),
            input,
            cfg.rnn_hidden,
        ));
    }
    out.push(("decoder.attention.weight".into(), (enc_dim, cfg.rnn_hidden)));
    out.push((
        "decoder.output.weight".into(),
        (cfg.rnn_hidden + enc_dim, cfg.vocab_size),
    ));
    out.push(("decoder.output.bias".into(), (1, cfg.vocab_size)));
    out
}

pub(crate) struct DecoderLayout {
    pub embedding: usize,
    pub rnn: Vec<LstmParams>,
    pub attention: usize,
    pub out_weight: usize,
    pub out_bias: usize,
}

impl DecoderLayout {
    pub fn resolve(cfg: &DecoderConfig, enc_dim: usize, params: &ParameterSet) -> Result<Self> {
        cfg.validate()?;
        let idx = decoder_shapes(cfg, enc_dim)
            .iter()
            .map(|(n, s)| lookup(params, n, *s))
            .collect::<Result<Vec<_>>>()?;
        let mut it = idx.into_iter();
        let mut next = || it.next().expect("shape list covers layout");
        let embedding = next();
        let rnn = (0..cfg.n_rnn_layers)
            .map(|_| LstmParams {
                w_ih: next(),
                w_hh: next(),
                bias: next(),
            })
            .collect();
        Ok(Self {
            embedding,
            rnn,
            attention: next(),
            out_weight: next(),
            out_bias: next(),
        })
    }
}

/// Encoder memory as seen by the attention of one decoder batch.
pub(crate) struct AttnSource {
    pub keys: Var,
    pub values: Var,
    pub enc_batch: usize,
    pub src_of: Vec<usize>,
    pub lens: Vec<usize>,
}

/// Dropout masks held fixed across decoder steps.
pub(crate) struct DecoderMasks {
    pub embedding: Option<Mat>,
    pub layers: Vec<Option<Mat>>,
}

pub(crate) struct StepNodes {
    pub logits: Var,
    pub state: Vec<(Var, Var)>,
    pub context: Var,
}

pub(crate) fn check_tokens(tokens: &[usize], vocab_size: usize) -> Result<()> {
    match tokens.iter().find(|&&t| t >= vocab_size) {
        Some(&id) => Err(Error::InvalidToken { id, vocab_size }),
        None => Ok(()),
    }
}

/// One decoder time step for a batch of `prev.len()` rows.
pub(crate) fn decoder_step_on_tape(
    layout: &DecoderLayout,
    tape: &mut Tape,
    prev: &[usize],
    state: &[(Var, Var)],
    src: &AttnSource,
    masks: Option<&DecoderMasks>,
) -> StepNodes {
    let emb = tape.param(layout.embedding);
    let mut x = tape.gather_rows(emb, prev.iter().map(|&t| Some(t)).collect());
    if let Some(m) = masks.and_then(|m| m.embedding.as_ref()) {
        x = tape.mul_const(x, m.clone());
    }
    let mut new_state = Vec::with_capacity(state.len());
    for (l, (p, &(h, c))) in layout.rnn.iter().zip(state).enumerate() {
        let hidden = tape.shape(h).1;
        let w_ih = tape.param(p.w_ih);
        let w_hh = tape.param(p.w_hh);
        let bias = tape.param(p.bias);
        let a = tape.matmul(x, w_ih);
        let r = tape.matmul(h, w_hh);
        let pre = tape.add(a, r);
        let pre = tape.add_row(pre, bias);
        let hc = tape.lstm_gates(pre, c);
        let h_new = tape.slice_cols(hc, 0, hidden);
        let c_new = tape.slice_cols(hc, hidden, 2 * hidden);
        new_state.push((h_new, c_new));
        x = match masks.and_then(|m| m.layers[l].as_ref()) {
            Some(m) => tape.mul_const(h_new, m.clone()),
            None => h_new,
        };
    }
    let context = tape.attention(
        src.keys,
        src.values,
        x,
        src.enc_batch,
        src.src_of.clone(),
        &src.lens,
    );
    let joined = tape.concat_cols(&[x, context]);
    let w = tape.param(layout.out_weight);
    let b = tape.param(layout.out_bias);
    let logits = tape.matmul(joined, w);
    let logits = tape.add_row(logits, b);
    StepNodes {
        logits,
        state: new_state,
        context,
    }
}

pub(crate) fn log_softmax(row: ndarray::ArrayView1<f64>) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - log_z).collect()
}

/// Recurrent state of the decoder for one hypothesis: `(h, c)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DecoderState {
    /// All-zero initial state.
    pub fn initial(cfg: &DecoderConfig) -> Self {
        let z = vec![0.0; cfg.rnn_hidden];
        Self {
            layers: vec![(z.clone(), z); cfg.n_rnn_layers],
        }
    }
}

/// Result of advancing one hypothesis by one token.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub log_probs: Vec<f64>,
    pub state: DecoderState,
    pub attention: Vec<f64>,
}

/// Decoder bound to one utterance's encoder states, with attention keys
/// precomputed.
pub struct DecoderSession<'a> {
    cfg: &'a DecoderConfig,
    params: &'a ParameterSet,
    layout: DecoderLayout,
    keys: Mat,
    values: Mat,
}

impl<'a> DecoderSession<'a> {
    pub fn new(
        params: &'a ParameterSet,
        cfg: &'a DecoderConfig,
        enc: &EncoderStates,
    ) -> Result<Self> {
        if enc.is_empty() {
            return Err(Error::Empty("encoder states".into()));
        }
        let layout = DecoderLayout::resolve(cfg, enc.dim(), params)?;
        let keys = enc.states.dot(&params.values()[layout.attention]);
        Ok(Self {
            cfg,
            params,
            layout,
            keys,
            values: enc.states.clone(),
        })
    }

    pub fn source_len(&self) -> usize {
        self.values.nrows()
    }

    pub fn config(&self) -> &DecoderConfig {
        self.cfg
    }

    /// Advances every hypothesis `i` from `states[i]` with input `prev[i]`.
    pub fn step(&self, prev: &[usize], states: &[&DecoderState]) -> Result<Vec<StepOutput>> {
        check_tokens(prev, self.cfg.vocab_size)?;
        let n = prev.len();
        assert_eq!(n, states.len());
        let mut tape = Tape::new(self.params.values());
        let keys = tape.constant(self.keys.clone());
        let values = tape.constant(self.values.clone());
        let stack = |f: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>, l: usize| {
            Mat::from_shape_fn((n, self.cfg.rnn_hidden), |(r, k)| {
                f(&states[r].layers[l])[k]
            })
        };
        let state_vars: Vec<(Var, Var)> = (0..self.cfg.n_rnn_layers)
            .map(|l| {
                let h = tape.constant(stack(&|s| &s.0, l));
                let c = tape.constant(stack(&|s| &s.1, l));
                (h, c)
            })
            .collect();
        let src = AttnSource {
            keys,
            values,
            enc_batch: 1,
            src_of: vec![0; n],
            lens: vec![self.values.nrows()],
        };
        let nodes = decoder_step_on_tape(&self.layout, &mut tape, prev, &state_vars, &src, None);
        let logits = tape.value(nodes.logits);
        let weights = tape
            .attention_weights(nodes.context)
            .expect("attention node");
        Ok((0..n)
            .map(|r| StepOutput {
                log_probs: log_softmax(logits.row(r)),
                state: DecoderState {
                    layers: nodes
                        .state
                        .iter()
                        .map(|&(h, c)| {
                            (tape.value(h).row(r).to_vec(), tape.value(c).row(r).to_vec())
                        })
                        .collect(),
                },
                attention: weights.index_axis(Axis(0), r).to_vec(),
            })
            .collect())
    }
}

/// Advances a single hypothesis by one token.
pub fn decode_step(
    prev_token: usize,
    state: &DecoderState,
    enc: &EncoderStates,
    params: &ParameterSet,
    cfg: &DecoderConfig,
) -> Result<StepOutput> {
    let session = DecoderSession::new(params, cfg, enc)?;
    let mut out = session.step(&[prev_token], &[state])?;
    Ok(out.pop().expect("one row"))
}
