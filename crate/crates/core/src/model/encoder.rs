use ndarray::{ArrayView2, Axis};
use rand::{Rng, RngCore};

use super::config::EncoderConfig;
use super::params::ParameterSet;
use crate::audio::FeatureSequence;
use crate::autograd::{Mat, Tape, Var};
use crate::error::{Error, Result};

pub(crate) const BN_EPS: f64 = 1e-5;

pub(crate) struct CnnLayer {
    pub weight: usize,
    pub bias: usize,
    pub gamma: usize,
    pub beta: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

pub(crate) struct LstmParams {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
}

/// Parameter indices of the encoder, resolved and shape-checked once.
pub(crate) struct EncoderLayout {
    pub cnn: Vec<CnnLayer>,
    /// One entry per layer; forward direction first.
    pub rnn: Vec<Vec<LstmParams>>,
}

pub(crate) fn lstm_shapes(
    prefix: &str,
    input: usize,
    hidden: usize,
) -> Vec<(String, (usize, usize))> {
    vec![
        (format!("{prefix}.w_ih"), (input, 4 * hidden)),
        (format!("{prefix}.w_hh"), (hidden, 4 * hidden)),
        (format!("{prefix}.bias"), (1, 4 * hidden)),
    ]
}

/// Expected `encoder.*` parameter names and shapes in canonical order.
pub fn encoder_shapes(cfg: &EncoderConfig) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    let c = cfg.cnn_channels;
    for l in 1..=cfg.n_cnn_layers {
        let cin = if l == 1 { cfg.input_dim } else { c };
        let p = format!("encoder.cnn{l}");
        out.push((format!("{p}.weight"), (cfg.cnn_kernel_time * cin, c)));
        out.push((format!("{p}.bias"), (1, c)));
        for stat in ["bn.gamma", "bn.beta", "bn.running_mean", "bn.running_var"] {
            out.push((format!("{p}.{stat}"), (1, c)));
        }
    }
    let dirs: &[&str] = if cfg.bidirectional {
        &["fwd", "bwd"]
    } else {
        &["fwd"]
    };
    for l in 1..=cfg.n_rnn_layers {
        let input = match (l, cfg.n_cnn_layers) {
            (1, 0) => cfg.input_dim,
            (1, _) => c,
            _ => cfg.output_dim(),
        };
        for d in dirs {
            out.extend(lstm_shapes(
                &format!("encoder.rnn{l}.{d}"),
                input,
                cfg.rnn_hidden,
            ));
        }
    }
    out
}

pub(crate) fn lookup(params: &ParameterSet, name: &str, shape: (usize, usize)) -> Result<usize> {
    let i = params
        .index_of(name)
        .ok_or_else(|| Error::ConfigMismatch(format!("missing parameter {name}")))?;
    let actual = params.values()[i].dim();
    if actual != shape {
        return Err(Error::ConfigMismatch(format!(
            "parameter {name} has shape {actual:?}, expected {shape:?}"
        )));
    }
    Ok(i)
}

impl EncoderLayout {
    pub fn resolve(cfg: &EncoderConfig, params: &ParameterSet) -> Result<Self> {
        cfg.validate()?;
        let shapes = encoder_shapes(cfg);
        let mut idx = shapes
            .iter()
            .map(|(n, s)| lookup(params, n, *s))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || idx.next().expect("shape list covers layout");
        let cnn = (0..cfg.n_cnn_layers)
            .map(|_| CnnLayer {
                weight: next(),
                bias: next(),
                gamma: next(),
                beta: next(),
                running_mean: next(),
                running_var: next(),
            })
            .collect();
        let n_dirs = if cfg.bidirectional { 2 } else { 1 };
        let rnn = (0..cfg.n_rnn_layers)
            .map(|_| {
                (0..n_dirs)
                    .map(|_| LstmParams {
                        w_ih: next(),
                        w_hh: next(),
                        bias: next(),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { cnn, rnn })
    }
}

/// How a forward pass treats batch norm and dropout.
pub(crate) struct Regime<'r> {
    /// Batch statistics (training) instead of running statistics.
    pub batch_stats: bool,
    pub dropout: f64,
    pub rng: Option<&'r mut dyn RngCore>,
}

impl Regime<'_> {
    pub fn inference() -> Self {
        Self {
            batch_stats: false,
            dropout: 0.0,
            rng: None,
        }
    }

    /// Inverted dropout mask of shape `rows x cols`, or `None` when off.
    pub fn dropout_mask(&mut self, rows: usize, cols: usize) -> Option<Mat> {
        let p = self.dropout;
        let rng = self.rng.as_mut()?;
        if p <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - p);
        Some(Mat::from_shape_fn((rows, cols), |_| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                keep
            }
        }))
    }
}

/// Tape-level encoder output for a padded, time-major batch.
pub(crate) struct EncodedBatch {
    pub states: Var,
    pub lens: Vec<usize>,
    pub batch: usize,
    /// `(tag, node, lengths)` per probe point when requested.
    pub layers: Vec<(String, Var, Vec<usize>)>,
    /// `(cnn layer index, batch norm node)` in training regime.
    pub bn_nodes: Vec<(usize, Var)>,
}

fn row_mask(lens: &[usize], t_max: usize) -> Vec<f64> {
    let b = lens.len();
    (0..t_max * b)
        .map(|r| if r / b < lens[r % b] { 1.0 } else { 0.0 })
        .collect()
}

/// Repeats a per-item `B x d` mask for every time step.
fn tile_time(mask: &Mat, t_max: usize) -> Mat {
    let views: Vec<_> = (0..t_max).map(|_| mask.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("same widths")
}

fn run_lstm(tape: &mut Tape, p: &LstmParams, input: Var, lens: &[usize], reverse: bool) -> Var {
    let b = lens.len();
    let t_max = tape.shape(input).0 / b;
    let w_ih = tape.param(p.w_ih);
    let w_hh = tape.param(p.w_hh);
    let hidden = tape.shape(w_hh).0;
    let bias = tape.param(p.bias);
    let xw = tape.matmul(input, w_ih);
    let xw = tape.add_row(xw, bias);
    let mut h = tape.constant(Mat::zeros((b, hidden)));
    let mut c = tape.constant(Mat::zeros((b, hidden)));
    let mut outputs = vec![h; t_max];
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..t_max).rev())
    } else {
        Box::new(0..t_max)
    };
    for t in steps {
        let x_t = tape.slice_rows(xw, t * b, (t + 1) * b);
        let rec = tape.matmul(h, w_hh);
        let pre = tape.add(x_t, rec);
        let hc = tape.lstm_gates(pre, c);
        let h_new = tape.slice_cols(hc, 0, hidden);
        let c_new = tape.slice_cols(hc, hidden, 2 * hidden);
        let mask: Vec<f64> = lens
            .iter()
            .map(|&l| if t < l { 1.0 } else { 0.0 })
            .collect();
        if mask.iter().all(|&m| m == 1.0) {
            h = h_new;
            c = c_new;
            outputs[t] = h;
        } else {
            h = tape.masked_update(h, h_new, mask.clone());
            c = tape.masked_update(c, c_new, mask.clone());
            outputs[t] = tape.scale_rows(h, mask);
        }
    }
    tape.concat_rows(&outputs)
}

/// Runs the encoder over `feats` (each `T_i x D`) on `tape`.
pub(crate) fn encode_on_tape(
    cfg: &EncoderConfig,
    layout: &EncoderLayout,
    tape: &mut Tape,
    feats: &[ArrayView2<f32>],
    regime: &mut Regime,
    keep_intermediate: bool,
) -> Result<EncodedBatch> {
    if feats.is_empty() {
        return Err(Error::Empty("encoder batch".into()));
    }
    for f in feats {
        if f.ncols() != cfg.input_dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.input_dim,
                actual: f.ncols(),
            });
        }
        if f.nrows() == 0 {
            return Err(Error::Empty("feature sequence".into()));
        }
    }
    let b = feats.len();
    let mut lens: Vec<usize> = feats.iter().map(|f| f.nrows()).collect();
    let mut t_max = *lens.iter().max().unwrap();
    let mut x = Mat::zeros((t_max * b, cfg.input_dim));
    for (i, f) in feats.iter().enumerate() {
        for (t, row) in f.rows().into_iter().enumerate() {
            x.row_mut(t * b + i).assign(&row.mapv(|v| v as f64));
        }
    }
    let mut cur = tape.constant(x);
    let mut layers = Vec::new();
    if keep_intermediate {
        layers.push(("input".to_string(), cur, lens.clone()));
    }

    let stride = cfg.cnn_stride_time;
    let k = cfg.cnn_kernel_time;
    let pad = (k - 1) / 2;
    let mut bn_nodes = Vec::new();
    for (l, conv) in layout.cnn.iter().enumerate() {
        let t_out = t_max.div_ceil(stride);
        let taps: Vec<Var> = (0..k)
            .map(|j| {
                let rows = (0..t_out * b)
                    .map(|r| {
                        let (t, i) = (r / b, r % b);
                        let src = (stride * t + j) as isize - pad as isize;
                        (src >= 0 && (src as usize) < t_max).then(|| src as usize * b + i)
                    })
                    .collect();
                tape.gather_rows(cur, rows)
            })
            .collect();
        let stacked = if taps.len() == 1 {
            taps[0]
        } else {
            tape.concat_cols(&taps)
        };
        let w = tape.param(conv.weight);
        let bias = tape.param(conv.bias);
        let y = tape.matmul(stacked, w);
        let y = tape.add_row(y, bias);
        let y = tape.relu(y);
        lens = lens.iter().map(|&len| len.div_ceil(stride)).collect();
        t_max = t_out;
        let mask = row_mask(&lens, t_max);
        let normed = if regime.batch_stats {
            let valid = mask.iter().map(|&m| m > 0.0).collect();
            let n = tape.batch_norm(y, valid, BN_EPS);
            bn_nodes.push((l, n));
            let gamma = tape.param(conv.gamma);
            let beta = tape.param(conv.beta);
            let n = tape.mul_row(n, gamma);
            tape.add_row(n, beta)
        } else {
            let (scale, shift) = frozen_batch_norm(tape, conv);
            let scale = tape.constant(scale);
            let shift = tape.constant(shift);
            let n = tape.mul_row(y, scale);
            tape.add_row(n, shift)
        };
        cur = tape.scale_rows(normed, mask);
        if keep_intermediate {
            layers.push((format!("cnn{}", l + 1), cur, lens.clone()));
        }
    }

    for (l, dirs) in layout.rnn.iter().enumerate() {
        let fwd = run_lstm(tape, &dirs[0], cur, &lens, false);
        let out = match dirs.get(1) {
            Some(bwd_params) => {
                let bwd = run_lstm(tape, bwd_params, cur, &lens, true);
                tape.concat_cols(&[fwd, bwd])
            }
            None => fwd,
        };
        let width = tape.shape(out).1;
        cur = match regime.dropout_mask(b, width) {
            Some(m) => tape.mul_const(out, tile_time(&m, t_max)),
            None => out,
        };
        if keep_intermediate {
            layers.push((format!("rnn{}", l + 1), out, lens.clone()));
        }
    }

    Ok(EncodedBatch {
        states: cur,
        lens,
        batch: b,
        layers,
        bn_nodes,
    })
}

/// Inference-time batch norm as an affine map from running statistics.
fn frozen_batch_norm(tape: &mut Tape, conv: &CnnLayer) -> (Mat, Mat) {
    let [gamma, beta, mean, var] = [conv.gamma, conv.beta, conv.running_mean, conv.running_var]
        .map(|i| {
            let v = tape.param(i);
            tape.value(v).clone()
        });
    let scale = &gamma / &var.mapv(|v| (v + BN_EPS).sqrt());
    let shift = &beta - &(&mean * &scale);
    (scale, shift)
}

/// Representations of one utterance at one probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub tag: String,
    /// `frames x dim`.
    pub frames: Mat,
}

/// Encoder output for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    /// `T' x H` top-layer states.
    pub states: Mat,
    pub layers: Vec<LayerOutput>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }
}

fn unpad(m: &Mat, batch: usize, item: usize, len: usize) -> Mat {
    Mat::from_shape_fn((len, m.ncols()), |(t, k)| m[[t * batch + item, k]])
}

/// Encodes several utterances together in inference mode.
pub fn encode_batch(
    feats: &[ArrayView2<f32>],
    params: &ParameterSet,
    cfg: &EncoderConfig,
    keep_intermediate: bool,
) -> Result<Vec<EncoderStates>> {
    let layout = EncoderLayout::resolve(cfg, params)?;
    let mut tape = Tape::new(params.values());
    let enc = encode_on_tape(
        cfg,
        &layout,
        &mut tape,
        feats,
        &mut Regime::inference(),
        keep_intermediate,
    )?;
    let top = tape.value(enc.states);
    Ok((0..enc.batch)
        .map(|i| EncoderStates {
            states: unpad(top, enc.batch, i, enc.lens[i]),
            layers: enc
                .layers
                .iter()
                .map(|(tag, v, lens)| LayerOutput {
                    tag: tag.clone(),
                    frames: unpad(tape.value(*v), enc.batch, i, lens[i]),
                })
                .collect(),
        })
        .collect())
}

/// Encodes one utterance in inference mode (running batch-norm statistics,
/// no dropout). With `keep_intermediate`, every probe point is retained.
pub fn encode(
    feats: &FeatureSequence,
    params: &ParameterSet,
    cfg: &EncoderConfig,
    keep_intermediate: bool,
) -> Result<EncoderStates> {
    let mut out = encode_batch(&[feats.frames.view()], params, cfg, keep_intermediate)?;
    Ok(out.pop().expect("one utterance in, one out"))
}
