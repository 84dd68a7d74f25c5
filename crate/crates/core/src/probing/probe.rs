use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{subsample_labels, UttLabels};
use crate::audio::FeatureSequence;
use crate::autograd::Mat;
use crate::error::{Error, Result};
use crate::model::{encode_batch, ParameterSet, Seq2Seq};

/// Default pool size before splitting.
pub const DEFAULT_FRAME_CAP: usize = 600_000;
/// Two thirds of the pool trains the probe.
pub const DEFAULT_TRAIN_FRACTION: f64 = 400_000.0 / 600_000.0;
pub const PROBE_L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Per-utterance representations at one probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReps {
    pub layer_tag: String,
    /// `(utt_id, frames x dim, labels)`.
    pub utterances: Vec<(String, Mat, Vec<usize>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFrameSet {
    pub layer_tag: String,
    pub vectors: Mat,
    pub labels: Vec<usize>,
    pub split: Split,
    pub utt_ids: Vec<String>,
}

impl ProbeFrameSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Frequency of the most common label.
    pub fn majority_baseline(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Empty(format!("{} frame set", self.layer_tag)));
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        Ok(*counts.values().max().unwrap() as f64 / self.len() as f64)
    }
}

/// Number of strided layers in front of a probe point.
fn strides_before(tag: &str, n_cnn: usize) -> Result<usize> {
    if tag == "input" {
        return Ok(0);
    }
    if let Some(k) = tag
        .strip_prefix("cnn")
        .and_then(|k| k.parse::<usize>().ok())
    {
        return Ok(k);
    }
    if tag.starts_with("rnn") {
        return Ok(n_cnn);
    }
    Err(Error::invalid(format!("unknown probe point {tag}")))
}

/// Runs every utterance through the encoder and pairs each retained frame
/// at each probe point with its (stride-downsampled) phone label.
pub fn extract_layer_reps(
    model: &Seq2Seq,
    params: &ParameterSet,
    utterances: &[FeatureSequence],
    labels: &[UttLabels],
) -> Result<Vec<LayerReps>> {
    let by_id: BTreeMap<&str, &[usize]> = labels
        .iter()
        .map(|u| (u.utt_id.as_str(), u.labels.as_slice()))
        .collect();
    let cfg = &model.encoder;
    let mut out: Vec<LayerReps> = cfg
        .layer_tags()
        .into_iter()
        .map(|t| LayerReps {
            layer_tag: t,
            utterances: Vec::new(),
        })
        .collect();
    for chunk in utterances.chunks(16) {
        let mut utt_labels = Vec::with_capacity(chunk.len());
        for f in chunk {
            let l = by_id
                .get(f.utt_id.as_str())
                .ok_or_else(|| Error::invalid(format!("no labels for {}", f.utt_id)))?;
            if l.len() != f.num_frames() {
                return Err(Error::LabelMismatch {
                    utt_id: f.utt_id.clone(),
                    labels: l.len(),
                    frames: f.num_frames(),
                });
            }
            utt_labels.push(*l);
        }
        let views: Vec<_> = chunk.iter().map(|f| f.frames.view()).collect();
        let encoded = encode_batch(&views, params, cfg, true)?;
        for ((f, l), enc) in chunk.iter().zip(&utt_labels).zip(encoded) {
            for (reps, layer) in out.iter_mut().zip(enc.layers) {
                let k = strides_before(&layer.tag, cfg.n_cnn_layers)?;
                let lab = subsample_labels(l, cfg.cnn_stride_time, k);
                if lab.len() != layer.frames.nrows() {
                    return Err(Error::LabelMismatch {
                        utt_id: f.utt_id.clone(),
                        labels: lab.len(),
                        frames: layer.frames.nrows(),
                    });
                }
                reps.utterances.push((f.utt_id.clone(), layer.frames, lab));
            }
        }
    }
    Ok(out)
}

fn stack(tag: &str, utts: &[&(String, Mat, Vec<usize>)], split: Split) -> ProbeFrameSet {
    let dim = utts.first().map_or(0, |u| u.1.ncols());
    let n: usize = utts.iter().map(|u| u.2.len()).sum();
    let mut vectors = Mat::zeros((n, dim));
    let (mut labels, mut ids) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut row = 0;
    for (id, m, l) in utts.iter().map(|u| (&u.0, &u.1, &u.2)) {
        vectors
            .slice_mut(ndarray::s![row..row + m.nrows(), ..])
            .assign(m);
        row += m.nrows();
        labels.extend_from_slice(l);
        ids.extend(std::iter::repeat_n(id.clone(), l.len()));
    }
    ProbeFrameSet {
        layer_tag: tag.to_string(),
        vectors,
        labels,
        split,
        utt_ids: ids,
    }
}

/// Utterance-level split: utterances are shuffled, admitted until the pool
/// reaches `cap` frames, and the leading ones assigned to training until it
/// holds `train_fraction` of the pool.
pub fn split_frames(
    reps: &LayerReps,
    train_fraction: f64,
    cap: usize,
    seed: u64,
) -> Result<(ProbeFrameSet, ProbeFrameSet)> {
    if !(0.0 < train_fraction && train_fraction < 1.0) || cap == 0 {
        return Err(Error::invalid(
            "train_fraction must lie in (0, 1) and cap be positive",
        ));
    }
    let mut order: Vec<&(String, Mat, Vec<usize>)> = reps.utterances.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pool = Vec::new();
    let mut total = 0;
    for u in order {
        if total >= cap {
            break;
        }
        total += u.2.len();
        pool.push(u);
    }
    let want = (train_fraction * total as f64).round() as usize;
    let mut cut = 0;
    let mut acc = 0;
    while cut < pool.len() && acc < want {
        acc += pool[cut].2.len();
        cut += 1;
    }
    if cut == 0 || cut == pool.len() {
        return Err(Error::invalid(format!(
            "{}: {} utterances cannot be split into non-empty train and test sets",
            reps.layer_tag,
            pool.len()
        )));
    }
    Ok((
        stack(&reps.layer_tag, &pool[..cut], Split::Train),
        stack(&reps.layer_tag, &pool[cut..], Split::Test),
    ))
}

/// Linear phone classifier: `argmax(x W + b)` over the inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub layer_tag: String,
    /// `d x C`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Phone id of each output column.
    pub classes: Vec<usize>,
}

impl LinearProbe {
    pub fn predict(&self, x: &Mat) -> Vec<usize> {
        let scores = x.dot(&self.weights) + &self.bias;
        scores
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (k, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

struct Objective {
    x: Mat,
    y: Vec<usize>,
    n_classes: usize,
    l2: f64,
}

impl Objective {
    fn unpack(&self, p: &[f64]) -> (Mat, Array1<f64>) {
        let (d, c) = (self.x.ncols(), self.n_classes);
        let w = Mat::from_shape_vec((d, c), p[..d * c].to_vec()).expect("parameter length");
        let b = Array1::from(p[d * c..].to_vec());
        (w, b)
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2`, and its gradient.
    fn eval(&self, p: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let (w, b) = self.unpack(p);
        let mut z = self.x.dot(&w) + &b;
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        for (mut row, &y) in z.rows_mut().into_iter().zip(&self.y) {
            let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            loss -= (row[y] / s).ln();
            row /= s;
            row[y] -= 1.0;
        }
        loss = loss / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
        if !want_grad {
            return (loss, Vec::new());
        }
        let gw = self.x.t().dot(&z) / n + &(&w * self.l2);
        let gb = z.sum_axis(Axis(0)) / n;
        (loss, gw.iter().chain(gb.iter()).copied().collect())
    }
}

impl CostFunction for Objective {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p, false).0)
    }
}

impl Gradient for Objective {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p, true).1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub l2: f64,
    pub max_iters: u64,
    pub grad_tolerance: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            l2: PROBE_L2,
            max_iters: 500,
            grad_tolerance: 1e-6,
        }
    }
}

/// Multinomial logistic regression fitted with L-BFGS from a zero start on
/// standardized inputs; the standardization is folded back into the
/// returned weights.
pub fn train_probe(frames: &ProbeFrameSet, opts: &ProbeOptions) -> Result<LinearProbe> {
    let classes: Vec<usize> = frames
        .labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "{}: probe training needs at least two classes, found {}",
            frames.layer_tag,
            classes.len()
        )));
    }
    let index: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mean = frames.vectors.mean_axis(Axis(0)).expect("non-empty");
    let std = frames
        .vectors
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let x = (&frames.vectors - &mean) / &std;
    let (d, c) = (x.ncols(), classes.len());
    let problem = Objective {
        x,
        y: frames.labels.iter().map(|l| index[l]).collect(),
        n_classes: c,
        l2: opts.l2,
    };
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_grad(opts.grad_tolerance)
        .and_then(|s| s.with_tolerance_cost(1e-12))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let init = vec![0.0; d * c + c];
    let result = Executor::new(problem, solver)
        .configure(|s| s.param(init).max_iters(opts.max_iters))
        .run()
        .map_err(|e| Error::invalid(format!("probe optimization failed: {e}")))?;
    let best = result
        .state()
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::invalid("probe optimizer returned no parameters"))?;
    log::debug!(
        "{}: probe converged after {} iterations, cost {:.5}",
        frames.layer_tag,
        result.state().get_iter(),
        result.state().get_best_cost()
    );
    let (w, b) = result
        .problem
        .problem
        .as_ref()
        .expect("problem retained")
        .unpack(&best);
    let weights = &w / &std.clone().insert_axis(Axis(1));
    let bias = &b - &mean.dot(&weights);
    Ok(LinearProbe {
        layer_tag: frames.layer_tag.clone(),
        weights,
        bias,
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: String,
    pub accuracy: f64,
    pub majority_baseline: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Accuracy of `probe` on held-out frames, with the majority baseline.
pub fn evaluate_probe(probe: &LinearProbe, test: &ProbeFrameSet) -> Result<LayerResult> {
    if test.is_empty() {
        return Err(Error::Empty(format!("{} test set", test.layer_tag)));
    }
    let pred = probe.predict(&test.vectors);
    let correct = pred
        .iter()
        .zip(&test.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(LayerResult {
        layer: test.layer_tag.clone(),
        accuracy: correct as f64 / test.len() as f64,
        majority_baseline: test.majority_baseline()?,
        n_train: 0,
        n_test: test.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub dataset: String,
    pub model: String,
    /// How frames were divided between training and testing.
    pub split: String,
    pub layers: Vec<LayerResult>,
}

impl ProbeReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("layer\taccuracy\tbaseline\n");
        for l in &self.layers {
            out += &format!(
                "{}\t{:.4}\t{:.4}\n",
                l.layer, l.accuracy, l.majority_baseline
            );
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.tsv`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let json = stem.with_extension("json");
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&json, e))?;
        let tsv = stem.with_extension("tsv");
        fs::write(&tsv, self.to_tsv()).map_err(|e| Error::io(&tsv, e))
    }
}

/// Split, train and evaluate a probe for every layer.
pub fn probe_layers(
    reps: &[LayerReps],
    train_fraction: f64,
    cap: usize,
    seed: u64,
    opts: &ProbeOptions,
    dataset: &str,
    model: &str,
) -> Result<ProbeReport> {
    let mut layers = Vec::new();
    for r in reps {
        let (train, test) = split_frames(r, train_fraction, cap, seed)?;
        let probe = train_probe(&train, opts)?;
        let mut res = evaluate_probe(&probe, &test)?;
        res.n_train = train.len();
        log::info!(
            "{}: accuracy {:.4} (majority {:.4})",
            res.layer,
            res.accuracy,
            res.majority_baseline
        );
        layers.push(res);
    }
    Ok(ProbeReport {
        dataset: dataset.into(),
        model: model.into(),
        split: "utterance-level".into(),
        layers,
    })
}
