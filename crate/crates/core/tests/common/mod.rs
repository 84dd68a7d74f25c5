//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xferbench::eval::length_penalty;
use xferbench::model::{
    DecoderConfig, DecoderSession, DecoderState, EncoderConfig, EncoderStates, ForwardOptions,
    ParameterSet, Seq2Seq, TeacherForcing, TrainingBatch,
};
use xferbench::text::{BOS, EOS, NUM_RESERVED};

/// Encoder with two stride-2 CNNs and a two-layer BiLSTM, all tiny.
pub fn micro_model(vocab_size: usize, hidden: usize) -> Seq2Seq {
    let enc = EncoderConfig {
        input_dim: 3,
        n_cnn_layers: 2,
        cnn_stride_time: 2,
        cnn_channels: 4,
        cnn_kernel_time: 3,
        n_rnn_layers: 2,
        rnn_hidden: hidden,
        bidirectional: true,
    };
    let dec = DecoderConfig {
        embed_dim: 4,
        n_rnn_layers: 2,
        rnn_hidden: hidden,
        ..DecoderConfig::with_vocab(vocab_size)
    };
    Seq2Seq::new(enc, dec).unwrap()
}

pub fn random_feats(rng: &mut impl Rng, frames: usize, dim: usize) -> Array2<f32> {
    Array2::from_shape_fn((frames, dim), |_| rng.random_range(-1.5f32..1.5))
}

/// Parameters scaled up from the default init so that outputs are far from
/// uniform and search problems are not degenerate.
pub fn sharpened_params(model: &Seq2Seq, seed: u64, scale: f64) -> ParameterSet {
    let mut params = model.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
    for i in 0..params.len() {
        if params.is_trainable(i) {
            params.values_mut()[i].mapv_inplace(|v| v * scale);
        }
    }
    params
}

/// Per trainable parameter group: `|analytic - numeric| / max(|analytic|, |numeric|)`
/// using central differences of the batch loss.
pub fn finite_difference_errors(
    model: &Seq2Seq,
    params: &ParameterSet,
    feats: &[Array2<f32>],
    targets: &[Vec<usize>],
    dropout: f64,
    eps: f64,
) -> Vec<(String, f64)> {
    let batch = TrainingBatch {
        feats: feats.iter().map(|f| f.view()).collect(),
        targets: targets.iter().map(|t| t.as_slice()).collect(),
    };
    let opts = ForwardOptions {
        train: true,
        dropout,
        compute_grads: true,
    };
    let loss = |p: &ParameterSet, grads: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let o = ForwardOptions {
            compute_grads: grads,
            ..opts
        };
        model
            .forward_loss(p, &batch, o, &mut TeacherForcing, &mut rng)
            .unwrap()
    };
    let analytic = loss(params, true).grads.unwrap();
    let mut work = params.clone();
    let mut out = Vec::new();
    for i in 0..params.len() {
        if !params.is_trainable(i) {
            continue;
        }
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..params.values()[i].len() {
            let orig = params.values()[i].as_slice().unwrap()[j];
            work.values_mut()[i].as_slice_mut().unwrap()[j] = orig + eps;
            let up = loss(&work, false).loss;
            work.values_mut()[i].as_slice_mut().unwrap()[j] = orig - eps;
            let down = loss(&work, false).loss;
            work.values_mut()[i].as_slice_mut().unwrap()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i].as_slice().unwrap()[j];
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let denom = na.sqrt().max(nn.sqrt()).max(1e-12);
        out.push((params.name(i).to_string(), diff.sqrt() / denom));
    }
    out
}

/// Log-probability of emitting `ids` (ending in eos) after bos.
pub fn sequence_logprob(session: &DecoderSession, cfg: &DecoderConfig, ids: &[usize]) -> f64 {
    let mut state = DecoderState::initial(cfg);
    let mut prev = BOS;
    let mut total = 0.0;
    for &id in ids {
        let out = session.step(&[prev], &[&state]).unwrap().pop().unwrap();
        total += out.log_probs[id];
        state = out.state;
        prev = id;
    }
    total
}

/// Exhaustive search over every sequence of non-reserved tokens shorter
/// than `max_len`, terminated by eos. Returns the ids and normalized score
/// of the best one (first found on exact ties, shorter and lower ids first).
pub fn brute_force_decode(
    enc: &EncoderStates,
    params: &ParameterSet,
    cfg: &DecoderConfig,
    alpha: f64,
    max_len: usize,
) -> (Vec<usize>, f64) {
    let session = DecoderSession::new(params, cfg, enc).unwrap();
    let real: Vec<usize> = (NUM_RESERVED..cfg.vocab_size).collect();
    let mut prefixes: Vec<Vec<usize>> = vec![vec![]];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &prefixes {
            let mut ids = p.clone();
            ids.push(EOS);
            let score = sequence_logprob(&session, cfg, &ids) / length_penalty(ids.len(), alpha);
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((ids, score));
            }
            for &r in &real {
                let mut q = p.clone();
                q.push(r);
                next.push(q);
            }
        }
        prefixes = next;
    }
    best.unwrap()
}

/// Greedy decoding written out directly: always the arg-max emit-able
/// token (lowest id on ties), eos forced at `max_len`.
pub fn greedy_decode(
    enc: &EncoderStates,
    params: &ParameterSet,
    cfg: &DecoderConfig,
    max_len: usize,
) -> Vec<usize> {
    let session = DecoderSession::new(params, cfg, enc).unwrap();
    let mut state = DecoderState::initial(cfg);
    let mut prev = BOS;
    let mut ids = Vec::new();
    loop {
        if ids.len() + 1 >= max_len {
            ids.push(EOS);
            return ids;
        }
        let out = session.step(&[prev], &[&state]).unwrap().pop().unwrap();
        let mut best = EOS;
        for id in NUM_RESERVED..cfg.vocab_size {
            if out.log_probs[id] > out.log_probs[best]
                || (out.log_probs[id] == out.log_probs[best] && id < best)
            {
                best = id;
            }
        }
        ids.push(best);
        if best == EOS {
            return ids;
        }
        state = out.state;
        prev = best;
    }
}

/// Rank by counting: `1 + #smaller + (#equal - 1) / 2`.
pub fn count_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of counted ranks.
pub fn rank_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (count_ranks(xs), count_ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub struct AsrData {
    pub examples: Vec<xferbench::train::Example>,
    pub references: Vec<Vec<Vec<String>>>,
    pub vocab: xferbench::text::Vocabulary,
}

/// CMVN-normalized synthetic utterances with character-level targets.
pub fn asr_data(spec: &xferbench::workbench::SynthSpec) -> AsrData {
    use xferbench::audio::{accumulate_stats, apply_cmvn};
    use xferbench::text::{apply_bpe, train_bpe};
    let data = xferbench::workbench::synth_dataset(spec, "feats.ark").unwrap();
    let stats = accumulate_stats(data.features.iter()).unwrap();
    let (feats, _) = apply_cmvn(&data.features, &stats).unwrap();
    let corpus: Vec<String> = data
        .manifest
        .rows
        .iter()
        .map(|r| r.transcript.clone())
        .collect();
    let (table, vocab) = train_bpe(&corpus, 0).unwrap();
    let examples = feats
        .iter()
        .zip(&corpus)
        .map(|(f, t)| {
            xferbench::train::Example::new(
                &f.utt_id,
                f.frames.clone(),
                apply_bpe(t, &table, &vocab).ids,
            )
        })
        .collect();
    let references = corpus
        .iter()
        .map(|t| vec![t.split_whitespace().map(str::to_string).collect()])
        .collect();
    AsrData {
        examples,
        references,
        vocab,
    }
}

/// Small encoder-decoder over the synthetic feature dimension.
pub fn small_model(input_dim: usize, vocab_size: usize, hidden: usize) -> Seq2Seq {
    let enc = EncoderConfig {
        input_dim,
        cnn_channels: 8,
        n_rnn_layers: 1,
        rnn_hidden: hidden,
        ..Default::default()
    };
    let dec = DecoderConfig {
        embed_dim: 8,
        n_rnn_layers: 1,
        rnn_hidden: hidden,
        ..DecoderConfig::with_vocab(vocab_size)
    };
    Seq2Seq::new(enc, dec).unwrap()
}
