use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::Adam;
use super::sampler::ScheduledSampler;
use super::schedule::{update_lr, ScheduleState};
use crate::error::{Error, Result};
use crate::eval::{beam_search, bleu4, BeamConfig};
use crate::model::{
    encode_batch, round_to_storage, ForwardOptions, ParameterSet, Seq2Seq, TeacherForcing,
    TrainingBatch,
};
use crate::text::{decode_bpe, Vocabulary, EOS};

/// One training pair. `target` ends with eos.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub utt_id: String,
    pub feats: Array2<f32>,
    pub target: Vec<usize>,
}

impl Example {
    pub fn new(utt_id: impl Into<String>, feats: Array2<f32>, mut target: Vec<usize>) -> Self {
        if target.last() != Some(&EOS) {
            target.push(EOS);
        }
        Self {
            utt_id: utt_id.into(),
            feats,
            target,
        }
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ParameterSet,
    pub optimizer: Adam,
    pub schedule: ScheduleState,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(params: ParameterSet, cfg: &TrainConfig) -> Self {
        Self {
            optimizer: Adam::new(&params),
            params,
            schedule: ScheduleState::new(cfg),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub n_tokens: usize,
    pub token_accuracy: f64,
}

/// Groups examples of similar source length into batches. The batch order
/// is shuffled with a generator derived from `seed` and `epoch` only.
pub fn make_batches(
    lengths: &[usize],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c_0000_0000 ^ epoch as u64);
    batches.shuffle(&mut rng);
    batches
}

fn batch_of<'a>(data: &'a [Example], idx: &[usize]) -> TrainingBatch<'a> {
    TrainingBatch {
        feats: idx.iter().map(|&i| data[i].feats.view()).collect(),
        targets: idx.iter().map(|&i| data[i].target.as_slice()).collect(),
    }
}

/// One pass over `data` at the current learning rate. Aborts on a
/// non-finite batch loss without applying that update.
pub fn train_epoch(
    model: &Seq2Seq,
    data: &[Example],
    state: &mut TrainState,
    cfg: &TrainConfig,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    let lengths: Vec<usize> = data.iter().map(|e| e.feats.nrows()).collect();
    let epoch = state.schedule.epoch;
    let lr = state.schedule.lr;
    let (mut loss_sum, mut tokens, mut correct) = (0.0, 0, 0);
    for (bi, idx) in make_batches(&lengths, cfg.batch_size, cfg.seed, epoch)
        .iter()
        .enumerate()
    {
        let batch = batch_of(data, idx);
        let mut sampler = ScheduledSampler {
            cfg,
            epoch,
            vocab_size: model.decoder.vocab_size,
        };
        let opts = ForwardOptions {
            train: true,
            dropout: cfg.dropout,
            compute_grads: true,
        };
        let out = model.forward_loss(&state.params, &batch, opts, &mut sampler, &mut state.rng)?;
        if !out.loss.is_finite() {
            let ids: Vec<&str> = idx.iter().map(|&i| data[i].utt_id.as_str()).collect();
            log::error!(
                "epoch {epoch} batch {bi}: loss {} on utterances {ids:?}",
                out.loss
            );
            return Err(Error::NonFiniteLoss {
                batch: bi,
                loss: out.loss,
            });
        }
        let grads = out.grads.expect("gradients requested");
        state
            .optimizer
            .update(&mut state.params, &grads, lr, cfg.weight_decay)?;
        for (l, stats) in &out.bn_stats {
            let m = cfg.bn_momentum;
            for (suffix, fresh) in [
                ("running_mean", &stats.mean),
                ("running_var", &stats.variance),
            ] {
                let name = format!("encoder.cnn{}.bn.{suffix}", l + 1);
                let run = state
                    .params
                    .get_mut(&name)
                    .expect("batch-norm buffer present");
                for (r, &f) in run.iter_mut().zip(fresh.iter()) {
                    *r = (1.0 - m) * *r + m * f;
                }
                round_to_storage(run);
            }
        }
        loss_sum += out.loss * out.n_tokens as f64;
        tokens += out.n_tokens;
        correct += out.n_correct;
        log::debug!("epoch {epoch} batch {bi}: loss {:.4}", out.loss);
    }
    Ok(EpochStats {
        mean_loss: loss_sum / tokens as f64,
        n_tokens: tokens,
        token_accuracy: correct as f64 / tokens as f64,
    })
}

/// Teacher-forced loss and token accuracy in inference regime.
pub fn evaluate_teacher_forced(
    model: &Seq2Seq,
    params: &ParameterSet,
    data: &[Example],
    batch_size: usize,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data".into()));
    }
    let lengths: Vec<usize> = data.iter().map(|e| e.feats.nrows()).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut loss_sum, mut tokens, mut correct) = (0.0, 0, 0);
    for idx in order.chunks(batch_size.max(1)) {
        let out = model.forward_loss(
            params,
            &batch_of(data, idx),
            ForwardOptions::evaluation(),
            &mut TeacherForcing,
            &mut rng,
        )?;
        loss_sum += out.loss * out.n_tokens as f64;
        tokens += out.n_tokens;
        correct += out.n_correct;
    }
    Ok(EpochStats {
        mean_loss: loss_sum / tokens as f64,
        n_tokens: tokens,
        token_accuracy: correct as f64 / tokens as f64,
    })
}

/// Decodes every example with the given beam settings; returns token ids
/// without the final eos.
pub fn decode_all(
    model: &Seq2Seq,
    params: &ParameterSet,
    data: &[Example],
    beam: &BeamConfig,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(16) {
        let views: Vec<_> = chunk.iter().map(|e| e.feats.view()).collect();
        for enc in encode_batch(&views, params, &model.encoder, false)? {
            let mut ids = beam_search(&enc, params, &model.decoder, beam)?.ids;
            if ids.last() == Some(&EOS) {
                ids.pop();
            }
            out.push(ids);
        }
    }
    Ok(out)
}

/// Held-out data with word-level references for the decay signal.
pub struct DevSet<'a> {
    pub examples: &'a [Example],
    pub references: &'a [Vec<Vec<String>>],
    pub vocab: &'a Vocabulary,
}

/// Greedy-decoded corpus BLEU.
pub fn dev_bleu(model: &Seq2Seq, params: &ParameterSet, dev: &DevSet) -> Result<f64> {
    let greedy = BeamConfig {
        beam_size: 1,
        ..Default::default()
    };
    let hyps = decode_all(model, params, dev.examples, &greedy)?
        .iter()
        .map(|ids| {
            Ok(decode_bpe(ids, dev.vocab)?
                .split_whitespace()
                .map(str::to_string)
                .collect())
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(bleu4(dev.references, &hyps)?.0)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
    pub dev_bleu: f64,
}

/// Trains until `max_epochs` or the learning-rate floor. After each epoch
/// the dev set is scored and the schedule updated; `on_epoch` sees the
/// state and may stop training by returning `false`.
pub fn train_loop(
    model: &Seq2Seq,
    train: &[Example],
    dev: &DevSet,
    state: &mut TrainState,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &TrainState) -> Result<bool>,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut history = Vec::new();
    while !state.schedule.finished(cfg) {
        let lr = state.schedule.lr;
        let stats = train_epoch(model, train, state, cfg)?;
        let dev_acc = evaluate_teacher_forced(model, &state.params, dev.examples, cfg.batch_size)?
            .token_accuracy;
        let bleu = dev_bleu(model, &state.params, dev)?;
        let mut next = update_lr(&state.schedule, bleu, cfg);
        next.epoch += 1;
        state.schedule = next;
        let record = EpochRecord {
            epoch: state.schedule.epoch,
            lr,
            train_loss: stats.mean_loss,
            train_accuracy: stats.token_accuracy,
            dev_accuracy: dev_acc,
            dev_bleu: bleu,
        };
        log::info!(
            "epoch {} lr {:.2e} loss {:.4} acc {:.3} dev_acc {:.3} dev_bleu {:.2}",
            record.epoch,
            lr,
            record.train_loss,
            record.train_accuracy,
            dev_acc,
            bleu
        );
        history.push(record.clone());
        if !on_epoch(&record, state)? {
            break;
        }
    }
    Ok(history)
}
