use rand::{Rng, RngCore};

use super::config::TrainConfig;
use crate::model::InputSampler;
use crate::text::NUM_RESERVED;

/// Which branch a scheduled-sampling draw took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleBranch {
    Gold,
    Model,
    /// Model branch with the prediction replaced by a random word.
    Random(usize),
}

/// One scheduled-sampling draw. `epoch` counts completed epochs, so
/// replacement starts once `rand_word_start_epoch` epochs are done.
pub fn sample_branch(
    epoch: usize,
    cfg: &TrainConfig,
    vocab_size: usize,
    rng: &mut dyn RngCore,
) -> SampleBranch {
    if cfg.sample_pred_prob <= 0.0 || !rng.random_bool(cfg.sample_pred_prob) {
        return SampleBranch::Gold;
    }
    if epoch >= cfg.rand_word_start_epoch
        && vocab_size > NUM_RESERVED
        && cfg.rand_word_prob > 0.0
        && rng.random_bool(cfg.rand_word_prob)
    {
        return SampleBranch::Random(rng.random_range(NUM_RESERVED..vocab_size));
    }
    SampleBranch::Model
}

/// Decoder input for the next step: gold, the model's prediction, or a
/// uniform non-reserved token in place of the prediction.
pub fn sample_decoder_input(
    gold_prev: usize,
    model_prev: usize,
    epoch: usize,
    cfg: &TrainConfig,
    vocab_size: usize,
    rng: &mut dyn RngCore,
) -> usize {
    match sample_branch(epoch, cfg, vocab_size, rng) {
        SampleBranch::Gold => gold_prev,
        SampleBranch::Model => model_prev,
        SampleBranch::Random(id) => id,
    }
}

/// [`InputSampler`] applying the training recipe at a fixed epoch.
pub struct ScheduledSampler<'c> {
    pub cfg: &'c TrainConfig,
    pub epoch: usize,
    pub vocab_size: usize,
}

impl InputSampler for ScheduledSampler<'_> {
    fn choose(&mut self, gold_prev: usize, model_prev: usize, rng: &mut dyn RngCore) -> usize {
        sample_decoder_input(
            gold_prev,
            model_prev,
            self.epoch,
            self.cfg,
            self.vocab_size,
            rng,
        )
    }
}
