//! The optimization loop: scheduled sampling, learning-rate decay on the
//! dev score, Adam with decoupled weight decay, and checkpoints.

mod checkpoint;
mod config;
mod epoch;
mod optim;
mod sampler;
mod schedule;

pub use checkpoint::{
    decode_array, encode_array, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint,
};
pub use config::{key_values, TrainConfig};
pub use epoch::{
    decode_all, dev_bleu, evaluate_teacher_forced, make_batches, train_epoch, train_loop, DevSet,
    EpochRecord, EpochStats, Example, TrainState,
};
pub use optim::Adam;
pub use sampler::{sample_branch, sample_decoder_input, SampleBranch, ScheduledSampler};
pub use schedule::{update_lr, ScheduleState};
