//! Transcript normalization and byte-pair-encoding subwords.

mod bpe;
mod normalize;
mod vocab;

pub use bpe::{apply_bpe, decode_bpe, learn_bpe, train_bpe, MergeTable, END_OF_WORD};
pub use normalize::normalize_transcript;
pub use vocab::{TokenSequence, Vocabulary, BOS, EOS, NUM_RESERVED, PAD, UNK};
