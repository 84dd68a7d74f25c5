//! Beam-search inference and the WER / multi-reference BLEU scorers.

mod beam;
mod bleu;
mod report;
mod wer;

pub use beam::{beam_search, length_normalized_score, length_penalty, BeamConfig, Hypothesis};
pub use bleu::{bleu4, BleuStats, MAX_ORDER};
pub use report::{read_decoded, write_decoded, EvalReport};
pub use wer::{corpus_wer, edit_counts, wer, EditCounts};

/// Splits normalized text into words.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}
