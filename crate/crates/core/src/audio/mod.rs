//! Acoustic front end: MFCC extraction, per-speaker CMVN, speed perturbation,
//! trimming, and the binary feature archive.

mod archive;
mod cmvn;
mod mfcc;
mod perturb;
mod wav;

pub use archive::{
    index_path, read_archive, read_index, FeatureArchiveReader, FeatureArchiveWriter,
};
pub use cmvn::{accumulate_stats, apply_cmvn, CmvnWarning, SpeakerStats, VARIANCE_FLOOR};
pub use mfcc::{compute_mfcc, MfccConfig, MfccExtractor};
pub use perturb::{perturbed_id, speed_perturb};
pub use wav::{read_wav, write_wav};

use ndarray::Array2;

use crate::error::{Error, Result};

/// A mono utterance recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub utt_id: String,
    pub speaker_id: String,
}

impl Waveform {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        utt_id: impl Into<String>,
        speaker_id: impl Into<String>,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
            utt_id: utt_id.into(),
            speaker_id: speaker_id.into(),
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// A `T x D` matrix of feature frames for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f32>,
    /// Seconds between consecutive frames.
    pub frame_shift: f64,
    pub utt_id: String,
    pub speaker_id: String,
}

impl FeatureSequence {
    /// Builds a sequence, rejecting empty or non-finite frame matrices.
    pub fn new(
        frames: Array2<f32>,
        frame_shift: f64,
        utt_id: impl Into<String>,
        speaker_id: impl Into<String>,
    ) -> Result<Self> {
        let utt_id = utt_id.into();
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(Error::Empty(format!("feature sequence {utt_id}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature sequence {utt_id} contains non-finite values"
            )));
        }
        if !(frame_shift > 0.0) {
            return Err(Error::invalid("frame shift must be positive"));
        }
        Ok(Self {
            frames,
            frame_shift,
            utt_id,
            speaker_id: speaker_id.into(),
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.num_frames() as f64 * self.frame_shift
    }
}

/// Drops frames from the end so that the sequence covers at most `max_seconds`.
pub fn trim_utterance(feats: &FeatureSequence, max_seconds: f64) -> Result<FeatureSequence> {
    if !(max_seconds > 0.0) {
        return Err(Error::invalid("trim limit must be positive"));
    }
    // Guard against 16.0 / 0.01 landing just below an integer.
    let max_frames = ((max_seconds / feats.frame_shift) + 1e-9).floor() as usize;
    let keep = feats.num_frames().min(max_frames.max(1));
    let mut out = feats.clone();
    if keep < feats.num_frames() {
        out.frames = feats.frames.slice(ndarray::s![..keep, ..]).to_owned();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(frames: usize) -> FeatureSequence {
        FeatureSequence::new(Array2::zeros((frames, 13)), 0.01, "u", "s").unwrap()
    }

    #[test]
    fn trim_long_utterance_to_limit() {
        let out = trim_utterance(&seq(2000), 16.0).unwrap();
        assert_eq!(out.num_frames(), 1600);
        assert!((out.duration() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn trim_keeps_short_utterance() {
        let input = seq(1000);
        assert_eq!(trim_utterance(&input, 16.0).unwrap(), input);
    }

    #[test]
    fn trim_to_augmented_limit() {
        let out = trim_utterance(&seq(2000), 12.0).unwrap();
        assert!(out.duration() <= 12.0 + 1e-9);
        assert_eq!(out.num_frames(), 1200);
    }

    #[test]
    fn rejects_non_finite_frames() {
        let mut frames = Array2::zeros((2, 3));
        frames[[1, 1]] = f32::NAN;
        assert!(FeatureSequence::new(frames, 0.01, "u", "s").is_err());
    }
}
