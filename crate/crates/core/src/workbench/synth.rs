use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestRow};
use super::seeds::derive_seed;
use crate::audio::{FeatureArchiveWriter, FeatureSequence};
use crate::error::{Error, Result};
use crate::probing::{write_labels, UttLabels};

pub const SYNTH_FRAME_SHIFT: f64 = 0.01;
pub const MAX_PHONES: usize = 13;
const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

/// A synthetic orthography: the symbol written for each phone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphemeMap(pub Vec<char>);

impl GraphemeMap {
    /// `n` consecutive lowercase letters starting at `offset`.
    pub fn letters(offset: usize, n: usize) -> Result<Self> {
        let all: Vec<char> = LETTERS.chars().collect();
        if offset + n > all.len() {
            return Err(Error::invalid(format!(
                "cannot take {n} letters from offset {offset}"
            )));
        }
        Ok(Self(all[offset..offset + n].to_vec()))
    }

    pub fn write(&self, phones: &[usize]) -> String {
        phones.iter().map(|&p| self.0[p]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TranslationRule {
    /// Reverse the phone string (word order and letters) and spell it with
    /// a second grapheme table.
    ReverseMap(GraphemeMap),
}

impl TranslationRule {
    pub fn apply(&self, words: &[Vec<usize>]) -> String {
        match self {
            TranslationRule::ReverseMap(map) => words
                .iter()
                .rev()
                .map(|w| {
                    let rev: Vec<usize> = w.iter().rev().copied().collect();
                    map.write(&rev)
                })
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

/// Parameters of one synthetic language corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_phones: usize,
    pub dim: usize,
    /// Minimum distance between phone means, in standard deviations.
    pub mean_separation: f64,
    /// Seed of the phone inventory; languages sharing it share acoustics.
    pub inventory_seed: u64,
    pub frames_per_phone: (usize, usize),
    /// Silence between words; its frames carry the label `n_phones`.
    pub word_gap_frames: (usize, usize),
    pub n_utterances: usize,
    /// Words per utterance.
    pub utterance_words: (usize, usize),
    /// Phones per word.
    pub word_phones: (usize, usize),
    pub n_speakers: usize,
    /// Standard deviation of the per-speaker mean offset.
    pub speaker_shift: f64,
    pub grapheme_map: GraphemeMap,
    pub translation_rule: TranslationRule,
    /// Translation references per utterance (1..4); extra references drop
    /// one word of the canonical translation.
    pub n_references: usize,
    pub utt_prefix: String,
    pub seed: u64,
}

impl SynthSpec {
    /// Language "a": phones written a..h, translations written q..x.
    pub fn language_a(n_utterances: usize, seed: u64) -> Self {
        Self {
            n_phones: 8,
            dim: 13,
            mean_separation: 4.0,
            inventory_seed: 7,
            frames_per_phone: (3, 8),
            word_gap_frames: (2, 4),
            n_utterances,
            utterance_words: (2, 5),
            word_phones: (1, 3),
            n_speakers: 4,
            speaker_shift: 0.3,
            grapheme_map: GraphemeMap::letters(0, 8).unwrap(),
            translation_rule: TranslationRule::ReverseMap(GraphemeMap::letters(16, 8).unwrap()),
            n_references: 1,
            utt_prefix: "la".into(),
            seed,
        }
    }

    /// Language "b": same phones, disjoint orthography.
    pub fn language_b(n_utterances: usize, seed: u64) -> Self {
        Self {
            grapheme_map: GraphemeMap::letters(8, 8).unwrap(),
            utt_prefix: "lb".into(),
            ..Self::language_a(n_utterances, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (usize, usize)| {
            if lo == 0 || lo > hi {
                Err(Error::invalid(format!(
                    "{name} range ({lo}, {hi}) is invalid"
                )))
            } else {
                Ok(())
            }
        };
        range("frames_per_phone", self.frames_per_phone)?;
        if self.word_gap_frames.0 > self.word_gap_frames.1 {
            return Err(Error::invalid("word_gap_frames range is invalid"));
        }
        range("utterance_words", self.utterance_words)?;
        range("word_phones", self.word_phones)?;
        if self.n_phones < 2 || self.n_phones > MAX_PHONES || self.dim == 0 {
            return Err(Error::invalid(format!(
                "need 2..={MAX_PHONES} phones and a positive dimension"
            )));
        }
        if self.grapheme_map.0.len() != self.n_phones {
            return Err(Error::invalid("grapheme map must cover every phone"));
        }
        let TranslationRule::ReverseMap(t) = &self.translation_rule;
        if t.0.len() != self.n_phones {
            return Err(Error::invalid("translation table must cover every phone"));
        }
        if self.n_utterances == 0 || self.n_speakers == 0 {
            return Err(Error::invalid("need at least one utterance and speaker"));
        }
        if !(1..=4).contains(&self.n_references) {
            return Err(Error::invalid("n_references must be 1..4"));
        }
        if !(self.mean_separation > 0.0) || !(self.speaker_shift >= 0.0) {
            return Err(Error::invalid("mean_separation must be positive"));
        }
        Ok(())
    }
}

/// Phone means with pairwise distance at least `separation`, drawn by
/// rejection from an isotropic Gaussian.
pub fn phone_means(n_phones: usize, dim: usize, separation: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = separation * 1.5 / (2.0f64).sqrt();
    let mut means: Vec<Vec<f64>> = Vec::new();
    let mut attempts = 0usize;
    while means.len() < n_phones {
        attempts += 1;
        // Widen the cloud if packing stalls.
        let s = scale * (1.0 + (attempts / 1000) as f64 * 0.25);
        let cand: Vec<f64> = (0..dim)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let far = means.iter().all(|m| {
            m.iter()
                .zip(&cand)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                >= separation
        });
        if far {
            means.push(cand);
        }
    }
    Array2::from_shape_fn((n_phones, dim), |(p, d)| means[p][d])
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub features: Vec<FeatureSequence>,
    pub manifest: Manifest,
    pub labels: Vec<UttLabels>,
    /// Phone strings grouped into words, per utterance.
    pub words: Vec<Vec<Vec<usize>>>,
}

/// Generates a corpus. Frames are unit-variance Gaussians around the
/// phone mean plus a per-speaker offset; words are separated by a short
/// silence segment. Manifest paths point at
/// `archive_name`.
pub fn synth_dataset(spec: &SynthSpec, archive_name: &str) -> Result<SynthData> {
    spec.validate()?;
    // The last row is the silence class.
    let means = phone_means(
        spec.n_phones + 1,
        spec.dim,
        spec.mean_separation,
        spec.inventory_seed,
    );
    let silence = spec.n_phones;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth"));
    let speakers: Vec<Vec<f64>> = (0..spec.n_speakers)
        .map(|_| {
            (0..spec.dim)
                .map(|_| spec.speaker_shift * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let width = spec.n_utterances.to_string().len().max(4);
    let (mut features, mut rows, mut labels, mut all_words) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for u in 0..spec.n_utterances {
        let utt_id = format!("{}-{:0width$}", spec.utt_prefix, u);
        let spk_index = u % spec.n_speakers;
        let speaker_id = format!("{}-spk{}", spec.utt_prefix, spk_index);
        let n_words = rng.random_range(spec.utterance_words.0..=spec.utterance_words.1);
        let words: Vec<Vec<usize>> = (0..n_words)
            .map(|_| {
                let n = rng.random_range(spec.word_phones.0..=spec.word_phones.1);
                (0..n).map(|_| rng.random_range(0..spec.n_phones)).collect()
            })
            .collect();
        let mut frame_labels = Vec::new();
        for (w, word) in words.iter().enumerate() {
            if w > 0 {
                let n = rng.random_range(spec.word_gap_frames.0..=spec.word_gap_frames.1);
                frame_labels.extend(std::iter::repeat_n(silence, n));
            }
            for &p in word {
                let n = rng.random_range(spec.frames_per_phone.0..=spec.frames_per_phone.1);
                frame_labels.extend(std::iter::repeat_n(p, n));
            }
        }
        let spk = &speakers[spk_index];
        let mut frames = Array2::<f32>::zeros((frame_labels.len(), spec.dim));
        for (t, &p) in frame_labels.iter().enumerate() {
            for d in 0..spec.dim {
                let z: f64 = rng.sample(StandardNormal);
                frames[[t, d]] = (means[[p, d]] + spk[d] + z) as f32;
            }
        }
        let transcript = words
            .iter()
            .map(|w| spec.grapheme_map.write(w))
            .collect::<Vec<_>>()
            .join(" ");
        let canonical = spec.translation_rule.apply(&words);
        let mut translations = vec![canonical.clone()];
        for _ in 1..spec.n_references {
            let toks: Vec<&str> = canonical.split(' ').collect();
            let alt = if toks.len() > 1 {
                let drop = rng.random_range(0..toks.len());
                toks.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != drop)
                    .map(|(_, t)| *t)
                    .collect::<Vec<_>>()
                    .join(" ")
            } else {
                canonical.clone()
            };
            translations.push(alt);
        }
        let seq = FeatureSequence::new(frames, SYNTH_FRAME_SHIFT, &utt_id, &speaker_id)?;
        rows.push(ManifestRow {
            utt_id: utt_id.clone(),
            path: archive_name.to_string(),
            speaker_id,
            duration: seq.duration(),
            transcript,
            translations,
        });
        labels.push(UttLabels {
            utt_id,
            labels: frame_labels,
        });
        features.push(seq);
        all_words.push(words);
    }
    Ok(SynthData {
        features,
        manifest: Manifest::new(rows)?,
        labels,
        words: all_words,
    })
}

/// Writes `feats.ark` (+ index), `manifest.tsv` and `labels.txt` into `dir`.
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ark = FeatureArchiveWriter::create(&dir.join("feats.ark"))?;
    for f in &data.features {
        ark.append(&f.utt_id, &f.frames)?;
    }
    ark.finish()?;
    data.manifest.save(&dir.join("manifest.tsv"))?;
    write_labels(&dir.join("labels.txt"), &data.labels)
}
