use std::collections::BTreeMap;

use super::FeatureSequence;
use crate::error::{Error, Result};

/// Variances below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Pooled per-speaker first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerStats {
    pub speaker_id: String,
    pub mean: Vec<f64>,
    /// Population variance per coefficient.
    pub variance: Vec<f64>,
    pub frame_count: usize,
}

impl SpeakerStats {
    fn from_sequence(seq: &FeatureSequence) -> Self {
        let n = seq.num_frames();
        let d = seq.dim();
        let mut mean = vec![0.0; d];
        for row in seq.frames.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut variance = vec![0.0; d];
        for row in seq.frames.rows() {
            for ((s, &v), m) in variance.iter_mut().zip(row).zip(&mean) {
                let diff = v as f64 - m;
                *s += diff * diff;
            }
        }
        variance.iter_mut().for_each(|s| *s /= n as f64);
        Self {
            speaker_id: seq.speaker_id.clone(),
            mean,
            variance,
            frame_count: n,
        }
    }

    /// Combines two partial accumulations (pairwise update of mean and M2).
    pub fn merge(&self, other: &SpeakerStats) -> Result<SpeakerStats> {
        if self.mean.len() != other.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: other.mean.len(),
            });
        }
        let (na, nb) = (self.frame_count as f64, other.frame_count as f64);
        let n = na + nb;
        let mut mean = Vec::with_capacity(self.mean.len());
        let mut variance = Vec::with_capacity(self.mean.len());
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            mean.push(self.mean[i] + delta * nb / n);
            let m2 = self.variance[i] * na + other.variance[i] * nb + delta * delta * na * nb / n;
            variance.push(m2 / n);
        }
        Ok(SpeakerStats {
            speaker_id: self.speaker_id.clone(),
            mean,
            variance,
            frame_count: self.frame_count + other.frame_count,
        })
    }
}

/// A coefficient whose variance was floored.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnWarning {
    pub speaker_id: String,
    pub coeff: usize,
    pub variance: f64,
}

/// Pools statistics per speaker over all given utterances.
pub fn accumulate_stats<'a, I>(feats: I) -> Result<BTreeMap<String, SpeakerStats>>
where
    I: IntoIterator<Item = &'a FeatureSequence>,
{
    let mut stats: BTreeMap<String, SpeakerStats> = BTreeMap::new();
    for seq in feats {
        let partial = SpeakerStats::from_sequence(seq);
        let merged = match stats.get(&seq.speaker_id) {
            Some(prev) => prev.merge(&partial)?,
            None => partial,
        };
        stats.insert(seq.speaker_id.clone(), merged);
    }
    Ok(stats)
}

/// Normalizes every utterance with its speaker's pooled mean and variance.
pub fn apply_cmvn(
    feats: &[FeatureSequence],
    stats: &BTreeMap<String, SpeakerStats>,
) -> Result<(Vec<FeatureSequence>, Vec<CmvnWarning>)> {
    let mut warnings = Vec::new();
    let mut scales: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seq in feats {
        let st = stats
            .get(&seq.speaker_id)
            .ok_or_else(|| Error::MissingSpeakerStats(seq.speaker_id.clone()))?;
        if st.mean.len() != seq.dim() {
            return Err(Error::DimensionMismatch {
                expected: st.mean.len(),
                actual: seq.dim(),
            });
        }
        if !scales.contains_key(st.speaker_id.as_str()) {
            let inv_std = st
                .variance
                .iter()
                .enumerate()
                .map(|(coeff, &var)| {
                    if var < VARIANCE_FLOOR {
                        log::warn!(
                            "speaker {} coefficient {coeff}: variance {var:e} floored",
                            st.speaker_id
                        );
                        warnings.push(CmvnWarning {
                            speaker_id: st.speaker_id.clone(),
                            coeff,
                            variance: var,
                        });
                    }
                    1.0 / var.max(VARIANCE_FLOOR).sqrt()
                })
                .collect();
            scales.insert(st.speaker_id.as_str(), inv_std);
        }
    }

    let out = feats
        .iter()
        .map(|seq| {
            let st = &stats[&seq.speaker_id];
            let inv_std = &scales[st.speaker_id.as_str()];
            let mut out = seq.clone();
            for mut row in out.frames.rows_mut() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = ((*v as f64 - st.mean[k]) * inv_std[k]) as f32;
                }
            }
            out
        })
        .collect();
    Ok((out, warnings))
}
