use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureSequence, Waveform};
use crate::error::{Error, Result};

/// MFCC extraction settings. Defaults follow the common Kaldi recipe:
/// 25 ms windows every 10 ms, 23 mel bins, 13 static cepstra including c0.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub window_seconds: f64,
    pub shift_seconds: f64,
    pub n_coeffs: usize,
    pub n_mel_bins: usize,
    pub low_freq: f64,
    /// Upper band edge in Hz; non-positive values are offsets from Nyquist.
    pub high_freq: f64,
    pub preemphasis: f64,
    pub cepstral_lifter: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_seconds: 0.025,
            shift_seconds: 0.010,
            n_coeffs: 13,
            n_mel_bins: 23,
            low_freq: 20.0,
            high_freq: 0.0,
            preemphasis: 0.97,
            cepstral_lifter: 22.0,
        }
    }
}

/// Precomputed window, filterbank and DCT for one sample rate.
pub struct MfccExtractor {
    config: MfccConfig,
    sample_rate: u32,
    window_len: usize,
    shift_len: usize,
    fft_len: usize,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// `(first_bin, weights)` per mel filter.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Array2<f64>,
    lifter: Vec<f64>,
}

fn mel(freq: f64) -> f64 {
    1127.0 * (1.0 + freq / 700.0).ln()
}

impl MfccExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(config.shift_seconds > 0.0 && config.window_seconds > config.shift_seconds) {
            return Err(Error::invalid(format!(
                "need window > shift > 0, got window {} shift {}",
                config.window_seconds, config.shift_seconds
            )));
        }
        if config.n_coeffs == 0 {
            return Err(Error::invalid("n_coeffs must be at least 1"));
        }
        let sr = sample_rate as f64;
        let window_len = (config.window_seconds * sr).round() as usize;
        let shift_len = (config.shift_seconds * sr).round() as usize;
        if shift_len == 0 || window_len < 2 {
            return Err(Error::invalid("window/shift shorter than one sample"));
        }
        let fft_len = window_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);

        // Povey window: a Hann window raised to 0.85.
        let window = (0..window_len)
            .map(|i| {
                let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (window_len - 1) as f64).cos();
                hann.powf(0.85)
            })
            .collect();

        let n_mel = config.n_mel_bins.max(config.n_coeffs);
        let nyquist = sr / 2.0;
        let high = if config.high_freq > 0.0 {
            config.high_freq
        } else {
            nyquist + config.high_freq
        };
        if !(high > config.low_freq && config.low_freq >= 0.0 && high <= nyquist) {
            return Err(Error::invalid("invalid mel band edges"));
        }
        let (mel_low, mel_high) = (mel(config.low_freq), mel(high));
        let mel_delta = (mel_high - mel_low) / (n_mel + 1) as f64;
        let n_bins = fft_len / 2;
        let bin_hz = sr / fft_len as f64;
        let filters = (0..n_mel)
            .map(|m| {
                let left = mel_low + m as f64 * mel_delta;
                let center = left + mel_delta;
                let right = center + mel_delta;
                let mut first = None;
                let mut weights = Vec::new();
                for bin in 0..n_bins {
                    let f = mel(bin as f64 * bin_hz);
                    if f > left && f < right {
                        let w = if f <= center {
                            (f - left) / (center - left)
                        } else {
                            (right - f) / (right - center)
                        };
                        first.get_or_insert(bin);
                        weights.push(w);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();

        // Orthonormal DCT-II, truncated to the requested coefficients.
        let mut dct = Array2::zeros((config.n_coeffs, n_mel));
        let norm0 = (1.0 / n_mel as f64).sqrt();
        let norm = (2.0 / n_mel as f64).sqrt();
        for k in 0..config.n_coeffs {
            for j in 0..n_mel {
                let scale = if k == 0 { norm0 } else { norm };
                dct[[k, j]] = scale * (PI / n_mel as f64 * (j as f64 + 0.5) * k as f64).cos();
            }
        }
        let q = config.cepstral_lifter;
        let lifter = (0..config.n_coeffs)
            .map(|i| {
                if q > 0.0 {
                    1.0 + 0.5 * q * (PI * i as f64 / q).sin()
                } else {
                    1.0
                }
            })
            .collect();

        Ok(Self {
            config,
            sample_rate,
            window_len,
            shift_len,
            fft_len,
            fft,
            window,
            filters,
            dct,
            lifter,
        })
    }

    pub fn num_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.window_len {
            0
        } else {
            1 + (n_samples - self.window_len) / self.shift_len
        }
    }

    pub fn compute(&self, wave: &Waveform) -> Result<FeatureSequence> {
        if wave.sample_rate != self.sample_rate {
            return Err(Error::invalid(format!(
                "extractor built for {} Hz, waveform {} is {} Hz",
                self.sample_rate, wave.utt_id, wave.sample_rate
            )));
        }
        let n_frames = self.num_frames(wave.samples.len());
        if n_frames == 0 {
            return Err(Error::UtteranceTooShort {
                utt_id: wave.utt_id.clone(),
                samples: wave.samples.len(),
                window: self.window_len,
            });
        }
        let n_mel = self.filters.len();
        let mut out = Array2::<f32>::zeros((n_frames, self.config.n_coeffs));
        let mut frame = vec![0.0f64; self.window_len];
        let mut spectrum = vec![Complex::new(0.0, 0.0); self.fft_len];
        let mut log_mel = vec![0.0f64; n_mel];
        for t in 0..n_frames {
            let start = t * self.shift_len;
            for (dst, &src) in frame
                .iter_mut()
                .zip(&wave.samples[start..start + self.window_len])
            {
                *dst = src as f64;
            }
            let dc = frame.iter().sum::<f64>() / self.window_len as f64;
            frame.iter_mut().for_each(|v| *v -= dc);
            let p = self.config.preemphasis;
            for i in (1..self.window_len).rev() {
                frame[i] -= p * frame[i - 1];
            }
            frame[0] -= p * frame[0];

            for (i, c) in spectrum.iter_mut().enumerate() {
                *c = if i < self.window_len {
                    Complex::new(frame[i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut spectrum);

            for (m, (first, weights)) in self.filters.iter().enumerate() {
                let energy: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * spectrum[first + k].norm_sqr())
                    .sum();
                log_mel[m] = energy.max(f64::EPSILON).ln();
            }
            for k in 0..self.config.n_coeffs {
                let c: f64 = (0..n_mel).map(|j| self.dct[[k, j]] * log_mel[j]).sum();
                out[[t, k]] = (c * self.lifter[k]) as f32;
            }
        }
        FeatureSequence::new(
            out,
            self.config.shift_seconds,
            wave.utt_id.clone(),
            wave.speaker_id.clone(),
        )
    }
}

/// One-shot MFCC extraction with default filterbank settings.
pub fn compute_mfcc(
    wave: &Waveform,
    window: f64,
    shift: f64,
    n_coeffs: usize,
) -> Result<FeatureSequence> {
    if wave.samples.is_empty() {
        return Err(Error::Empty(format!("waveform {}", wave.utt_id)));
    }
    let config = MfccConfig {
        window_seconds: window,
        shift_seconds: shift,
        n_coeffs,
        ..MfccConfig::default()
    };
    MfccExtractor::new(config, wave.sample_rate)?.compute(wave)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(seconds: f64, sr: u32) -> Waveform {
        let n = (seconds * sr as f64).round() as usize;
        let samples = (0..n)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / sr as f64).sin() as f32 * 0.3)
            .collect();
        Waveform::new(samples, sr, "tone", "spk").unwrap()
    }

    #[test]
    fn thirteen_coefficients_per_frame() {
        let feats = compute_mfcc(&tone(0.5, 16000), 0.025, 0.010, 13).unwrap();
        assert_eq!(feats.dim(), 13);
    }

    #[test]
    fn one_second_yields_98_frames() {
        let feats = compute_mfcc(&tone(1.0, 16000), 0.025, 0.010, 13).unwrap();
        assert_eq!(feats.num_frames(), 98);
    }

    #[test]
    fn constant_signal_gives_identical_frames() {
        let wave = Waveform::new(vec![0.0; 8000], 16000, "z", "s").unwrap();
        let feats = compute_mfcc(&wave, 0.025, 0.010, 13).unwrap();
        let first = feats.frames.row(0).to_owned();
        for row in feats.frames.rows() {
            assert_eq!(row, first);
        }
    }

    #[test]
    fn deterministic() {
        let wave = tone(0.3, 8000);
        let a = compute_mfcc(&wave, 0.025, 0.010, 13).unwrap();
        let b = compute_mfcc(&wave, 0.025, 0.010, 13).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_short_utterance() {
        let wave = Waveform::new(vec![0.1; 100], 16000, "short", "s").unwrap();
        let err = compute_mfcc(&wave, 0.025, 0.010, 13).unwrap_err();
        assert!(matches!(err, Error::UtteranceTooShort { window: 400, .. }));
    }

    #[test]
    fn rejects_window_not_longer_than_shift() {
        assert!(compute_mfcc(&tone(0.5, 16000), 0.010, 0.010, 13).is_err());
        assert!(compute_mfcc(&tone(0.5, 16000), 0.025, 0.0, 13).is_err());
        assert!(compute_mfcc(&tone(0.5, 16000), 0.025, 0.010, 0).is_err());
    }
}
