use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

/// Zero crossings of the interpolation kernel on each side.
const KERNEL_ZEROS: f64 = 16.0;

/// Identifier given to a copy perturbed by `factor`, e.g. `utt-sp0.9`.
pub fn perturbed_id(id: &str, factor: f64) -> String {
    format!("{id}-sp{factor}")
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples the waveform so it plays `factor` times faster, changing tempo
/// and pitch together. The output keeps the input sample rate, so its length
/// is `len / factor`. Speaker ids are suffixed like utterance ids, so that
/// per-speaker statistics never pool perturbed and original audio.
pub fn speed_perturb(wave: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::invalid(format!(
            "speed factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(wave.clone());
    }
    let n_in = wave.samples.len();
    let n_out = (n_in as f64 / factor).round() as usize;
    // Low-pass at the output Nyquist when speeding up.
    let cutoff = (1.0 / factor).min(1.0);
    let half_width = KERNEL_ZEROS / cutoff;
    let samples = (0..n_out)
        .map(|j| {
            let t = j as f64 * factor;
            let lo = ((t - half_width).ceil().max(0.0)) as usize;
            let hi = ((t + half_width).floor() as usize).min(n_in.saturating_sub(1));
            let mut acc = 0.0;
            for i in lo..=hi {
                let offset = t - i as f64;
                let taper = 0.5 + 0.5 * (PI * offset / half_width).cos();
                acc += wave.samples[i] as f64 * cutoff * sinc(cutoff * offset) * taper;
            }
            acc as f32
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: wave.sample_rate,
        utt_id: perturbed_id(&wave.utt_id, factor),
        speaker_id: perturbed_id(&wave.speaker_id, factor),
    })
}
