use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Reads a mono WAV file (16-bit PCM or 32-bit float). Multi-channel files
/// are downmixed by averaging.
pub fn read_wav(path: &Path, utt_id: &str, speaker_id: &str) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let raw: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples = if channels == 1 {
        raw
    } else {
        raw.chunks(channels)
            .map(|c| c.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    if samples.is_empty() {
        return Err(Error::Empty(format!("audio file {}", path.display())));
    }
    Waveform::new(samples, spec.sample_rate, utt_id, speaker_id)
}

/// Writes a mono 32-bit float WAV file.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        writer.write_sample(s)?;
    }
    writer.finalize()?;
    Ok(())
}
