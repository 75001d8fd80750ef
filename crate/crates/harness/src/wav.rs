//! 16-bit mono 44.1 kHz WAV files.

use std::path::Path;

use celtld::codec::SAMPLE_RATE;

use crate::error::{format_err, Result};

pub fn spec() -> hound::WavSpec {
    hound::WavSpec { channels: 1, sample_rate: SAMPLE_RATE, bits_per_sample: 16, sample_format: hound::SampleFormat::Int }
}

/// Reads samples scaled to [-1, 1).
pub fn read(path: &Path) -> Result<Vec<f64>> {
    let reader = hound::WavReader::open(path)?;
    let s = reader.spec();
    if s.channels != 1 || s.sample_rate != SAMPLE_RATE || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(format_err(format!(
            "{}: need 16-bit PCM mono at {SAMPLE_RATE} Hz, got {} ch, {} Hz, {}-bit {:?}",
            path.display(),
            s.channels,
            s.sample_rate,
            s.bits_per_sample,
            s.sample_format
        )));
    }
    reader.into_samples::<i16>().map(|v| Ok(v? as f64 / 32768.0)).collect()
}

pub fn to_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes samples, clamping to [-1, 1).
pub fn write(path: &Path, samples: &[f64]) -> Result<()> {
    let mut w = hound::WavWriter::create(path, spec())?;
    for &x in samples {
        w.write_sample(to_i16(x))?;
    }
    w.finalize()?;
    Ok(())
}

/// Rounds through 16-bit PCM, as a write/read cycle would.
pub fn quantize(samples: &[f64]) -> Vec<f64> {
    samples.iter().map(|&x| to_i16(x) as f64 / 32768.0).collect()
}
