//! Minimal PCM16 mono RIFF/WAVE reader and writer. The corpus only ever
//! uses one format (16-bit little-endian mono), so a dedicated codec keeps
//! byte-level determinism trivial to audit.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 8000;
const QUANT: f64 = 32768.0;

/// Round to the nearest 16-bit level, saturating at the rails.
pub fn quantize(x: f64) -> i16 {
    let v = (x * QUANT).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// The exact value a quantized sample reads back as.
pub fn dequantize(v: i16) -> f64 {
    f64::from(v) / QUANT
}

/// Quantize a whole buffer to the values it will round-trip to on disk.
pub fn roundtrip(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| dequantize(quantize(v))).collect()
}

pub fn write_wav(path: &Path, samples: &[i16], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + samples.len() * 2);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes()); // PCM fmt chunk size
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&sample_rate.to_le_bytes());
    bytes.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io_path(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io_path(path, e))?;
    Ok(())
}

/// Write floats by quantizing to 16 bits.
pub fn write_wav_f64(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let ints: Vec<i16> = samples.iter().map(|&v| quantize(v)).collect();
    write_wav(path, &ints, sample_rate)
}

fn field<const N: usize>(bytes: &[u8], at: usize, path: &Path) -> Result<[u8; N]> {
    bytes
        .get(at..at + N)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::data_format(path, format!("truncated WAV header at byte {at}")))
}

/// Read a PCM16 mono file; anything else is rejected.
pub fn read_wav(path: &Path) -> Result<(Vec<i16>, u32)> {
    let bytes = fs::read(path).map_err(|e| Error::io_path(path, e))?;
    let bad = |detail: String| Error::data_format(path, detail);
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file".to_string()));
    }
    // Walk chunks: fmt must precede data; ignore anything else.
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id: [u8; 4] = field(&bytes, pos, path)?;
        let size = u32::from_le_bytes(field(&bytes, pos + 4, path)?) as usize;
        let body = pos + 8;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too small".to_string()));
                }
                let tag = u16::from_le_bytes(field(&bytes, body, path)?);
                let channels = u16::from_le_bytes(field(&bytes, body + 2, path)?);
                let rate = u32::from_le_bytes(field(&bytes, body + 4, path)?);
                let bits = u16::from_le_bytes(field(&bytes, body + 14, path)?);
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let (tag, channels, rate, bits) = fmt.ok_or_else(|| {
                    bad("data chunk before fmt chunk".to_string())
                })?;
                if tag != 1 || channels != 1 || bits != 16 {
                    return Err(bad(format!(
                        "expected PCM16 mono, got format tag {tag}, {channels} channel(s), {bits} bits"
                    )));
                }
                let data = bytes.get(body..body + size).ok_or_else(|| {
                    bad("data chunk overruns file".to_string())
                })?;
                if size % 2 != 0 {
                    return Err(bad("odd data chunk length".to_string()));
                }
                let samples = data
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                return Ok((samples, rate));
            }
            _ => {}
        }
        pos = body + size + (size % 2); // chunks are word-aligned
    }
    Err(bad("no data chunk".to_string()))
}

/// Read a PCM16 mono file as floats in [-1, 1).
pub fn read_wav_f64(path: &Path) -> Result<(Vec<f64>, u32)> {
    let (ints, rate) = read_wav(path)?;
    Ok((ints.iter().map(|&v| dequantize(v)).collect(), rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_samples_and_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<i16> = (-50..50).map(|v| (v * 137) as i16).collect();
        write_wav(&path, &samples, 8000).unwrap();
        let (back, rate) = read_wav(&path).unwrap();
        assert_eq!(back, samples);
        assert_eq!(rate, 8000);
    }

    #[test]
    fn float_roundtrip_error_is_below_one_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let samples: Vec<f64> = (0..200)
            .map(|i| 0.4 * (i as f64 * 0.37).sin())
            .collect();
        write_wav_f64(&path, &samples, 8000).unwrap();
        let (back, _) = read_wav_f64(&path).unwrap();
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn quantization_saturates_instead_of_wrapping() {
        assert_eq!(quantize(2.0), 32767);
        assert_eq!(quantize(-2.0), -32768);
        assert_eq!(quantize(0.0), 0);
    }

    #[test]
    fn identical_content_produces_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.wav");
        let b = dir.path().join("b.wav");
        let samples: Vec<f64> = (0..64).map(|i| (i as f64 * 0.1).cos() * 0.3).collect();
        write_wav_f64(&a, &samples, 8000).unwrap();
        write_wav_f64(&b, &samples, 8000).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn stereo_or_nonpcm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        write_wav(&path, &[0, 1, 2, 3], 8000).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[22] = 2; // channel count
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_wav(&path).is_err());
    }
}
