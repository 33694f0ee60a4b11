//! Short-time spectral analysis and resynthesis.
//!
//! Both directions use the same square-root Hann window, so analysis
//! followed by windowed overlap-add and division by the accumulated
//! window-square envelope reconstructs the interior of the signal to
//! round-off accuracy at any hop that keeps the envelope positive.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Analysis window length in samples (25 ms at 8 kHz).
pub const WINDOW: usize = 200;
/// Hop between adjacent frames in samples (10 ms at 8 kHz).
pub const HOP: usize = 80;
/// FFT length; windowed frames are zero-padded from [`WINDOW`] to this size.
pub const FFT_SIZE: usize = 256;
/// One-sided spectrum size per frame (DC through Nyquist).
pub const F_BINS: usize = FFT_SIZE / 2 + 1;

/// Complex one-sided spectrogram, row-major `t_frames x F_BINS`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub data: Vec<Complex<f64>>,
    pub t_frames: usize,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[Complex<f64>] {
        &self.data[t * F_BINS..(t + 1) * F_BINS]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex<f64>] {
        &mut self.data[t * F_BINS..(t + 1) * F_BINS]
    }
}

/// Number of analysis frames for a waveform of `len` samples:
/// `1 + floor((len - WINDOW) / HOP)`.
pub fn n_frames(len: usize) -> Result<usize> {
    if len < WINDOW {
        return Err(Error::shape(
            "stft",
            format!("waveform has {len} samples but the analysis window needs {WINDOW}"),
        ));
    }
    Ok(1 + (len - WINDOW) / HOP)
}

/// Square-root Hann (sine) window of length [`WINDOW`].
pub(crate) fn sqrt_hann() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    for (n, v) in w.iter_mut().enumerate() {
        let hann =
            0.5 * (1.0 - libm::cos(2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64));
        *v = libm::sqrt(hann);
    }
    w
}

/// One-sided STFT of `wave` with a √Hann window.
pub fn stft(wave: &[f64]) -> Result<Spectrogram> {
    let t_frames = n_frames(wave.len())?;
    let window = sqrt_hann();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(FFT_SIZE);
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let mut data = Vec::with_capacity(t_frames * F_BINS);
    for t in 0..t_frames {
        let start = t * HOP;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = if n < WINDOW {
                Complex::new(wave[start + n] * window[n], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..F_BINS]);
    }
    Ok(Spectrogram { data, t_frames })
}

/// Inverse STFT via windowed overlap-add, normalised by the accumulated
/// window-square envelope.  The output covers `(t_frames - 1) * HOP + WINDOW`
/// samples; edge samples where the envelope has not yet summed to full
/// weight are attenuated relative to the original signal, interior samples
/// are reconstructed to round-off accuracy.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    if spec.t_frames == 0 || spec.data.len() != spec.t_frames * F_BINS {
        return Err(Error::shape(
            "istft",
            format!(
                "spectrogram holds {} values for {} frames of {} bins",
                spec.data.len(),
                spec.t_frames,
                F_BINS
            ),
        ));
    }
    let window = sqrt_hann();
    let len = (spec.t_frames - 1) * HOP + WINDOW;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(FFT_SIZE);
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let mut out = vec![0.0; len];
    let mut env = vec![0.0; len];
    for t in 0..spec.t_frames {
        let frame = spec.frame(t);
        buf[..F_BINS].copy_from_slice(frame);
        for k in F_BINS..FFT_SIZE {
            buf[k] = frame[FFT_SIZE - k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * HOP;
        for n in 0..WINDOW {
            out[start + n] += buf[n].re / FFT_SIZE as f64 * window[n];
            env[start + n] += window[n] * window[n];
        }
    }
    for (o, e) in out.iter_mut().zip(&env) {
        if *e > 1e-8 {
            *o /= *e;
        }
    }
    Ok(out)
}
