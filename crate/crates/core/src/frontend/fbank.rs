//! Log mel-filterbank features.

use super::stft::{stft, F_BINS, FFT_SIZE};
use crate::corpus::SAMPLE_RATE;
use crate::error::Result;
use crate::tensor::Tensor;

/// Number of mel filters / feature dimensions per frame.
pub const N_MEL: usize = 24;
/// Filterbank energies are floored here before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;
/// Upper edge of the filterbank (the Nyquist frequency).
const F_MAX_HZ: f64 = SAMPLE_RATE as f64 / 2.0;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * libm::log10(1.0 + f / 700.0)
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

/// Triangular filters over fractional FFT-bin positions, `N_MEL x F_BINS`.
/// Filter edges are spaced uniformly on the mel scale from 0 Hz to Nyquist.
fn mel_filterbank() -> Vec<[f64; F_BINS]> {
    let mel_max = hz_to_mel(F_MAX_HZ);
    let mut edges = [0.0; N_MEL + 2];
    for (j, e) in edges.iter_mut().enumerate() {
        let hz = mel_to_hz(mel_max * j as f64 / (N_MEL + 1) as f64);
        *e = hz * FFT_SIZE as f64 / SAMPLE_RATE as f64;
    }
    let mut filters = vec![[0.0; F_BINS]; N_MEL];
    for (m, filter) in filters.iter_mut().enumerate() {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, w) in filter.iter_mut().enumerate() {
            let kf = k as f64;
            let tri = if kf <= mid {
                (kf - lo) / (mid - lo)
            } else {
                (hi - kf) / (hi - mid)
            };
            if tri > 0.0 {
                *w = tri;
            }
        }
    }
    filters
}

/// Log mel-filterbank features of `wave`, shaped `[T, N_MEL]` with
/// `T = 1 + floor((len - 200) / 80)`.
pub fn fbank(wave: &[f64]) -> Result<Tensor> {
    let spec = stft(wave)?;
    let filters = mel_filterbank();
    let mut data = Vec::with_capacity(spec.t_frames * N_MEL);
    let mut power = [0.0; F_BINS];
    for t in 0..spec.t_frames {
        for (p, c) in power.iter_mut().zip(spec.frame(t)) {
            *p = c.norm_sqr();
        }
        for filter in &filters {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            data.push(libm::log(energy.max(LOG_FLOOR)));
        }
    }
    Tensor::new(vec![spec.t_frames, N_MEL], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn every_filter_has_weight_and_filters_tile_the_band() {
        let filters = mel_filterbank();
        for (m, f) in filters.iter().enumerate() {
            let total: f64 = f.iter().sum();
            assert!(total > 0.0, "filter {m} collects no bins");
        }
        // Interior bins are covered by at least one filter.
        for k in 2..F_BINS - 1 {
            let covered = filters.iter().any(|f| f[k] > 0.0);
            assert!(covered, "bin {k} uncovered");
        }
    }

    #[test]
    fn frame_count_matches_the_framing_formula() {
        let feats = fbank(&noise(1000, 3)).unwrap();
        assert_eq!(feats.shape(), &[11, N_MEL]);
        let feats = fbank(&noise(200, 4)).unwrap();
        assert_eq!(feats.shape(), &[1, N_MEL]);
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let feats = fbank(&vec![0.0; 360]).unwrap();
        let floor = libm::log(LOG_FLOOR);
        assert!(feats.data().iter().all(|&v| v == floor));
    }

    #[test]
    fn doubling_amplitude_adds_log_four() {
        let wave = noise(760, 11);
        let doubled: Vec<f64> = wave.iter().map(|v| 2.0 * v).collect();
        let a = fbank(&wave).unwrap();
        let b = fbank(&doubled).unwrap();
        let ln4 = libm::log(4.0);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((y - x - ln4).abs() < 1e-9, "shift {} != ln 4", y - x);
        }
    }

    #[test]
    fn one_hop_delay_shifts_frames_by_one() {
        let wave = noise(680, 21);
        let mut delayed = vec![0.0; 80];
        delayed.extend_from_slice(&wave);
        let base = fbank(&wave).unwrap();
        let shifted = fbank(&delayed).unwrap();
        assert_eq!(shifted.shape()[0], base.shape()[0] + 1);
        for t in 0..base.shape()[0] {
            assert_eq!(base.row(t), shifted.row(t + 1), "frame {t} not equivariant");
        }
    }
}
