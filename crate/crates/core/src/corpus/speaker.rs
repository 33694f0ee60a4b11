//! Parametric synthetic speakers. A speaker is a fundamental frequency on
//! a jittered grid, a private weighting over the first eight harmonics,
//! and a spectral tilt; token identity is carried separately by fixed
//! binary harmonic masks so that content stays recognizable across
//! speakers while voices stay separable in spectrum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Number of harmonics in every voice model.
pub const N_HARMONICS: usize = 8;
/// Token alphabet size.
pub const N_TOKENS: usize = 10;

/// Which harmonics each token symbol excites. Fixed for every corpus so a
/// token sounds "the same word" regardless of seed or speaker; all rows are
/// pairwise distinct and every row keeps at least two harmonics.
pub const TOKEN_HARMONIC_MASKS: [[u8; N_HARMONICS]; N_TOKENS] = [
    [1, 1, 0, 0, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 1, 0, 0],
    [0, 0, 0, 0, 0, 0, 1, 1],
    [1, 0, 1, 0, 1, 0, 0, 0],
    [0, 1, 0, 1, 0, 1, 0, 0],
    [1, 0, 0, 1, 0, 0, 1, 0],
    [0, 1, 1, 0, 0, 1, 0, 1],
    [1, 1, 0, 0, 1, 1, 0, 0],
    [0, 0, 1, 1, 0, 0, 1, 1],
];

const F0_MIN: f64 = 90.0;
const F0_MAX: f64 = 300.0;
/// Grid cells across the f0 range; up to this many speakers are guaranteed
/// pairwise ≥ 2 Hz apart.
const F0_CELLS: usize = 64;
/// Uniform jitter half-width in Hz. Cell step is 210/64 ≈ 3.28 Hz, so two
/// adjacent jittered centers stay at least 3.28 − 2·0.6 ≈ 2.08 Hz apart.
const F0_JITTER: f64 = 0.6;

const TILT_MIN: f64 = -12.0;
const TILT_MAX: f64 = 0.0;

/// A synthetic voice, deterministic from (corpus_seed, speaker_id).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: usize,
    /// Fundamental frequency in Hz, within [90, 300].
    pub f0: f64,
    /// Nonnegative weights over the first eight harmonics, summing to one.
    pub harmonic_weights: [f64; N_HARMONICS],
    /// Spectral tilt in dB per octave, within [-12, 0].
    pub spectral_tilt: f64,
    /// Seed of the stream the profile was drawn from.
    pub rng_seed: u64,
}

/// Draw the profile for one speaker id. Ids map onto f0 grid cells so any
/// roster of up to 64 is pairwise separated in pitch; beyond that, cells
/// repeat but the continuous fields still differ.
pub fn sample_speaker(corpus_seed: u64, speaker_id: usize) -> SpeakerProfile {
    let seed = rng::derive_seed(corpus_seed, &[tag::SPEAKER, speaker_id as u64]);
    let mut r = rng::stream(corpus_seed, &[tag::SPEAKER, speaker_id as u64]);
    let cell = speaker_id % F0_CELLS;
    let step = (F0_MAX - F0_MIN) / F0_CELLS as f64;
    let center = F0_MIN + (cell as f64 + 0.5) * step;
    let f0 = center + r.random_range(-F0_JITTER..=F0_JITTER);
    let mut weights = [0.0; N_HARMONICS];
    let mut sum = 0.0;
    for w in &mut weights {
        // Floor at 0.2 before normalization so no harmonic is ever
        // practically absent from a voice; token masks do the gating.
        *w = r.random_range(0.2..1.0);
        sum += *w;
    }
    for w in &mut weights {
        *w /= sum;
    }
    let spectral_tilt = r.random_range(TILT_MIN..=TILT_MAX);
    SpeakerProfile {
        speaker_id,
        f0,
        harmonic_weights: weights,
        spectral_tilt,
        rng_seed: seed,
    }
}

/// Per-harmonic linear gains of `tilt` dB/octave (harmonic h sits
/// log2(h) octaves above the fundamental).
pub fn tilt_gains(tilt_db_per_octave: f64) -> [f64; N_HARMONICS] {
    let mut gains = [0.0; N_HARMONICS];
    for (i, g) in gains.iter_mut().enumerate() {
        let octaves = libm::log2((i + 1) as f64);
        *g = libm::pow(10.0, tilt_db_per_octave * octaves / 20.0);
    }
    gains
}

/// Reject profiles that violate the documented ranges; used when loading
/// rosters back from disk.
pub fn validate_profile(p: &SpeakerProfile) -> Result<()> {
    if !(F0_MIN..=F0_MAX).contains(&p.f0) {
        return Err(Error::contract(format!(
            "speaker {}: f0 {} outside [{F0_MIN}, {F0_MAX}] Hz",
            p.speaker_id, p.f0
        )));
    }
    if !(TILT_MIN..=TILT_MAX).contains(&p.spectral_tilt) {
        return Err(Error::contract(format!(
            "speaker {}: tilt {} outside [{TILT_MIN}, {TILT_MAX}] dB/oct",
            p.speaker_id, p.spectral_tilt
        )));
    }
    let sum: f64 = p.harmonic_weights.iter().sum();
    if p.harmonic_weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "speaker {}: harmonic weights must be nonnegative and sum to 1 (sum {sum})",
            p.speaker_id
        )));
    }
    Ok(())
}
