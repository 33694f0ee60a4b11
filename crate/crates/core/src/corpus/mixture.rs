//! Two-speaker mixtures with exact additivity. The target, scaled
//! interferer, and optional noise are each quantized to 16-bit levels
//! first and the mixture is their integer-domain sum, so mixture −
//! components == 0 holds bit-exactly even after a WAV round trip. A
//! shared headroom scale keeps every component at peak ≤ 0.3, which
//! bounds the three-way sum away from the PCM16 rails.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::render::{activity_mask, Span, UtteranceRecord, HOP};
use crate::corpus::wav::{dequantize, quantize};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Per-component peak after headroom scaling; 3 × 0.3 < 1 keeps the sum
/// clip-free.
const COMPONENT_PEAK: f64 = 0.3;
/// Noise power sits this far below the speech mixture.
const NOISE_SNR_DB: f64 = 10.0;
pub const SNR_MIN_DB: f64 = -5.0;
pub const SNR_MAX_DB: f64 = 5.0;

/// Per-frame voice activity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VadClass {
    /// No speech.
    Ns,
    /// Target speaker speech (alone or overlapped).
    Tss,
    /// Non-target speech only.
    Ntss,
}

impl VadClass {
    pub fn index(self) -> usize {
        match self {
            VadClass::Ns => 0,
            VadClass::Tss => 1,
            VadClass::Ntss => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(VadClass::Ns),
            1 => Ok(VadClass::Tss),
            2 => Ok(VadClass::Ntss),
            _ => Err(Error::contract(format!("invalid activity class {i}"))),
        }
    }
}

pub const N_VAD_CLASSES: usize = 3;

/// One training/eval item: mixture audio, its exact components, the
/// enrollment cue, and supervision for all three tasks.
#[derive(Debug, Clone)]
pub struct MixtureExample {
    pub mixture: Vec<f64>,
    pub target_clean: Vec<f64>,
    pub scaled_interferer: Vec<f64>,
    pub noise: Vec<f64>,
    pub enrollment: Vec<f64>,
    pub target_speaker: usize,
    pub interferer_speaker: usize,
    pub transcript: Vec<usize>,
    pub vad_labels: Vec<VadClass>,
    pub snr_db: f64,
    pub noise_flag: bool,
}

/// Frame labels from the two alignments: a frame is active for a source
/// if at least half of the frame's samples fall inside one of its spans.
/// Target activity wins over interferer activity.
pub fn derive_vad_labels(
    target_alignment: &[Span],
    interferer_alignment: &[Span],
    total_samples: usize,
    hop: usize,
) -> Vec<VadClass> {
    let target = activity_mask(target_alignment, total_samples);
    let interferer = activity_mask(interferer_alignment, total_samples);
    let frames = total_samples.div_ceil(hop);
    let mut labels = Vec::with_capacity(frames);
    for f in 0..frames {
        let lo = f * hop;
        let hi = (lo + hop).min(total_samples);
        let half = (hi - lo).div_ceil(2);
        let t_active = target[lo..hi].iter().filter(|&&b| b).count() >= half;
        let i_active = interferer[lo..hi].iter().filter(|&&b| b).count() >= half;
        labels.push(if t_active {
            VadClass::Tss
        } else if i_active {
            VadClass::Ntss
        } else {
            VadClass::Ns
        });
    }
    labels
}

fn mean_power_over(mask_a: &[bool], mask_b: &[bool], signal: &[f64]) -> (f64, usize) {
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..signal.len() {
        if mask_a[i] && mask_b[i] {
            acc += signal[i] * signal[i];
            n += 1;
        }
    }
    (if n > 0 { acc / n as f64 } else { 0.0 }, n)
}

fn padded(signal: &[f64], len: usize) -> Vec<f64> {
    let mut out = signal.to_vec();
    out.resize(len, 0.0);
    out
}

/// Mix one target utterance against one interferer utterance at the
/// requested SNR over their overlapping active region, optionally adding
/// seeded white noise 10 dB below the speech mixture.
pub fn make_mixture(
    target: &UtteranceRecord,
    interferer: &UtteranceRecord,
    enrollment: &UtteranceRecord,
    snr_db: f64,
    noise_flag: bool,
    example_seed: u64,
) -> Result<MixtureExample> {
    if enrollment.speaker_id != target.speaker_id {
        return Err(Error::contract(format!(
            "enrollment speaker {} does not match target speaker {}",
            enrollment.speaker_id, target.speaker_id
        )));
    }
    if enrollment.utt_index == target.utt_index {
        return Err(Error::contract(
            "enrollment must be a different utterance of the target speaker",
        ));
    }
    if interferer.speaker_id == target.speaker_id {
        return Err(Error::contract(format!(
            "interferer speaker {} equals target speaker",
            interferer.speaker_id
        )));
    }
    if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&snr_db) {
        return Err(Error::contract(format!(
            "snr {snr_db} dB outside [{SNR_MIN_DB}, {SNR_MAX_DB}]"
        )));
    }

    let len = target.waveform.len().max(interferer.waveform.len());
    let t = padded(&target.waveform, len);
    let i = padded(&interferer.waveform, len);

    // Interferer gain from powers over the region where both are active.
    let t_mask = activity_mask(&target.alignment, len);
    let i_mask = activity_mask(&interferer.alignment, len);
    let (p_t, overlap) = mean_power_over(&t_mask, &i_mask, &t);
    let (p_i, _) = mean_power_over(&t_mask, &i_mask, &i);
    let silent_interferer = p_i <= 1e-300;
    let gain = if silent_interferer {
        0.0
    } else {
        if overlap == 0 || p_t <= 1e-300 {
            return Err(Error::contract(
                "make_mixture: no overlapping active region to define SNR on",
            ));
        }
        (p_t / p_i * libm::pow(10.0, -snr_db / 10.0)).sqrt()
    };
    let gi: Vec<f64> = i.iter().map(|&v| v * gain).collect();

    let noise: Vec<f64> = if noise_flag {
        let premix_power =
            t.iter().zip(&gi).map(|(a, b)| (a + b) * (a + b)).sum::<f64>() / len as f64;
        let sigma = (premix_power / libm::pow(10.0, NOISE_SNR_DB / 10.0)).sqrt();
        let mut r = rng::stream(example_seed, &[tag::NOISE]);
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Numerical(format!("noise distribution: {e}")))?;
        (0..len).map(|_| normal.sample(&mut r)).collect()
    } else {
        vec![0.0; len]
    };

    // Shared headroom scale, then quantize each component; the mixture is
    // the integer sum, exact in both memory and files.
    let peak = t
        .iter()
        .chain(&gi)
        .chain(&noise)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(Error::Numerical(
            "make_mixture: all components silent".to_string(),
        ));
    }
    let rho = COMPONENT_PEAK / peak;
    let tq: Vec<i16> = t.iter().map(|&v| quantize(v * rho)).collect();
    let iq: Vec<i16> = gi.iter().map(|&v| quantize(v * rho)).collect();
    let nq: Vec<i16> = noise.iter().map(|&v| quantize(v * rho)).collect();
    let target_clean: Vec<f64> = tq.iter().map(|&v| dequantize(v)).collect();
    let scaled_interferer: Vec<f64> = iq.iter().map(|&v| dequantize(v)).collect();
    let noise_q: Vec<f64> = nq.iter().map(|&v| dequantize(v)).collect();
    let mixture: Vec<f64> = (0..len)
        .map(|k| {
            dequantize_sum(i32::from(tq[k]) + i32::from(iq[k]) + i32::from(nq[k]))
        })
        .collect();

    // The quantized signals must still realize the requested SNR.
    if !silent_interferer {
        let (pq_t, _) = mean_power_over(&t_mask, &i_mask, &target_clean);
        let (pq_i, _) = mean_power_over(&t_mask, &i_mask, &scaled_interferer);
        let realized = 10.0 * libm::log10(pq_t / pq_i);
        if (realized - snr_db).abs() > 0.1 {
            return Err(Error::Numerical(format!(
                "make_mixture: realized SNR {realized:.3} dB drifted from requested {snr_db:.3} dB"
            )));
        }
    }

    let vad_labels = derive_vad_labels(&target.alignment, &interferer.alignment, len, HOP);

    Ok(MixtureExample {
        mixture,
        target_clean,
        scaled_interferer,
        noise: noise_q,
        enrollment: enrollment.waveform.iter().map(|&v| dequantize(quantize(v))).collect(),
        target_speaker: target.speaker_id,
        interferer_speaker: interferer.speaker_id,
        transcript: target.script.tokens.clone(),
        vad_labels,
        snr_db,
        noise_flag,
    })
}

/// A sum of three 16-bit levels stays within i32; express it on the same
/// 1/32768 lattice the components use.
fn dequantize_sum(v: i32) -> f64 {
    f64::from(v) / 32768.0
}

/// Draw a uniform SNR in the supported range.
pub fn sample_snr_db<R: Rng>(r: &mut R) -> f64 {
    r.random_range(SNR_MIN_DB..=SNR_MAX_DB)
}
