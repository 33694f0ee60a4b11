//! Signal frontend: STFT/iSTFT, log mel-filterbank features, and the frozen
//! toy upstream encoder with its trainable layer-weighted sum.

mod fbank;
mod stft;
mod upstream;

pub use fbank::{fbank, LOG_FLOOR, N_MEL};
pub use stft::{istft, n_frames, stft, Spectrogram, FFT_SIZE, F_BINS, HOP, WINDOW};
pub use upstream::{weighted_layer_sum, LayerFeatureStack, ToyUpstream, D_UP, N_LAYERS};
