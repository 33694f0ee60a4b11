//! Synthetic two-speaker corpus: parametric voices, token utterances with
//! exact alignments, SNR-controlled mixtures with optional noise, frame
//! activity labels, and speaker-open / speaker-closed splits — all
//! byte-reproducible from one seed.

pub mod dataset;
pub mod mixture;
pub mod render;
pub mod script;
pub mod speaker;
pub mod wav;

pub use dataset::{
    build_dataset, load_example, load_manifest, referenced_utterances, Condition, CorpusConfig,
    DatasetManifest, LoadedExample, ManifestExample, RosterEntry, Split,
};
pub use mixture::{
    derive_vad_labels, make_mixture, MixtureExample, VadClass, N_VAD_CLASSES, SNR_MAX_DB,
    SNR_MIN_DB,
};
pub use render::{activity_mask, render_utterance, Span, UtteranceRecord, HOP};
pub use script::{sample_script, TokenScript, MAX_SCRIPT_LEN, MIN_SCRIPT_LEN, TOKEN_SAMPLES};
pub use speaker::{
    sample_speaker, tilt_gains, validate_profile, SpeakerProfile, N_HARMONICS, N_TOKENS,
    TOKEN_HARMONIC_MASKS,
};
pub use wav::{read_wav, read_wav_f64, write_wav, write_wav_f64, SAMPLE_RATE};
