//! Trainable model components: shared building blocks, the speaker-conditioned
//! recognition, extraction, and voice-activity heads.

pub mod common;
pub mod lstm;
pub mod pvad;
pub mod tsasr;
pub mod tse;

pub use common::{condition, glu, sinusoidal_pe, swish, Linear};
pub use lstm::{Blstm, LstmDirection};
pub use pvad::{PVadModel, PvadConditionSite, PVAD_HIDDEN};
pub use tsasr::{AsrConditionSite, ConformerConfig, TsAsrModel};
pub use tse::{
    TseConditionSite, TseForward, TseModel, TSE_CHANNELS, TSE_HIDDEN, TSE_KERNEL, TSE_STRIDE,
};
