//! Losses and evaluation metrics: alignment-marginalized sequence loss,
//! scale-invariant distortion ratio, token error rate, mean average
//! precision, equal error rate, and per-frame cross entropy.

pub mod ce;
pub mod ctc;
pub mod eer;
pub mod map;
pub mod sisdr;
pub mod wer;

pub use ce::{frame_cross_entropy, frame_cross_entropy_loss, one_hot_rows};
pub use ctc::{ctc_loss_brute_force, ctc_loss_grad, ctc_loss_value, greedy_decode, min_frames};
pub use eer::equal_error_rate;
pub use map::{average_precision, mean_average_precision};
pub use sisdr::{si_sdr_db, si_sdr_improvement_db, si_sdr_loss};
pub use wer::{edit_distance, token_error_rate, ErrorRateAccumulator};
