//! Chip-level simulator for chaos-shift-keying over power-domain NOMA with a
//! neural demodulator inside a successive-interference-cancellation receiver.

pub mod adversary;
pub mod channel;
pub mod chaos;
pub mod demod;
pub mod error;
pub mod features;
pub mod link;
pub mod metrics;
pub mod nn;
pub mod noma;
pub mod sic;

pub use chaos::{Bit, ChaosMap, ChipSequence};
pub use error::{Error, Result};
