//! Minimal neural-network engine: the exact layer set the demodulator uses,
//! with hand-written backward passes, Adam, and a plateau scheduler.

pub mod layers;
pub mod optim;
pub mod tensor;

pub use layers::Mode;
pub use optim::{plateau_schedule, Adam, PlateauScheduler};
pub use tensor::{read_tensors, write_tensors, ParamSet, Tensor};
