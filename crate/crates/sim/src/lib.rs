//! Experiment harness: configuration, Monte Carlo sweeps and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::ExperimentConfig;
pub use experiments::{run_ber_sweep, run_robustness_sweep, run_security_eval, RobustnessRecord, SecurityPoint};
pub use noma_csk::link::seed_stream;
