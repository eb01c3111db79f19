//! Experiment configuration, read from TOML.
//!
//! ```toml
//! n_vehicles = 4
//! beta = 64
//! scenario = "rayleigh"        # awgn | rayleigh | v2i_primary | v2i_auxiliary
//! snr_db = [0.0, 8.0, 16.0, 24.0]
//! csi_rho = 1.0
//! bits_per_point = 100000
//! master_seed = 1
//! rho_grid = [1.0, 0.95, 0.85]
//!
//! [model]                      # demodulator architecture
//! filters = 32
//! kernel_size = 3
//! heads = 8
//! head_dim = 64
//! fc_hidden = 64
//!
//! [training]
//! samples = 100000
//! snr_range_db = [24.0, 28.0]
//! epochs = 20
//! batch_size = 64
//! learning_rate = 0.001
//! validation_fraction = 0.1
//! init_seed = 0
//!
//! [eve]
//! intercept_count = 4096
//! labels = "bootstrap"         # bootstrap | shuffled_bootstrap | ground_truth
//! epochs = 5
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use noma_csk::adversary::{EveConfig, LabelSource};
use noma_csk::demod::{DatasetConfig, Hyperparams, TrainConfig};
use noma_csk::link::{LinkConfig, LinkScenario};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub samples: usize,
    pub snr_range_db: [f64; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub init_seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            samples: 100_000,
            snr_range_db: [24.0, 28.0],
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            validation_fraction: t.validation_fraction,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EveSection {
    pub intercept_count: usize,
    pub labels: LabelSource,
    pub epochs: usize,
}

impl Default for EveSection {
    fn default() -> Self {
        let e = EveConfig::default();
        Self {
            intercept_count: e.intercept_count,
            labels: e.labels,
            epochs: e.train.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_vehicles: usize,
    pub beta: usize,
    pub scenario: LinkScenario,
    pub snr_db: Vec<f64>,
    pub csi_rho: f64,
    pub bits_per_point: u64,
    pub master_seed: u64,
    pub rho_grid: Vec<f64>,
    pub model: Hyperparams,
    pub training: TrainingSection,
    pub eve: EveSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 4,
            beta: 64,
            scenario: LinkScenario::Rayleigh,
            snr_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
            csi_rho: 1.0,
            bits_per_point: 100_000,
            master_seed: 1,
            rho_grid: vec![1.0, 0.95, 0.85],
            model: Hyperparams::default(),
            training: TrainingSection::default(),
            eve: EveSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.beta < 8 {
            bail!("beta must be at least 8, got {}", self.beta);
        }
        if self.snr_db.is_empty() {
            bail!("snr_db grid is empty");
        }
        if self.snr_db.iter().any(|v| !v.is_finite()) || self.snr_db.windows(2).any(|w| w[0] > w[1]) {
            bail!("snr_db grid must be finite and sorted ascending");
        }
        if self.bits_per_point < 1000 {
            bail!("bits_per_point must be at least 1000, got {}", self.bits_per_point);
        }
        if !(0.0..=1.0).contains(&self.csi_rho) || self.rho_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
            bail!("CSI correlation values must lie in [0, 1]");
        }
        let [lo, hi] = self.training.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            bail!("training snr_range_db must be an ordered pair");
        }
        self.link()?;
        Ok(())
    }

    pub fn link(&self) -> anyhow::Result<LinkConfig> {
        Ok(LinkConfig::new(self.n_vehicles, self.beta, self.scenario)?)
    }

    pub fn dataset(&self) -> anyhow::Result<DatasetConfig> {
        let [lo, hi] = self.training.snr_range_db;
        Ok(DatasetConfig {
            link: self.link()?,
            n_samples: self.training.samples,
            snr_range_db: (lo, hi),
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            validation_fraction: self.training.validation_fraction,
            shuffle_seed: self.master_seed,
        }
    }

    pub fn eve_config(&self) -> EveConfig {
        EveConfig {
            intercept_count: self.eve.intercept_count,
            labels: self.eve.labels,
            hyperparams: self.model,
            train: TrainConfig {
                epochs: self.eve.epochs,
                ..self.train_config()
            },
            seed: self.master_seed ^ 0xe7e,
            ..EveConfig::default()
        }
    }
}
