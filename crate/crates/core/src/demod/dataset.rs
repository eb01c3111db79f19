use rand::Rng;
use rayon::prelude::*;

use crate::chaos::Bit;
use crate::error::{Error, Result};
use crate::features::{build_feature, FeatureTensor};
use crate::link::{self, LinkConfig, TrialRngs};
use crate::sic::reconstruct;

/// Training snapshot of one SIC stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub feature: FeatureTensor,
    pub label: Bit,
    /// 1-based stage index.
    pub sic_stage: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub link: LinkConfig,
    pub n_samples: usize,
    /// Eb/N0 drawn uniformly from this closed range (dB).
    pub snr_range_db: (f64, f64),
}

impl DatasetConfig {
    pub fn new(link: LinkConfig, n_samples: usize) -> Self {
        Self {
            link,
            n_samples,
            snr_range_db: (24.0, 28.0),
        }
    }
}

const DATASET_DOMAIN: u16 = 0x0d5e;

/// One sample: a full transmission, teacher-forced cancellation of the
/// stronger vehicles with their true bits, and the feature at a uniformly
/// drawn stage labeled with that vehicle's bit.
fn sample(cfg: &DatasetConfig, rngs: &mut TrialRngs) -> Result<TrainingSample> {
    let link_cfg = &cfg.link;
    let (lo, hi) = cfg.snr_range_db;
    let snr_db = if lo == hi { lo } else { rngs.noise.random_range(lo..=hi) };
    let tx = link::transmit(link_cfg, &mut rngs.tx)?;
    let channels = link_cfg.draw_channels(&mut rngs.channel)?;
    let mut r = link::receive(link_cfg, &tx, &channels, snr_db, &mut rngs.noise)?;
    let stage = rngs.sic.random_range(0..link_cfg.n_vehicles);
    let alloc = link_cfg.allocation();
    for j in 0..stage {
        let (c, _) = reconstruct(tx.bits[j], alloc.amplitude(j), &channels[j], link_cfg.beta, &mut rngs.sic)?;
        for (a, b) in r.iter_mut().zip(&c) {
            *a -= b;
        }
    }
    let feature = build_feature(&r, channels[stage].dominant_tap(0.0, link_cfg.beta))?;
    Ok(TrainingSample {
        feature,
        label: tx.bits[stage],
        sic_stage: stage + 1,
        snr_db,
    })
}

/// Builds `n_samples` samples, sample `i` drawn from its own stream of
/// `seed`, so the result does not depend on the thread count.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Vec<TrainingSample>> {
    let (lo, hi) = cfg.snr_range_db;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::arg("snr_range_db", format!("invalid range [{lo}, {hi}]")));
    }
    (0..cfg.n_samples)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| sample(cfg, &mut TrialRngs::for_trial(seed, DATASET_DOMAIN, i as u64)))
        .collect()
}
