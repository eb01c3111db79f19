//! Monte Carlo sweeps over the SNR grid.
//!
//! Trial `t` at every SNR point (and every CSI correlation) draws from the
//! same per-trial streams, so points differ only in noise scale and CSI
//! quality. Trials are processed in fixed chunks; error counts are integers
//! summed in chunk order, so results do not depend on the thread count.

use anyhow::{bail, Result};
use noma_csk::adversary::{eve_train_and_score, EveConfig, Intercepts};
use noma_csk::chaos::Bit;
use noma_csk::demod::DemodulatorModel;
use noma_csk::link::{self, LinkConfig, TrialRngs};
use noma_csk::metrics::{BerRecord, SecurityReport};
use noma_csk::noma::PowerAllocation;
use noma_csk::sic::{sic_receive_batch, SicInput};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;

pub const BER_DOMAIN: u16 = 0xbe;
pub const SECURITY_DOMAIN: u16 = 0x5ec;
const CHUNK: u64 = 512;

/// Error counts of one SNR point under one CSI correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRecord {
    pub rho: f64,
    pub record: BerRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityPoint {
    pub snr_db: f64,
    pub legit: Vec<BerRecord>,
    pub report: SecurityReport,
}

fn check_model(cfg: &ExperimentConfig, model: &DemodulatorModel) -> Result<()> {
    if model.beta() != cfg.beta {
        bail!("model was trained for β = {}, config uses β = {}", model.beta(), cfg.beta);
    }
    Ok(())
}

fn chunks(total: u64) -> Vec<(u64, u64)> {
    (0..total.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(total)))
        .collect()
}

struct Trial {
    bits: Vec<Bit>,
    received: Vec<num_complex::Complex64>,
    channels: Vec<noma_csk::channel::ChannelRealization>,
    rngs: TrialRngs,
}

fn draw_trial(link_cfg: &LinkConfig, snr_db: f64, mut rngs: TrialRngs) -> Result<Trial> {
    let tx = link::transmit(link_cfg, &mut rngs.tx)?;
    let channels = link_cfg.draw_channels(&mut rngs.channel)?;
    let received = link::receive(link_cfg, &tx, &channels, snr_db, &mut rngs.noise)?;
    Ok(Trial {
        bits: tx.bits,
        received,
        channels,
        rngs,
    })
}

/// Decodes a batch of trials; returns per-vehicle error counts.
fn decode(trials: &mut [Trial], alloc: &PowerAllocation, rho: f64, model: &DemodulatorModel) -> Result<Vec<u64>> {
    let mut inputs: Vec<SicInput<'_, ChaCha8Rng>> = trials
        .iter_mut()
        .map(|t| SicInput {
            received: &t.received,
            channels: &t.channels,
            rng: &mut t.rngs.sic,
        })
        .collect();
    let decided = sic_receive_batch(&mut inputs, alloc, rho, model, false)?;
    let mut errors = vec![0u64; alloc.n_vehicles()];
    for ((bits, _), t) in decided.iter().zip(trials.iter()) {
        for (e, (a, b)) in errors.iter_mut().zip(bits.iter().zip(&t.bits)) {
            *e += u64::from(a != b);
        }
    }
    Ok(errors)
}

fn ber_point(cfg: &ExperimentConfig, model: &DemodulatorModel, snr_db: f64, rho: f64) -> Result<Vec<BerRecord>> {
    let link_cfg = cfg.link()?;
    let alloc = link_cfg.allocation();
    let per_chunk = chunks(cfg.bits_per_point)
        .into_par_iter()
        .map(|(lo, hi)| -> Result<Vec<u64>> {
            let mut trials = (lo..hi)
                .map(|t| draw_trial(&link_cfg, snr_db, TrialRngs::for_trial(cfg.master_seed, BER_DOMAIN, t)))
                .collect::<Result<Vec<_>>>()?;
            decode(&mut trials, &alloc, rho, model)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut errors = vec![0u64; cfg.n_vehicles];
    for c in per_chunk {
        for (e, v) in errors.iter_mut().zip(c) {
            *e += v;
        }
    }
    Ok(errors
        .into_iter()
        .enumerate()
        .map(|(v, e)| BerRecord {
            snr_db,
            vehicle: v + 1,
            bits: cfg.bits_per_point,
            errors: e,
        })
        .collect())
}

/// One record per (SNR point, vehicle) with the configured CSI correlation.
pub fn run_ber_sweep(cfg: &ExperimentConfig, model: &DemodulatorModel) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    check_model(cfg, model)?;
    let mut out = Vec::new();
    for &snr in &cfg.snr_db {
        out.extend(ber_point(cfg, model, snr, cfg.csi_rho)?);
    }
    Ok(out)
}

/// The BER sweep repeated for every CSI correlation in `rhos`.
pub fn run_robustness_sweep(
    cfg: &ExperimentConfig,
    model: &DemodulatorModel,
    rhos: &[f64],
) -> Result<Vec<RobustnessRecord>> {
    cfg.validate()?;
    check_model(cfg, model)?;
    if rhos.is_empty() || rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
        bail!("rho values must be a nonempty list within [0, 1]");
    }
    let mut out = Vec::new();
    for &rho in rhos {
        for &snr in &cfg.snr_db {
            out.extend(
                ber_point(cfg, model, snr, rho)?
                    .into_iter()
                    .map(|record| RobustnessRecord { rho, record }),
            );
        }
    }
    Ok(out)
}

/// Legitimate and adversary error rates per SNR point. At each point the
/// adversary intercepts every trial through its own channel draws and
/// noise, trains a fresh demodulator on them and decodes them.
pub fn run_security_eval(
    cfg: &ExperimentConfig,
    model: &DemodulatorModel,
    eve: &EveConfig,
) -> Result<Vec<SecurityPoint>> {
    cfg.validate()?;
    check_model(cfg, model)?;
    let link_cfg = cfg.link()?;
    let alloc = link_cfg.allocation();
    let mut out = Vec::new();
    for (p, &snr_db) in cfg.snr_db.iter().enumerate() {
        let per_chunk = chunks(cfg.bits_per_point)
            .into_par_iter()
            .map(|(lo, hi)| -> Result<(Vec<u64>, Vec<Trial>)> {
                let mut trials = Vec::with_capacity((hi - lo) as usize);
                let mut eve_trials = Vec::with_capacity((hi - lo) as usize);
                for t in lo..hi {
                    let mut rngs = TrialRngs::for_trial(cfg.master_seed, SECURITY_DOMAIN, t);
                    let tx = link::transmit(&link_cfg, &mut rngs.tx)?;
                    let channels = link_cfg.draw_channels(&mut rngs.channel)?;
                    let received = link::receive(&link_cfg, &tx, &channels, snr_db, &mut rngs.noise)?;
                    let eve_channels = link_cfg.draw_channels(&mut rngs.eve)?;
                    let eve_received = link::receive(&link_cfg, &tx, &eve_channels, snr_db, &mut rngs.eve)?;
                    let eve_rngs = TrialRngs::from_parent(&mut rngs.eve);
                    eve_trials.push(Trial {
                        bits: tx.bits.clone(),
                        received: eve_received,
                        channels: eve_channels,
                        rngs: eve_rngs,
                    });
                    trials.push(Trial {
                        bits: tx.bits,
                        received,
                        channels,
                        rngs,
                    });
                }
                Ok((decode(&mut trials, &alloc, cfg.csi_rho, model)?, eve_trials))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut errors = vec![0u64; cfg.n_vehicles];
        let mut intercepts = Intercepts::default();
        let mut truth = Vec::new();
        let mut eve_rngs = Vec::new();
        for (e, eve_trials) in per_chunk {
            for (acc, v) in errors.iter_mut().zip(e) {
                *acc += v;
            }
            for t in eve_trials {
                intercepts.push(t.received, t.channels);
                truth.push(t.bits);
                eve_rngs.push(t.rngs.sic);
            }
        }
        let eve_cfg = EveConfig {
            seed: eve.seed ^ (p as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            ..eve.clone()
        };
        let eve_ber = eve_train_and_score(&eve_cfg, &intercepts, &truth, &alloc, &mut eve_rngs)?;
        let legit: Vec<BerRecord> = errors
            .into_iter()
            .enumerate()
            .map(|(v, e)| BerRecord {
                snr_db,
                vehicle: v + 1,
                bits: cfg.bits_per_point,
                errors: e,
            })
            .collect();
        let report = SecurityReport::new(legit.iter().map(BerRecord::ber).collect(), eve_ber)?;
        out.push(SecurityPoint { snr_db, legit, report });
    }
    Ok(out)
}
