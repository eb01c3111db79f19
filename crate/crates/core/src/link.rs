//! End-to-end link for one bit interval: transmit, fade, superpose, add noise.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelProfile, ChannelRealization, Scenario};
use crate::chaos::{draw_standardized, Bit, ChipSequence};
use crate::error::{Error, Result};
use crate::noma::{superpose, PowerAllocation};

/// Which channel family every vehicle sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkScenario {
    Awgn,
    /// Tabulated per-vehicle Rayleigh profiles; vehicle `i` uses profile `i`.
    Rayleigh,
    V2iPrimary,
    V2iAuxiliary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub n_vehicles: usize,
    pub beta: usize,
    pub scenario: LinkScenario,
    pub reference_power: f64,
    profiles: Vec<Option<ChannelProfile>>,
}

impl LinkConfig {
    pub fn new(n_vehicles: usize, beta: usize, scenario: LinkScenario) -> Result<Self> {
        Self::with_power(n_vehicles, beta, scenario, 1.0)
    }

    pub fn with_power(
        n_vehicles: usize,
        beta: usize,
        scenario: LinkScenario,
        reference_power: f64,
    ) -> Result<Self> {
        PowerAllocation::new(n_vehicles, reference_power)?;
        if beta < 2 {
            return Err(Error::arg("beta", "need at least two chips per bit"));
        }
        let profiles = (1..=n_vehicles)
            .map(|v| -> Result<Option<ChannelProfile>> {
                Ok(match scenario {
                    LinkScenario::Awgn => None,
                    LinkScenario::Rayleigh => Some(ChannelProfile::rayleigh_vehicle(v)?),
                    LinkScenario::V2iPrimary => Some(ChannelProfile::v2i(Scenario::V2iPrimary)?),
                    LinkScenario::V2iAuxiliary => Some(ChannelProfile::v2i(Scenario::V2iAuxiliary)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for p in profiles.iter().flatten() {
            if let channel::DelayProfile::Explicit(d) = &p.delays {
                if d.iter().any(|&d| d >= beta) {
                    return Err(Error::arg("beta", format!("β = {beta} shorter than the channel delay spread")));
                }
            }
        }
        Ok(Self {
            n_vehicles,
            beta,
            scenario,
            reference_power,
            profiles,
        })
    }

    pub fn allocation(&self) -> PowerAllocation {
        PowerAllocation::new(self.n_vehicles, self.reference_power).expect("validated at construction")
    }

    /// Energy per information bit of the composite signal, `P·β/N`.
    pub fn energy_per_bit(&self) -> f64 {
        self.reference_power * self.beta as f64 / self.n_vehicles as f64
    }

    /// Complex noise variance per chip at the given Eb/N0.
    pub fn n0(&self, ebn0_db: f64) -> f64 {
        self.energy_per_bit() / 10f64.powf(ebn0_db / 10.0)
    }

    pub fn profile(&self, vehicle: usize) -> Option<&ChannelProfile> {
        self.profiles[vehicle].as_ref()
    }

    pub fn draw_channel<R: Rng + ?Sized>(&self, vehicle: usize, rng: &mut R) -> Result<ChannelRealization> {
        match &self.profiles[vehicle] {
            None => Ok(ChannelRealization::identity()),
            Some(p) => channel::draw_profile(p, self.beta, rng),
        }
    }

    pub fn draw_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<ChannelRealization>> {
        (0..self.n_vehicles).map(|v| self.draw_channel(v, rng)).collect()
    }
}

/// One bit per vehicle, already standardized and power-scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub bits: Vec<Bit>,
    pub sequences: Vec<ChipSequence>,
    pub scaled: Vec<Vec<Complex64>>,
}

pub fn transmit_bits<R: Rng + ?Sized>(cfg: &LinkConfig, bits: &[Bit], rng: &mut R) -> Result<Transmission> {
    if bits.len() != cfg.n_vehicles {
        return Err(Error::shape(cfg.n_vehicles, bits.len()));
    }
    let alloc = cfg.allocation();
    let mut sequences = Vec::with_capacity(bits.len());
    let mut scaled = Vec::with_capacity(bits.len());
    for (i, &b) in bits.iter().enumerate() {
        let s = draw_standardized(b, cfg.beta, rng)?;
        let a = alloc.amplitude(i);
        scaled.push(s.chips().iter().map(|&c| Complex64::new(a * c, 0.0)).collect());
        sequences.push(s);
    }
    Ok(Transmission {
        bits: bits.to_vec(),
        sequences,
        scaled,
    })
}

/// Uniform random bits for every vehicle, then [`transmit_bits`].
pub fn transmit<R: Rng + ?Sized>(cfg: &LinkConfig, rng: &mut R) -> Result<Transmission> {
    let bits: Vec<Bit> = (0..cfg.n_vehicles).map(|_| Bit::random(rng)).collect();
    transmit_bits(cfg, &bits, rng)
}

/// Noise-free superposition of every vehicle's faded signal.
pub fn faded_sum(tx: &Transmission, channels: &[ChannelRealization]) -> Result<Vec<Complex64>> {
    if channels.len() != tx.scaled.len() {
        return Err(Error::shape(tx.scaled.len(), channels.len()));
    }
    let faded = tx
        .scaled
        .iter()
        .zip(channels)
        .map(|(s, h)| channel::apply_channel(s, h, 0.0))
        .collect::<Result<Vec<_>>>()?;
    superpose(&faded)
}

/// Received chip vector at one Eb/N0.
pub fn receive<R: Rng + ?Sized>(
    cfg: &LinkConfig,
    tx: &Transmission,
    channels: &[ChannelRealization],
    ebn0_db: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    channel::add_awgn(&faded_sum(tx, channels)?, cfg.n0(ebn0_db), rng)
}

/// Reproducible RNG stream: ChaCha8 keyed by `master_seed` (expanded with
/// the generator's own `seed_from_u64`) on stream number `stream_id`.
pub fn seed_stream(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for item `index` of experiment family `domain`.
pub fn stream_id(domain: u16, index: u64) -> u64 {
    ((domain as u64) << 48) | (index & ((1 << 48) - 1))
}

/// Independent generators for the stages of one trial, all derived from a
/// single parent stream so trial results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct TrialRngs {
    pub tx: ChaCha8Rng,
    pub channel: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub sic: ChaCha8Rng,
    pub eve: ChaCha8Rng,
}

impl TrialRngs {
    pub fn from_parent(parent: &mut impl RngCore) -> Self {
        let mut child = || ChaCha8Rng::seed_from_u64(parent.next_u64());
        Self {
            tx: child(),
            channel: child(),
            noise: child(),
            sic: child(),
            eve: child(),
        }
    }

    pub fn for_trial(master_seed: u64, domain: u16, index: u64) -> Self {
        Self::from_parent(&mut seed_stream(master_seed, stream_id(domain, index)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_convention() {
        let cfg = LinkConfig::new(4, 64, LinkScenario::Awgn).unwrap();
        assert_eq!(cfg.energy_per_bit(), 16.0);
        assert!((cfg.n0(10.0) - 1.6).abs() < 1e-12);
        assert!((cfg.n0(0.0) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(LinkConfig::new(0, 16, LinkScenario::Awgn).is_err());
        assert!(LinkConfig::new(5, 16, LinkScenario::Rayleigh).is_err());
        assert!(LinkConfig::new(4, 6, LinkScenario::Rayleigh).is_err());
        assert!(LinkConfig::new(4, 7, LinkScenario::Rayleigh).is_ok());
    }

    #[test]
    fn transmitted_power_matches_allocation() {
        let cfg = LinkConfig::new(3, 32, LinkScenario::Awgn).unwrap();
        let mut rng = seed_stream(1, 0);
        let tx = transmit(&cfg, &mut rng).unwrap();
        for (i, s) in tx.scaled.iter().enumerate() {
            let e: f64 = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / 32.0;
            assert!((e - cfg.allocation().coefficients()[i]).abs() < 1e-12);
        }
        let r = faded_sum(&tx, &cfg.draw_channels(&mut rng).unwrap()).unwrap();
        let total: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!(total > 0.0);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = seed_stream(7, 3);
            (0..100).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = seed_stream(7, 3);
            (0..100).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = seed_stream(7, 4);
            (0..100).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| !c.contains(x)));
        assert_ne!(stream_id(1, 5), stream_id(2, 5));
    }
}
