//! Chaotic chip generators and chaos-shift-keying bit mapping.
//!
//! Bit 0 is carried by a Logistic-map orbit (`x ← 3.7·x·(1 − x)`), bit 1 by a
//! Cubic (Chebyshev T₃) orbit (`x ← 4x³ − 3x`). Chips are the iterates that
//! follow the seed, so `chips[0]` is the seed iterated once.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOGISTIC_GAIN: f64 = 3.7;

/// Orbits that come this close to 0 or ±1 are treated as degenerate.
pub const DEGENERATE_MARGIN: f64 = 1e-12;

/// The two chaotic maps of the CSK alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChaosMap {
    Logistic,
    Cubic,
}

impl ChaosMap {
    #[inline]
    pub fn step(self, x: f64) -> f64 {
        match self {
            ChaosMap::Logistic => LOGISTIC_GAIN * x * (1.0 - x),
            ChaosMap::Cubic => 4.0 * x * x * x - 3.0 * x,
        }
    }

    /// Map carrying `bit`: Logistic for 0, Cubic for 1.
    pub fn for_bit(bit: Bit) -> Self {
        match bit {
            Bit::Zero => ChaosMap::Logistic,
            Bit::One => ChaosMap::Cubic,
        }
    }

    /// Iterates the map `beta` times from `seed`, rejecting seeds outside
    /// (0, 1) and orbits that touch 0 or ±1 within `beta` steps.
    pub fn generate(self, seed: f64, beta: usize) -> Result<ChipSequence> {
        if beta == 0 {
            return Err(Error::arg("beta", "spreading factor must be at least 1"));
        }
        if !(seed > 0.0 && seed < 1.0) {
            return Err(Error::InvalidSeed {
                seed,
                reason: "initial condition must lie in the open interval (0, 1)",
            });
        }
        let mut chips = Vec::with_capacity(beta);
        let mut x = seed;
        for _ in 0..beta {
            x = self.step(x);
            if is_degenerate(x) {
                return Err(Error::InvalidSeed {
                    seed,
                    reason: "orbit reaches a fixed point of the map",
                });
            }
            chips.push(x);
        }
        Ok(ChipSequence {
            chips,
            map: self,
            seed,
        })
    }

    /// Draws a uniform seed on (0, 1), resampling until the orbit is
    /// non-degenerate for `beta` chips.
    pub fn draw<R: Rng + ?Sized>(self, beta: usize, rng: &mut R) -> Result<ChipSequence> {
        if beta == 0 {
            return Err(Error::arg("beta", "spreading factor must be at least 1"));
        }
        loop {
            let seed: f64 = rng.random();
            if seed <= 0.0 {
                continue;
            }
            match self.generate(seed, beta) {
                Ok(seq) => return Ok(seq),
                Err(Error::InvalidSeed { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
}

#[inline]
fn is_degenerate(x: f64) -> bool {
    !x.is_finite() || x.abs() >= 1.0 - DEGENERATE_MARGIN || x.abs() <= DEGENERATE_MARGIN
}

/// One transmitted information bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            _ => Err(Error::arg("bit", format!("{v} is not a binary value"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

/// β chips of one bit of one vehicle, with the provenance needed to
/// regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSequence {
    chips: Vec<f64>,
    map: ChaosMap,
    seed: f64,
}

impl ChipSequence {
    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    pub fn map(&self) -> ChaosMap {
        self.map
    }

    pub fn seed(&self) -> f64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn into_chips(self) -> Vec<f64> {
        self.chips
    }

    /// Wraps externally produced chips; used for tests and for re-standardizing.
    pub fn from_parts(chips: Vec<f64>, map: ChaosMap, seed: f64) -> Self {
        Self { chips, map, seed }
    }
}

pub fn generate_logistic(seed: f64, beta: usize) -> Result<ChipSequence> {
    ChaosMap::Logistic.generate(seed, beta)
}

pub fn generate_cubic(seed: f64, beta: usize) -> Result<ChipSequence> {
    ChaosMap::Cubic.generate(seed, beta)
}

/// CSK mapping: Logistic chips for bit 0, Cubic chips for bit 1.
pub fn modulate(bit: Bit, seed: f64, beta: usize) -> Result<ChipSequence> {
    ChaosMap::for_bit(bit).generate(seed, beta)
}

/// Removes the per-bit mean and scales to unit mean-square power.
pub fn standardize(seq: &ChipSequence) -> Result<ChipSequence> {
    let beta = seq.chips.len();
    if beta < 2 {
        return Err(Error::arg("beta", "standardization needs at least 2 chips"));
    }
    let n = beta as f64;
    let mean = seq.chips.iter().sum::<f64>() / n;
    let var = seq.chips.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    if !(var > 1e-24) {
        return Err(Error::Degenerate("chip sequence has zero variance"));
    }
    let inv_rms = 1.0 / var.sqrt();
    Ok(ChipSequence {
        chips: seq.chips.iter().map(|c| (c - mean) * inv_rms).collect(),
        map: seq.map,
        seed: seq.seed,
    })
}

/// Fresh random seed, map chosen by `bit`, standardized to zero mean and
/// unit power. This is the waveform both the transmitter and the SIC
/// reconstruction use.
pub fn draw_standardized<R: Rng + ?Sized>(
    bit: Bit,
    beta: usize,
    rng: &mut R,
) -> Result<ChipSequence> {
    let raw = ChaosMap::for_bit(bit).draw(beta, rng)?;
    standardize(&raw)
}
