//! Error rates, efficiency figures, complexity and secrecy metrics.

use crate::chaos::Bit;
use crate::error::{Error, Result};

/// Two-sided 95% standard-normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Fraction of positions where the two bit strings differ.
pub fn ber(tx: &[Bit], rx: &[Bit]) -> Result<f64> {
    if tx.is_empty() || tx.len() != rx.len() {
        return Err(Error::shape(tx.len(), rx.len()));
    }
    let errors = tx.iter().zip(rx).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / tx.len() as f64)
}

/// Wilson score interval for `errors` out of `trials` at quantile `z`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Share of transmitted energy that carries information.
pub fn energy_efficiency(e_ref: f64, e_info: f64) -> Result<f64> {
    if !(e_ref >= 0.0 && e_info >= 0.0) || e_ref + e_info <= 0.0 {
        return Err(Error::arg("energy", "energies must be nonnegative with a positive sum"));
    }
    Ok(e_info / (e_ref + e_info))
}

/// Bits per chip: `N / β`.
pub fn spectral_efficiency(n_vehicles: usize, beta: usize) -> Result<f64> {
    if n_vehicles == 0 || beta == 0 {
        return Err(Error::arg("spectral_efficiency", "arguments must be positive"));
    }
    Ok(n_vehicles as f64 / beta as f64)
}

fn xlog2x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Mutual information of a binary symmetric channel with crossover `err_rate`.
pub fn mutual_information(err_rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&err_rate) {
        return Err(Error::arg("err_rate", "must lie in [0, 1]"));
    }
    Ok(1.0 + xlog2x(err_rate) + xlog2x(1.0 - err_rate))
}

fn mean_mi(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::arg("ber", "need at least one vehicle"));
    }
    let mut s = 0.0;
    for &r in rates {
        s += mutual_information(r)?;
    }
    Ok(s / rates.len() as f64)
}

/// Mean eavesdropper mutual information across vehicles.
pub fn leakage(eve_ber: &[f64]) -> Result<f64> {
    mean_mi(eve_ber)
}

/// Mean legitimate mutual information minus the leakage.
pub fn secrecy_capacity(legit_ber: &[f64], eve_ber: &[f64]) -> Result<f64> {
    if legit_ber.len() != eve_ber.len() {
        return Err(Error::shape(legit_ber.len(), eve_ber.len()));
    }
    Ok(mean_mi(legit_ber)? - leakage(eve_ber)?)
}

/// Per-symbol operation counts of the demodulator's main stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityEstimate {
    pub fft: u64,
    pub convolution: u64,
    pub projections: u64,
    pub attention_scores: u64,
    pub pooling: u64,
    pub classifier: u64,
}

impl ComplexityEstimate {
    pub fn total(&self) -> u64 {
        self.fft + self.convolution + self.projections + self.attention_scores + self.pooling + self.classifier
    }

    /// The `n·β²` attention-score term, which dominates for long sequences.
    pub fn dominant(&self) -> u64 {
        self.attention_scores
    }
}

pub fn complexity_estimate(beta: u64, n: u64, h: u64, d_h: u64, k_size: u64) -> Result<ComplexityEstimate> {
    if [beta, n, h, d_h, k_size].contains(&0) {
        return Err(Error::arg("complexity_estimate", "arguments must be positive"));
    }
    let log2 = (beta as f64).log2();
    Ok(ComplexityEstimate {
        fft: (beta as f64 * log2).round() as u64,
        convolution: n * k_size * beta,
        projections: n * h * d_h * beta,
        attention_scores: n * beta * beta,
        pooling: n * beta,
        classifier: n,
    })
}

/// Error tally for one vehicle at one SNR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    /// 1-based vehicle index.
    pub vehicle: usize,
    pub bits: u64,
    pub errors: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    pub fn wilson(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.bits, Z_95)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub legit_ber: Vec<f64>,
    pub eve_ber: Vec<f64>,
    pub leakage: f64,
    pub secrecy_capacity: f64,
}

impl SecurityReport {
    pub fn new(legit_ber: Vec<f64>, eve_ber: Vec<f64>) -> Result<Self> {
        let leakage = leakage(&eve_ber)?;
        let secrecy_capacity = secrecy_capacity(&legit_ber, &eve_ber)?;
        Ok(Self {
            legit_ber,
            eve_ber,
            leakage,
            secrecy_capacity,
        })
    }
}
