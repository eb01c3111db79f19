//! Power-domain superposition at the transmitter side.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Per-vehicle power fractions, index 0 = weakest channel = largest share.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    coefficients: Vec<f64>,
    reference_power: f64,
}

impl PowerAllocation {
    /// `α_i = 2^(N−i) / Σ_j 2^(N−j)`; consecutive coefficients differ by
    /// exactly a factor of two.
    pub fn new(n_vehicles: usize, reference_power: f64) -> Result<Self> {
        if n_vehicles == 0 {
            return Err(Error::arg("n_vehicles", "at least one vehicle is required"));
        }
        if n_vehicles > 52 {
            return Err(Error::arg("n_vehicles", "power ratios exceed f64 precision"));
        }
        if !(reference_power > 0.0 && reference_power.is_finite()) {
            return Err(Error::arg("reference_power", "must be positive"));
        }
        let denom = ((1u64 << n_vehicles) - 1) as f64;
        let coefficients = (1..=n_vehicles)
            .map(|i| (1u64 << (n_vehicles - i)) as f64 / denom)
            .collect();
        Ok(Self {
            coefficients,
            reference_power,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn reference_power(&self) -> f64 {
        self.reference_power
    }

    pub fn n_vehicles(&self) -> usize {
        self.coefficients.len()
    }

    /// Amplitude `√(α_i P)` applied to vehicle `i` (0-based).
    pub fn amplitude(&self, vehicle: usize) -> f64 {
        (self.coefficients[vehicle] * self.reference_power).sqrt()
    }
}

/// Power coefficients with unit reference power.
pub fn power_coefficients(n_vehicles: usize) -> Result<PowerAllocation> {
    PowerAllocation::new(n_vehicles, 1.0)
}

/// Multiplies every chip by `√(α·P)`.
pub fn scale_signal(chips: &[f64], alpha: f64, p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0) {
        return Err(Error::arg("p", "reference power must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg("alpha", "power coefficient must lie in (0, 1]"));
    }
    let g = (alpha * p).sqrt();
    Ok(chips.iter().map(|c| c * g).collect())
}

/// Element-wise sum of equally long complex chip vectors.
pub fn superpose(signals: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let first = signals
        .first()
        .ok_or_else(|| Error::arg("signals", "nothing to superpose"))?;
    let len = first.len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for s in signals {
        if s.len() != len {
            return Err(Error::shape(len, s.len()));
        }
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    Ok(out)
}
