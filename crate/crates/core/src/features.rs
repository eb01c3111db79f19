//! Dual-domain (time samples + PSD) feature tensor.

use std::cell::RefCell;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// `|DFT(r)[k]|²` with the unnormalized forward transform.
pub fn psd(r: &[Complex64]) -> Result<Vec<f64>> {
    if r.is_empty() {
        return Err(Error::arg("r", "empty signal"));
    }
    let mut buf = r.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    Ok(buf.iter().map(|z| z.norm_sqr()).collect())
}

/// Derotates by the phase of `dominant_tap` and keeps the real part.
pub fn realify(r: &[Complex64], dominant_tap: Complex64) -> Result<Vec<f64>> {
    let mag = dominant_tap.norm();
    if mag == 0.0 || !mag.is_finite() {
        if r.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            return Ok(vec![0.0; r.len()]);
        }
        return Err(Error::Degenerate("dominant tap has zero magnitude"));
    }
    let rot = dominant_tap.conj() / mag;
    Ok(r.iter().map(|z| (z * rot).re).collect())
}

/// 2×β demodulator input: row 0 realified samples, row 1 PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    rows: Array2<f64>,
}

impl FeatureTensor {
    pub fn from_rows(time: Vec<f64>, spectrum: Vec<f64>) -> Result<Self> {
        if time.len() != spectrum.len() || time.is_empty() {
            return Err(Error::shape(time.len(), spectrum.len()));
        }
        let beta = time.len();
        let mut data = time;
        data.extend(spectrum);
        let rows = Array2::from_shape_vec((2, beta), data)
            .map_err(|e| Error::shape((2, beta), e.to_string()))?;
        Ok(Self { rows })
    }

    pub fn beta(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn time_row(&self) -> ndarray::ArrayView1<'_, f64> {
        self.rows.row(0)
    }

    pub fn psd_row(&self) -> ndarray::ArrayView1<'_, f64> {
        self.rows.row(1)
    }
}

/// Feature tensor for the residual `r` at one SIC stage.
pub fn build_feature(r: &[Complex64], dominant_tap: Complex64) -> Result<FeatureTensor> {
    let spectrum = psd(r)?;
    let time = realify(r, dominant_tap)?;
    FeatureTensor::from_rows(time, spectrum)
}
