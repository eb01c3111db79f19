//! Successive interference cancellation with a learned demodulator.
//!
//! Stages run strongest-allocation first. After each decision the receiver
//! regenerates a chaotic waveform from the decided map with a fresh random
//! seed, passes it through its view of that vehicle's channel, and subtracts.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{self, ChannelRealization};
use crate::chaos::{draw_standardized, Bit};
use crate::demod::{decide, DemodulatorModel};
use crate::error::{Error, Result};
use crate::features::{build_feature, FeatureTensor};
use crate::noma::PowerAllocation;

/// Anything that turns a batch of feature tensors into bit decisions.
pub trait Demodulator {
    fn beta(&self) -> usize;
    fn probabilities(&self, features: &[FeatureTensor]) -> Result<Vec<[f64; 2]>>;
}

impl Demodulator for DemodulatorModel {
    fn beta(&self) -> usize {
        DemodulatorModel::beta(self)
    }

    fn probabilities(&self, features: &[FeatureTensor]) -> Result<Vec<[f64; 2]>> {
        self.predict_features(features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub residual: Vec<Complex64>,
    pub feature: FeatureTensor,
    pub bit: Bit,
    pub probs: [f64; 2],
    /// Seed of the regenerated waveform; `None` at the last stage.
    pub reconstruction_seed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SicTrace {
    pub stages: Vec<StageRecord>,
}

/// `√(α_i P) · h ⊗ ŝ` for a fresh standardized waveform of `bit`.
/// Returns the contribution and the seed it was generated from.
pub fn reconstruct<R: Rng + ?Sized>(
    bit: Bit,
    amplitude: f64,
    channel: &ChannelRealization,
    beta: usize,
    rng: &mut R,
) -> Result<(Vec<Complex64>, f64)> {
    let s = draw_standardized(bit, beta, rng)?;
    let scaled: Vec<Complex64> = s.chips().iter().map(|&c| Complex64::new(amplitude * c, 0.0)).collect();
    Ok((channel::apply_channel(&scaled, channel, 0.0)?, s.seed()))
}

fn subtract(r: &mut [Complex64], c: &[Complex64]) {
    for (a, b) in r.iter_mut().zip(c) {
        *a -= b;
    }
}

/// One trial's input to [`sic_receive_batch`].
pub struct SicInput<'a, R: Rng> {
    pub received: &'a [Complex64],
    pub channels: &'a [ChannelRealization],
    pub rng: &'a mut R,
}

/// Runs many independent SIC chains stage by stage so every stage needs a
/// single batched forward pass. Each trial draws only from its own RNG, in
/// the same order as [`sic_receive`].
pub fn sic_receive_batch<R: Rng, D: Demodulator + ?Sized>(
    inputs: &mut [SicInput<'_, R>],
    alloc: &PowerAllocation,
    csi_rho: f64,
    model: &D,
    keep_trace: bool,
) -> Result<Vec<(Vec<Bit>, SicTrace)>> {
    let n = alloc.n_vehicles();
    let beta = model.beta();
    let mut residuals = Vec::with_capacity(inputs.len());
    let mut views = Vec::with_capacity(inputs.len());
    for inp in inputs.iter_mut() {
        if inp.received.len() != beta {
            return Err(Error::shape(beta, inp.received.len()));
        }
        if inp.channels.len() != n {
            return Err(Error::shape(n, inp.channels.len()));
        }
        let view = inp
            .channels
            .iter()
            .map(|h| channel::degrade_realization(h, csi_rho, inp.rng))
            .collect::<Result<Vec<_>>>()?;
        views.push(view);
        residuals.push(inp.received.to_vec());
    }
    let mut out: Vec<(Vec<Bit>, SicTrace)> = (0..inputs.len())
        .map(|_| (Vec::with_capacity(n), SicTrace::default()))
        .collect();
    for stage in 0..n {
        let features = residuals
            .iter()
            .zip(&views)
            .map(|(r, v)| build_feature(r, v[stage].dominant_tap(0.0, beta)))
            .collect::<Result<Vec<_>>>()?;
        let probs = model.probabilities(&features)?;
        let last = stage + 1 == n;
        for (t, (feature, p)) in features.into_iter().zip(probs).enumerate() {
            let bit = decide(p);
            let mut seed = None;
            let residual_before = keep_trace.then(|| residuals[t].clone());
            if !last {
                let (c, s) = reconstruct(bit, alloc.amplitude(stage), &views[t][stage], beta, inputs[t].rng)?;
                subtract(&mut residuals[t], &c);
                seed = Some(s);
            }
            out[t].0.push(bit);
            if let Some(residual) = residual_before {
                out[t].1.stages.push(StageRecord {
                    residual,
                    feature,
                    bit,
                    probs: p,
                    reconstruction_seed: seed,
                });
            }
        }
    }
    Ok(out)
}

/// Decodes every vehicle from one received bit interval.
///
/// `channels[i]` is vehicle `i`'s true channel; the receiver's view is a
/// CSI-degraded copy with correlation `csi_rho`.
pub fn sic_receive<R: Rng, D: Demodulator + ?Sized>(
    r: &[Complex64],
    alloc: &PowerAllocation,
    channels: &[ChannelRealization],
    csi_rho: f64,
    model: &D,
    rng: &mut R,
) -> Result<(Vec<Bit>, SicTrace)> {
    let mut inputs = [SicInput {
        received: r,
        channels,
        rng,
    }];
    let mut out = sic_receive_batch(&mut inputs, alloc, csi_rho, model, true)?;
    Ok(out.pop().expect("one trial"))
}
