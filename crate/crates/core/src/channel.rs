//! Block-fading multipath channels, AWGN, and the imperfect-CSI model.
//!
//! A [`ChannelRealization`] is a short list of taps with integer chip delays.
//! Taps are constant over one bit; the only intra-bit variation comes from
//! each tap's Doppler rotation `e^{−j2π f_D t}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chip rate used to quantize continuous delays (100 MHz sampling).
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    RayleighProfile,
    V2iPrimary,
    V2iAuxiliary,
    AwgnOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub gain: Complex64,
    pub delay: usize,
    pub doppler_hz: f64,
}

impl Tap {
    pub fn new(gain: Complex64, delay: usize) -> Self {
        Self {
            gain,
            delay,
            doppler_hz: 0.0,
        }
    }

    /// Tap gain including its Doppler rotation at absolute time `t`.
    #[inline]
    pub fn gain_at(&self, t: f64) -> Complex64 {
        if self.doppler_hz == 0.0 {
            self.gain
        } else {
            self.gain * Complex64::from_polar(1.0, -2.0 * PI * self.doppler_hz * t)
        }
    }
}

/// One vehicle's taps for one bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<Tap>,
    scenario: Scenario,
    chip_period_s: f64,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Tap>, scenario: Scenario, chip_period_s: f64) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::arg("taps", "a channel needs at least one tap"))?;
        if first.delay != 0 {
            return Err(Error::arg("taps", "first tap must have zero delay"));
        }
        if taps.windows(2).any(|w| w[1].delay <= w[0].delay) {
            return Err(Error::arg("taps", "delays must be strictly increasing"));
        }
        if !(chip_period_s > 0.0) {
            return Err(Error::arg("chip_period_s", "must be positive"));
        }
        Ok(Self {
            taps,
            scenario,
            chip_period_s,
        })
    }

    /// Unit-gain single tap: the AWGN-only channel.
    pub fn identity() -> Self {
        Self {
            taps: vec![Tap::new(Complex64::new(1.0, 0.0), 0)],
            scenario: Scenario::AwgnOnly,
            chip_period_s: 1.0 / DEFAULT_SAMPLE_RATE_HZ,
        }
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn chip_period_s(&self) -> f64 {
        self.chip_period_s
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map_or(0, |t| t.delay)
    }

    /// Strongest tap, rotated by its Doppler phase at the middle of the bit
    /// that starts at `t0`.
    pub fn dominant_tap(&self, t0: f64, beta: usize) -> Complex64 {
        let mid = t0 + 0.5 * beta as f64 * self.chip_period_s;
        self.taps
            .iter()
            .max_by(|a, b| a.gain.norm_sqr().total_cmp(&b.gain.norm_sqr()))
            .map(|t| t.gain_at(mid))
            .unwrap_or_default()
    }

    /// Same delays and Dopplers, every gain passed through `f`.
    pub fn map_gains(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self {
            taps: self
                .taps
                .iter()
                .map(|t| Tap {
                    gain: f(t.gain),
                    ..*t
                })
                .collect(),
            scenario: self.scenario,
            chip_period_s: self.chip_period_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathCount {
    Fixed(usize),
    /// Inclusive range, drawn uniformly.
    Range(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PowerProfile {
    /// Expected tap powers `E|λ_l|²`, summing to one.
    Explicit(Vec<f64>),
    /// Exponential power-delay profile with the given decay constant.
    Exponential { decay_ns: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DelayProfile {
    /// Tap delays in chips.
    Explicit(Vec<usize>),
    /// Delays drawn from the exponential PDP; the RMS spread is informational.
    Drawn { rms_spread_ns: f64 },
}

/// Statistical description a realization is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub scenario: Scenario,
    pub n_paths: PathCount,
    pub power: PowerProfile,
    pub delays: DelayProfile,
    /// Rician K-factor `(mean, std)` in dB, drawn Gaussian per realization.
    pub k_factor_db: Option<(f64, f64)>,
    pub doppler_rms_hz: f64,
    pub sample_rate_hz: f64,
    /// Recorded for completeness; the single-antenna model has no angular dimension.
    pub angular_spread_deg: Option<f64>,
}

impl ChannelProfile {
    /// Explicit Rayleigh profile; gains must sum to one.
    pub fn rayleigh(power_gains: Vec<f64>, delays: Vec<usize>) -> Result<Self> {
        let p = Self {
            scenario: Scenario::RayleighProfile,
            n_paths: PathCount::Fixed(power_gains.len()),
            power: PowerProfile::Explicit(power_gains),
            delays: DelayProfile::Explicit(delays),
            k_factor_db: None,
            doppler_rms_hz: 0.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            angular_spread_deg: None,
        };
        p.validate_explicit()?;
        Ok(p)
    }

    /// Per-vehicle Rayleigh power/delay profiles for vehicles 1–4.
    ///
    /// Vehicle 4's published gains `[7, 2, 1, 1]/12` sum to 11/12; they are
    /// rescaled to unit total power.
    pub fn rayleigh_vehicle(vehicle: usize) -> Result<Self> {
        let (gains, delays): (Vec<f64>, Vec<usize>) = match vehicle {
            1 => (vec![1.0 / 2.0, 1.0 / 2.0], vec![0, 2]),
            2 => (vec![4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0], vec![0, 2, 4]),
            3 => (
                vec![4.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0],
                vec![0, 2, 3, 5],
            ),
            4 => (
                vec![7.0 / 11.0, 2.0 / 11.0, 1.0 / 11.0, 1.0 / 11.0],
                vec![0, 2, 4, 6],
            ),
            _ => {
                return Err(Error::arg(
                    "vehicle",
                    format!("no tabulated Rayleigh profile for vehicle {vehicle}"),
                ))
            }
        };
        Self::rayleigh(gains, delays)
    }

    /// Urban V2I profile for the given road type.
    pub fn v2i(scenario: Scenario) -> Result<Self> {
        let (paths, k, decay, rms, doppler, angular) = match scenario {
            Scenario::V2iPrimary => ((5, 8), (9.56, 4.58), 60.0, 76.1, 33.3, 20.8),
            Scenario::V2iAuxiliary => ((10, 16), (4.22, 4.96), 190.0, 238.8, 35.4, 36.5),
            other => {
                return Err(Error::arg(
                    "scenario",
                    format!("{other:?} is not a V2I scenario"),
                ))
            }
        };
        Ok(Self {
            scenario,
            n_paths: PathCount::Range(paths.0, paths.1),
            power: PowerProfile::Exponential { decay_ns: decay },
            delays: DelayProfile::Drawn {
                rms_spread_ns: rms,
            },
            k_factor_db: Some(k),
            doppler_rms_hz: doppler,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            angular_spread_deg: Some(angular),
        })
    }

    fn validate_explicit(&self) -> Result<(&[f64], &[usize])> {
        let (PowerProfile::Explicit(gains), DelayProfile::Explicit(delays)) =
            (&self.power, &self.delays)
        else {
            return Err(Error::arg(
                "profile",
                "explicit power gains and delays are required",
            ));
        };
        if gains.is_empty() || gains.len() != delays.len() {
            return Err(Error::shape(gains.len(), delays.len()));
        }
        if gains.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::arg("power_gains", "gains must be nonnegative"));
        }
        let total: f64 = gains.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(
                "power_gains",
                format!("gains sum to {total}, expected 1"),
            ));
        }
        if delays[0] != 0 || delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg(
                "delays",
                "delays must start at 0 and strictly increase",
            ));
        }
        Ok((gains, delays))
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Rayleigh taps with `E|λ_l|² = power_gains[l]`, zero Doppler.
pub fn draw_rayleigh<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let (gains, delays) = profile.validate_explicit()?;
    let taps = gains
        .iter()
        .zip(delays)
        .map(|(&p, &d)| Tap::new(complex_gaussian(rng, p), d))
        .collect();
    ChannelRealization::new(taps, profile.scenario, 1.0 / profile.sample_rate_hz)
}

/// Urban V2I realization for one of the two road scenarios.
pub fn draw_v2i<R: Rng + ?Sized>(
    scenario: Scenario,
    beta: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    draw_v2i_with(&ChannelProfile::v2i(scenario)?, beta, rng)
}

/// Rician multipath draw from an exponential-PDP profile.
///
/// Continuous delays follow the PDP truncated to the bit, are rounded to
/// chips, and taps sharing a chip are merged. Gains are scaled so the
/// expected total power, given the drawn K-factor and delays, is one.
pub fn draw_v2i_with<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    beta: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let PowerProfile::Exponential { decay_ns } = profile.power else {
        return Err(Error::arg("profile", "V2I draws need an exponential PDP"));
    };
    if beta == 0 {
        return Err(Error::arg("beta", "must be positive"));
    }
    let n_paths = match profile.n_paths {
        PathCount::Fixed(n) => n,
        PathCount::Range(lo, hi) if lo <= hi => rng.random_range(lo..=hi),
        PathCount::Range(..) => return Err(Error::arg("n_paths", "empty range")),
    };
    if n_paths == 0 {
        return Err(Error::arg("n_paths", "must be positive"));
    }
    let chip = 1.0 / profile.sample_rate_hz;
    let decay = decay_ns * 1e-9;
    let tau_max = (beta - 1) as f64 * chip;
    let tail = 1.0 - (-tau_max / decay).exp();

    let k_lin = match profile.k_factor_db {
        Some((mean, std)) => {
            let z: f64 = StandardNormal.sample(rng);
            10f64.powf((mean + std * z) / 10.0)
        }
        None => 0.0,
    };
    let los = (k_lin / (k_lin + 1.0)).sqrt();
    let nlos = (1.0 / (k_lin + 1.0)).sqrt();

    // (delay chip, path power, gain, doppler)
    let mut paths: Vec<(usize, f64, Complex64, f64)> = Vec::with_capacity(n_paths);
    for l in 0..n_paths {
        let tau = if l == 0 {
            0.0
        } else {
            let u: f64 = rng.random();
            -decay * (1.0 - u * tail).ln()
        };
        let power = (-tau / decay).exp();
        let scatter = complex_gaussian(rng, 1.0);
        let gain = power.sqrt() * (Complex64::new(los, 0.0) + nlos * scatter);
        let z: f64 = StandardNormal.sample(rng);
        let doppler = profile.doppler_rms_hz * z;
        let delay = ((tau / chip).round() as usize).min(beta - 1);
        paths.push((delay, power, gain, doppler));
    }
    paths.sort_by_key(|p| p.0);

    // Merge taps that landed on the same chip; their LOS parts add coherently.
    let coherent = k_lin / (k_lin + 1.0);
    let mut taps: Vec<Tap> = Vec::new();
    let mut expected_power = 0.0;
    let mut i = 0;
    while i < paths.len() {
        let delay = paths[i].0;
        let mut j = i;
        let (mut gain, mut p_sum, mut amp_sum, mut doppler_w) =
            (Complex64::new(0.0, 0.0), 0.0, 0.0, 0.0);
        while j < paths.len() && paths[j].0 == delay {
            gain += paths[j].2;
            p_sum += paths[j].1;
            amp_sum += paths[j].1.sqrt();
            doppler_w += paths[j].1 * paths[j].3;
            j += 1;
        }
        expected_power += p_sum + coherent * (amp_sum * amp_sum - p_sum);
        taps.push(Tap {
            gain,
            delay,
            doppler_hz: doppler_w / p_sum,
        });
        i = j;
    }
    let norm = 1.0 / expected_power.sqrt();
    for t in &mut taps {
        t.gain *= norm;
    }
    ChannelRealization::new(taps, profile.scenario, chip)
}

/// Draws from any profile: explicit profiles are Rayleigh, exponential
/// ones use the Rician V2I procedure.
pub fn draw_profile<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    beta: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    match profile.power {
        PowerProfile::Explicit(_) => draw_rayleigh(profile, rng),
        PowerProfile::Exponential { .. } => draw_v2i_with(profile, beta, rng),
    }
}

/// Per-bit convolution with Doppler rotation; chips delayed past the end of
/// the bit are dropped.
pub fn apply_channel(
    signal: &[Complex64],
    ch: &ChannelRealization,
    t0: f64,
) -> Result<Vec<Complex64>> {
    let beta = signal.len();
    if ch.max_delay() >= beta {
        return Err(Error::arg(
            "channel",
            format!("tap delay {} not below β = {beta}", ch.max_delay()),
        ));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); beta];
    let tc = ch.chip_period_s;
    for tap in &ch.taps {
        for k in tap.delay..beta {
            let g = tap.gain_at(t0 + k as f64 * tc);
            out[k] += g * signal[k - tap.delay];
        }
    }
    Ok(out)
}

/// Adds circular complex Gaussian noise with `E|n|² = n0` per sample.
pub fn add_awgn<R: Rng + ?Sized>(
    signal: &[Complex64],
    n0: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if !(n0 >= 0.0) {
        return Err(Error::arg("n0", "noise density must be nonnegative"));
    }
    if n0 == 0.0 {
        return Ok(signal.to_vec());
    }
    Ok(signal
        .iter()
        .map(|s| s + complex_gaussian(rng, n0))
        .collect())
}

/// Correlation model `ĥ = ρh + √(1−ρ²)ξ`, `ξ ~ CN(0, 1)`.
///
/// Always consumes one complex draw so the RNG position does not depend on ρ.
pub fn degrade_csi<R: Rng + ?Sized>(h: Complex64, rho: f64, rng: &mut R) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg("rho", "correlation must lie in [0, 1]"));
    }
    let xi = complex_gaussian(rng, 1.0);
    if rho == 1.0 {
        return Ok(h);
    }
    Ok(rho * h + (1.0 - rho * rho).sqrt() * xi)
}

/// Applies [`degrade_csi`] to every tap gain with a shared ρ.
pub fn degrade_realization<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    rho: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg("rho", "correlation must lie in [0, 1]"));
    }
    let mut err = None;
    let out = ch.map_gains(|g| match degrade_csi(g, rho, rng) {
        Ok(v) => v,
        Err(e) => {
            err = Some(e);
            g
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn tabulated_profiles() {
        let v1 = ChannelProfile::rayleigh_vehicle(1).unwrap();
        assert_eq!(v1.power, PowerProfile::Explicit(vec![0.5, 0.5]));
        assert_eq!(v1.delays, DelayProfile::Explicit(vec![0, 2]));
        for v in 1..=4 {
            let p = ChannelProfile::rayleigh_vehicle(v).unwrap();
            let PowerProfile::Explicit(g) = &p.power else {
                unreachable!()
            };
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(ChannelProfile::rayleigh_vehicle(5).is_err());
        assert!(ChannelProfile::rayleigh(vec![0.5, 0.4], vec![0, 1]).is_err());

        let prim = ChannelProfile::v2i(Scenario::V2iPrimary).unwrap();
        assert_eq!(prim.k_factor_db, Some((9.56, 4.58)));
        assert_eq!(prim.n_paths, PathCount::Range(5, 8));
        assert_eq!(prim.power, PowerProfile::Exponential { decay_ns: 60.0 });
        let aux = ChannelProfile::v2i(Scenario::V2iAuxiliary).unwrap();
        assert_eq!(aux.power, PowerProfile::Exponential { decay_ns: 190.0 });
        assert_eq!(aux.doppler_rms_hz, 35.4);
        assert!(ChannelProfile::v2i(Scenario::AwgnOnly).is_err());
    }

    #[test]
    fn single_path_profile() {
        let p = ChannelProfile::rayleigh(vec![1.0], vec![0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_rayleigh(&p, &mut rng).unwrap();
        assert_eq!(ch.taps().len(), 1);
        assert_eq!(ch.taps()[0].delay, 0);
    }

    #[test]
    fn rayleigh_tap_powers_match_profile() {
        let p = ChannelProfile::rayleigh_vehicle(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut acc = [0.0f64; 3];
        let mut acc2 = [0.0f64; 3];
        for _ in 0..n {
            let ch = draw_rayleigh(&p, &mut rng).unwrap();
            for (l, t) in ch.taps().iter().enumerate() {
                let e = t.gain.norm_sqr();
                acc[l] += e;
                acc2[l] += e * e;
            }
        }
        let expected = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for l in 0..3 {
            let mean = acc[l] / n as f64;
            let var = acc2[l] / n as f64 - mean * mean;
            let sigma = (var / n as f64).sqrt();
            assert!((mean - expected[l]).abs() < 3.0 * sigma, "tap {l}: {mean}");
        }
    }

    #[test]
    fn v2i_energy_normalization() {
        for scenario in [Scenario::V2iPrimary, Scenario::V2iAuxiliary] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let n = 100_000;
            let mut total = 0.0;
            for _ in 0..n {
                let ch = draw_v2i(scenario, 64, &mut rng).unwrap();
                assert!(ch.max_delay() < 64);
                total += ch.taps().iter().map(|t| t.gain.norm_sqr()).sum::<f64>();
            }
            let mean = total / n as f64;
            assert!((mean - 1.0).abs() < 0.01, "{scenario:?}: {mean}");
        }
    }

    #[test]
    fn v2i_path_counts_and_delays() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let ch = draw_v2i(Scenario::V2iAuxiliary, 128, &mut rng).unwrap();
            assert!((1..=16).contains(&ch.taps().len()));
            assert_eq!(ch.taps()[0].delay, 0);
        }
        assert!(draw_v2i(Scenario::RayleighProfile, 64, &mut rng).is_err());
    }

    #[test]
    fn v2i_infinite_k_is_deterministic_los() {
        let mut p = ChannelProfile::v2i(Scenario::V2iPrimary).unwrap();
        p.k_factor_db = Some((300.0, 0.0));
        p.n_paths = PathCount::Fixed(1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let ch = draw_v2i_with(&p, 64, &mut rng).unwrap();
            assert_eq!(ch.taps().len(), 1);
            let g = ch.taps()[0].gain;
            assert!((g.re - 1.0).abs() < 1e-12 && g.im.abs() < 1e-12, "{g}");
        }
        p.n_paths = PathCount::Fixed(6);
        let ch = draw_v2i_with(&p, 64, &mut rng).unwrap();
        let total: f64 = ch.taps().iter().map(|t| t.gain.norm_sqr()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(ch.taps().iter().all(|t| t.gain.im.abs() < 1e-12 && t.gain.re > 0.0));
    }

    #[test]
    fn apply_channel_examples() {
        let sig = real(&[0.3, -1.0, 2.0]);
        assert_eq!(apply_channel(&sig, &ChannelRealization::identity(), 0.0).unwrap(), sig);

        let ch = ChannelRealization::new(
            vec![Tap::new(c(1.0, 0.0), 0), Tap::new(c(0.5, 0.0), 1)],
            Scenario::RayleighProfile,
            1e-8,
        )
        .unwrap();
        let out = apply_channel(&real(&[1.0, 0.0, 0.0]), &ch, 0.0).unwrap();
        assert_eq!(out, real(&[1.0, 0.5, 0.0]));

        let long = ChannelRealization::new(
            vec![Tap::new(c(1.0, 0.0), 0), Tap::new(c(0.5, 0.0), 3)],
            Scenario::RayleighProfile,
            1e-8,
        )
        .unwrap();
        assert!(apply_channel(&real(&[1.0, 0.0, 0.0]), &long, 0.0).is_err());
    }

    #[test]
    fn conjugate_gains_give_conjugate_outputs() {
        let ch = ChannelRealization::new(
            vec![Tap::new(c(0.3, 0.7), 0), Tap::new(c(-0.2, 0.4), 2)],
            Scenario::RayleighProfile,
            1e-8,
        )
        .unwrap();
        let conj = ch.map_gains(|g| g.conj());
        let sig = real(&[0.5, -1.0, 0.25, 2.0]);
        let a = apply_channel(&sig, &ch, 0.0).unwrap();
        let b = apply_channel(&sig, &conj, 0.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.conj(), *y);
        }
    }

    #[test]
    fn apply_channel_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = draw_v2i(Scenario::V2iPrimary, 16, &mut rng).unwrap();
        let x: Vec<Complex64> = (0..16).map(|k| c((k as f64).sin(), 0.1 * k as f64)).collect();
        let y: Vec<Complex64> = (0..16).map(|k| c((k as f64).cos(), -0.3)).collect();
        let (a, b) = (c(0.7, -0.2), c(-1.3, 0.5));
        let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = apply_channel(&mix, &ch, 1e-3).unwrap();
        let fx = apply_channel(&x, &ch, 1e-3).unwrap();
        let fy = apply_channel(&y, &ch, 1e-3).unwrap();
        for k in 0..16 {
            assert!((lhs[k] - (a * fx[k] + b * fy[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn awgn_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let zeros = vec![c(0.0, 0.0); 1_000_000];
        assert_eq!(add_awgn(&zeros[..4], 0.0, &mut rng).unwrap(), zeros[..4].to_vec());
        assert!(add_awgn(&zeros[..4], -1.0, &mut rng).is_err());

        let n0 = 0.4;
        let noise = add_awgn(&zeros, n0, &mut rng).unwrap();
        let n = noise.len() as f64;
        let p: Vec<f64> = noise.iter().map(|z| z.norm_sqr()).collect();
        let mean = p.iter().sum::<f64>() / n;
        let var = p.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!((mean - n0).abs() < 3.0 * (var / n).sqrt(), "{mean}");

        // lag-1 autocorrelation of the real part
        let re: Vec<f64> = noise.iter().map(|z| z.re).collect();
        let r1 = re.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        let r0 = re.iter().map(|x| x * x).sum::<f64>() / n;
        let rho = r1 / r0;
        assert!(rho.abs() < 3.0 / (n - 1.0).sqrt(), "{rho}");
    }

    #[test]
    fn csi_degradation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = c(0.3, -0.8);
        assert_eq!(degrade_csi(h, 1.0, &mut rng).unwrap(), h);
        assert!(degrade_csi(h, 1.1, &mut rng).is_err());
        assert!(degrade_csi(h, -0.1, &mut rng).is_err());

        let n = 200_000;
        let (mut corr, mut hp, mut ep) = (c(0.0, 0.0), 0.0, 0.0);
        let mut est_power = 0.0;
        for _ in 0..n {
            let h = complex_gaussian(&mut rng, 1.0);
            let e0 = degrade_csi(h, 0.0, &mut rng).unwrap();
            corr += e0 * h.conj();
            hp += h.norm_sqr();
            ep += e0.norm_sqr();
            est_power += degrade_csi(h, 0.85, &mut rng).unwrap().norm_sqr();
        }
        let rho_hat = corr.norm() / (hp * ep).sqrt();
        assert!(rho_hat < 3.0 / (n as f64).sqrt(), "{rho_hat}");
        // E|ĥ|² = ρ²·1 + (1 − ρ²) = 1
        let mean = est_power / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
