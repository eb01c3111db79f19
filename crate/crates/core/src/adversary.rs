//! Eavesdropper that never sees the transmitted bits: it clusters
//! intercepted features into pseudo-labels, trains its own demodulator on
//! them and runs the same SIC chain through its own channels.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::chaos::Bit;
use crate::demod::{train, DemodulatorModel, Hyperparams, TrainConfig, TrainingSample};
use crate::error::{Error, Result};
use crate::features::{build_feature, FeatureTensor};
use crate::noma::PowerAllocation;
use crate::sic::{sic_receive_batch, SicInput};

pub const KMEANS_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    TwoClusterSummary,
}

/// Where the adversary's training labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Cluster indices from [`bootstrap_labels`].
    Bootstrap,
    /// Cluster labels randomly permuted across samples: a guessing baseline.
    ShuffledBootstrap,
    /// True bits; turns the adversary into a legitimate receiver (control).
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EveConfig {
    /// Number of intercepted bit intervals used for training.
    pub intercept_count: usize,
    pub bootstrap: BootstrapMethod,
    pub labels: LabelSource,
    pub hyperparams: Hyperparams,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for EveConfig {
    fn default() -> Self {
        Self {
            intercept_count: 4096,
            bootstrap: BootstrapMethod::TwoClusterSummary,
            labels: LabelSource::Bootstrap,
            hyperparams: Hyperparams::default(),
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            seed: 0xe7e,
        }
    }
}

/// Signals as seen at the eavesdropper, with its own channel knowledge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Intercepts {
    pub received: Vec<Vec<Complex64>>,
    pub channels: Vec<Vec<ChannelRealization>>,
}

impl Intercepts {
    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn push(&mut self, received: Vec<Complex64>, channels: Vec<ChannelRealization>) {
        self.received.push(received);
        self.channels.push(channels);
    }
}

/// Skewness of the time row and spectral centroid of the PSD row over
/// folded normalized frequency `min(k, β−k)/β`.
pub fn summary_statistics(f: &FeatureTensor) -> [f64; 2] {
    let t = f.time_row();
    let n = t.len() as f64;
    let mean = t.sum() / n;
    let m2 = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = t.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let p = f.psd_row();
    let beta = p.len();
    let total: f64 = p.sum();
    let centroid = if total > 0.0 {
        p.iter()
            .enumerate()
            .map(|(k, v)| k.min(beta - k) as f64 / beta as f64 * v)
            .sum::<f64>()
            / total
    } else {
        0.0
    };
    [skew, centroid]
}

/// Two-cluster Lloyd iterations on z-scored 2-D points. Initial centers are
/// a seeded random point and the point farthest from it.
pub fn two_means(points: &[[f64; 2]], seed: u64) -> Result<Vec<u8>> {
    if points.len() < 2 {
        return Err(Error::arg("points", "need at least two samples"));
    }
    let n = points.len() as f64;
    let mut z: Vec<[f64; 2]> = points.to_vec();
    let mut spread = 0.0;
    for d in 0..2 {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let sd = (points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        spread += sd;
        for p in &mut z {
            p[d] = if sd > 0.0 { (p[d] - mean) / sd } else { 0.0 };
        }
    }
    if !(spread > 0.0) {
        return Err(Error::Degenerate("all feature summaries are identical"));
    }
    let dist = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = z[rng.random_range(0..z.len())];
    let second = *z
        .iter()
        .max_by(|a, b| dist(a, &first).total_cmp(&dist(b, &first)))
        .expect("nonempty");
    let mut centers = [first, second];
    let mut labels = vec![0u8; z.len()];
    for _ in 0..KMEANS_ITERATIONS {
        for (l, p) in labels.iter_mut().zip(&z) {
            *l = u8::from(dist(p, &centers[1]) < dist(p, &centers[0]));
        }
        let mut sum = [[0.0; 2]; 2];
        let mut count = [0usize; 2];
        for (&l, p) in labels.iter().zip(&z) {
            let c = l as usize;
            sum[c][0] += p[0];
            sum[c][1] += p[1];
            count[c] += 1;
        }
        for c in 0..2 {
            if count[c] > 0 {
                centers[c] = [sum[c][0] / count[c] as f64, sum[c][1] / count[c] as f64];
            }
        }
    }
    Ok(labels)
}

/// Pseudo-labels from clustering feature summaries; label = cluster index.
pub fn bootstrap_labels(features: &[FeatureTensor], seed: u64) -> Result<Vec<u8>> {
    let points: Vec<[f64; 2]> = features.iter().map(summary_statistics).collect();
    two_means(&points, seed)
}

/// Stage-one features of each intercept, built with the adversary's own
/// estimate of the strongest vehicle's channel.
pub fn stage_one_features(intercepts: &Intercepts) -> Result<Vec<FeatureTensor>> {
    intercepts
        .received
        .iter()
        .zip(&intercepts.channels)
        .map(|(r, ch)| {
            let h = ch.first().ok_or(Error::arg("channels", "no vehicles"))?;
            build_feature(r, h.dominant_tap(0.0, r.len()))
        })
        .collect()
}

/// Trains the adversary's demodulator from the first `intercept_count`
/// intercepts. `truth_bits` is read only by the ground-truth control arm.
pub fn eve_train(cfg: &EveConfig, intercepts: &Intercepts, truth_bits: &[Vec<Bit>]) -> Result<DemodulatorModel> {
    if intercepts.is_empty() || cfg.intercept_count == 0 {
        return Err(Error::arg("intercepts", "nothing intercepted"));
    }
    let used = cfg.intercept_count.min(intercepts.len());
    if used < cfg.train.batch_size {
        return Err(Error::arg(
            "intercept_count",
            format!("{used} intercepts is fewer than one batch of {}", cfg.train.batch_size),
        ));
    }
    let subset = Intercepts {
        received: intercepts.received[..used].to_vec(),
        channels: intercepts.channels[..used].to_vec(),
    };
    let features = stage_one_features(&subset)?;
    let labels: Vec<u8> = match cfg.labels {
        LabelSource::Bootstrap => bootstrap_labels(&features, cfg.seed)?,
        LabelSource::ShuffledBootstrap => {
            let mut l = bootstrap_labels(&features, cfg.seed)?;
            l.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed));
            l
        }
        LabelSource::GroundTruth => {
            if truth_bits.len() < used {
                return Err(Error::shape(used, truth_bits.len()));
            }
            truth_bits[..used].iter().map(|b| b[0].as_u8()).collect()
        }
    };
    let beta = features[0].beta();
    let samples: Vec<TrainingSample> = features
        .into_iter()
        .zip(labels)
        .map(|(feature, l)| TrainingSample {
            feature,
            label: Bit::from(l == 1),
            sic_stage: 1,
            snr_db: f64::NAN,
        })
        .collect();
    let init = DemodulatorModel::new(beta, cfg.hyperparams, cfg.seed)?;
    Ok(train(&init, &samples, &cfg.train)?.0)
}

/// Raw per-vehicle bit error rate of the adversary over every intercept,
/// with no correction for the clustering's label permutation.
pub fn eve_train_and_score<R: Rng>(
    cfg: &EveConfig,
    intercepts: &Intercepts,
    truth_bits: &[Vec<Bit>],
    alloc: &PowerAllocation,
    rngs: &mut [R],
) -> Result<Vec<f64>> {
    if truth_bits.len() != intercepts.len() || rngs.len() != intercepts.len() {
        return Err(Error::shape(intercepts.len(), (truth_bits.len(), rngs.len())));
    }
    let model = eve_train(cfg, intercepts, truth_bits)?;
    eve_score(&model, intercepts, truth_bits, alloc, rngs)
}

/// Decodes every intercept with a trained adversary model.
pub fn eve_score<R: Rng>(
    model: &DemodulatorModel,
    intercepts: &Intercepts,
    truth_bits: &[Vec<Bit>],
    alloc: &PowerAllocation,
    rngs: &mut [R],
) -> Result<Vec<f64>> {
    let n = alloc.n_vehicles();
    let mut errors = vec![0u64; n];
    let mut inputs: Vec<SicInput<'_, R>> = intercepts
        .received
        .iter()
        .zip(&intercepts.channels)
        .zip(rngs.iter_mut())
        .map(|((r, ch), rng)| SicInput {
            received: r,
            channels: ch,
            rng,
        })
        .collect();
    for (chunk, truth) in inputs.chunks_mut(512).zip(truth_bits.chunks(512)) {
        let decided = sic_receive_batch(chunk, alloc, 1.0, model, false)?;
        for ((bits, _), t) in decided.iter().zip(truth) {
            for v in 0..n {
                errors[v] += u64::from(bits[v] != t[v]);
            }
        }
    }
    Ok(errors.iter().map(|&e| e as f64 / intercepts.len() as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn separable_clusters_split_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let side = if i % 2 == 0 { -10.0 } else { 10.0 };
            pts.push([side + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            truth.push(u8::from(side > 0.0));
        }
        let labels = two_means(&pts, 3).unwrap();
        let agree = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(agree == 200 || agree == 0);
    }

    #[test]
    fn identical_points_are_rejected() {
        assert!(two_means(&[[1.0, 2.0]; 10], 0).is_err());
        assert!(two_means(&[[1.0, 2.0]], 0).is_err());
    }

    #[test]
    fn summaries_of_simple_rows() {
        let f = FeatureTensor::from_rows(vec![0.0, 0.0, 0.0, 3.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let [skew, centroid] = summary_statistics(&f);
        assert!(skew > 1.0);
        assert_eq!(centroid, 0.0);
        let f = FeatureTensor::from_rows(vec![1.0, -1.0, 1.0, -1.0], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let [skew, centroid] = summary_statistics(&f);
        assert_eq!(skew, 0.0);
        assert_eq!(centroid, 0.5);
    }

    #[test]
    fn needs_intercepts() {
        let cfg = EveConfig::default();
        assert!(eve_train(&cfg, &Intercepts::default(), &[]).is_err());
    }
}
