use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSample;
use super::model::{stack_features, DemodulatorModel};
use crate::error::{Error, Result};
use crate::nn::layers::cross_entropy;
use crate::nn::optim::{Adam, PlateauScheduler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the weights that were returned.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }
}

/// Mean loss and accuracy in inference mode, evaluated in chunks.
pub fn evaluate(model: &DemodulatorModel, x: &Array3<f64>, labels: &[u8]) -> Result<(f64, f64)> {
    if labels.is_empty() {
        return Err(Error::arg("labels", "nothing to evaluate"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (start, chunk) in labels.chunks(512).enumerate() {
        let s = start * 512;
        let probs = model.predict(x.slice(ndarray::s![s..s + chunk.len(), .., ..]))?;
        for (p, &y) in probs.rows().into_iter().zip(chunk) {
            loss += cross_entropy([p[0], p[1]], y);
            let pred = u8::from(p[1] > p[0]);
            correct += usize::from(pred == y);
        }
    }
    Ok((loss / labels.len() as f64, correct as f64 / labels.len() as f64))
}

/// Mini-batch Adam with a plateau schedule on held-out loss. Returns the
/// weights of the epoch with the lowest validation loss.
pub fn train(
    init: &DemodulatorModel,
    samples: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<(DemodulatorModel, TrainingHistory)> {
    if samples.is_empty() {
        return Err(Error::arg("samples", "empty dataset"));
    }
    if cfg.batch_size < 2 {
        return Err(Error::arg("batch_size", "batch normalization needs at least two samples"));
    }
    if cfg.epochs == 0 {
        return Err(Error::arg("epochs", "must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::arg("validation_fraction", "must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((samples.len() as f64 * cfg.validation_fraction).round() as usize).max(1).min(samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    if train_idx.len() < 2 {
        return Err(Error::arg("samples", "need at least two training samples"));
    }
    let beta = init.beta();
    let gather = |idx: &[usize]| -> Result<(Array3<f64>, Vec<u8>)> {
        let x = stack_features(idx.iter().map(|&i| &samples[i].feature), beta)?;
        Ok((x, idx.iter().map(|&i| samples[i].label.as_u8()).collect()))
    };
    let (x_train, y_train) = gather(train_idx)?;
    let (x_val, y_val) = gather(val_idx)?;

    let mut model = init.clone();
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let mut scheduler = PlateauScheduler::new(cfg.learning_rate);
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, DemodulatorModel)> = None;
    let mut perm: Vec<usize> = (0..y_train.len()).collect();

    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in perm.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let xb = x_train.select(Axis(0), batch);
            let yb: Vec<u8> = batch.iter().map(|&i| y_train[i]).collect();
            let tape = model.forward_train(xb.view())?;
            let grads = model.backward(&tape, &yb)?;
            adam.step(model.params_mut(), &grads.params)?;
            model.update_running_stats(&grads.bn1_stats, &grads.bn2_stats);
            loss_sum += grads.loss * batch.len() as f64;
            seen += batch.len();
        }
        let (val_loss, val_accuracy) = evaluate(&model, &x_val, &y_val)?;
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            val_accuracy,
            learning_rate: adam.learning_rate,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            history.best_epoch = epoch;
        }
        adam.learning_rate = scheduler.observe(val_loss);
    }
    let mut out = best.expect("at least one epoch").1;
    out.round_to_storage();
    Ok((out, history))
}
