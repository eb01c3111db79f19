use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView1, ArrayView2, ArrayView3, Axis, Ix1, Ix2, Ix3, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chaos::Bit;
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::nn::layers::{self, AttentionWeights, AttnCache, BatchStats, BnCache, ConvCache, RunningStats};
use crate::nn::tensor::{read_tensors, write_tensors, ParamSet, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const INPUT_RMS_FLOOR: f64 = 1e-8;
const PREDICT_CHUNK: usize = 128;

/// Architecture hyperparameters; defaults are the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub filters: usize,
    pub kernel_size: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub fc_hidden: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            filters: 32,
            kernel_size: 3,
            heads: 8,
            head_dim: 64,
            fc_hidden: 64,
        }
    }
}

impl Hyperparams {
    /// Length after the first convolution.
    pub fn conv1_len(&self, beta: usize) -> usize {
        beta + 1 - self.kernel_size
    }

    /// Temporal length seen by attention: `β − 3k + 2` (β − 7 for k = 3).
    pub fn attention_len(&self, beta: usize) -> usize {
        beta + 2 - 3 * self.kernel_size
    }

    pub fn min_beta(&self) -> usize {
        3 * self.kernel_size - 1
    }
}

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const BN1_G: usize = 2;
const BN1_B: usize = 3;
const CONV2_W: usize = 4;
const CONV2_B: usize = 5;
const BN2_G: usize = 6;
const BN2_B: usize = 7;
const ATT_Q: usize = 8;
const ATT_K: usize = 9;
const ATT_V: usize = 10;
const ATT_O: usize = 11;
const FC1_W: usize = 12;
const FC1_B: usize = 13;
const FC2_W: usize = 14;
const FC2_B: usize = 15;

const PARAM_NAMES: [&str; 16] = [
    "conv1.weight",
    "conv1.bias",
    "bn1.gamma",
    "bn1.beta",
    "conv2.weight",
    "conv2.bias",
    "bn2.gamma",
    "bn2.beta",
    "attn.w_q",
    "attn.w_k",
    "attn.w_v",
    "attn.w_o",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
];

/// Layer names in the order of the shape chain.
pub const LAYERS: [&str; 9] = [
    "input", "conv1", "bn1", "conv2", "bn2", "mhsa", "gap", "fc1", "fc2",
];

/// Conv → BN → ReLU → Conv → BN → ReLU → MH-SA → GAP → FC → ReLU → FC → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodulatorModel {
    beta: usize,
    hyper: Hyperparams,
    params: ParamSet,
    bn1: RunningStats,
    bn2: RunningStats,
}

/// Everything the backward pass needs from one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    conv1: ConvCache,
    bn1: BnCache,
    bn1_stats: BatchStats,
    pre1: Array3<f64>,
    conv2: ConvCache,
    bn2: BnCache,
    bn2_stats: BatchStats,
    pre2: Array3<f64>,
    attn: AttnCache,
    attn_len: usize,
    pooled: Array2<f64>,
    fc1_pre: Array2<f64>,
    fc1_act: Array2<f64>,
    probs: Array2<f64>,
}

impl Tape {
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }
}

/// Analytic gradients of the mean batch loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub params: ParamSet,
    /// Gradient w.r.t. the row-normalized input tensor.
    pub input: Array3<f64>,
    pub bn1_stats: BatchStats,
    pub bn2_stats: BatchStats,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    beta: usize,
    hyperparams: Hyperparams,
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, dims: &[usize], std: f64) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(dims), || {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

fn uniform_tensor(rng: &mut ChaCha8Rng, dims: &[usize], bound: f64) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(dims), || rng.random_range(-bound..=bound))
}

/// Divides each row of each sample by its RMS (plus a small floor).
pub fn normalize_rows(x: ArrayView3<f64>) -> Array3<f64> {
    let mut out = x.to_owned();
    for mut row in out.lanes_mut(Axis(2)) {
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64).sqrt();
        let inv = 1.0 / (rms + INPUT_RMS_FLOOR);
        row.mapv_inplace(|v| v * inv);
    }
    out
}

/// Stacks feature tensors into a `(B, 2, β)` batch.
pub fn stack_features<'a>(features: impl IntoIterator<Item = &'a FeatureTensor>, beta: usize) -> Result<Array3<f64>> {
    let mut data = Vec::new();
    let mut count = 0;
    for f in features {
        if f.beta() != beta {
            return Err(Error::shape((2, beta), f.rows().dim()));
        }
        data.extend(f.rows().iter());
        count += 1;
    }
    Ok(Array3::from_shape_vec((count, 2, beta), data).expect("consistent batch"))
}

impl DemodulatorModel {
    /// Fresh model with deterministic initialization from `init_seed`.
    pub fn new(beta: usize, hyper: Hyperparams, init_seed: u64) -> Result<Self> {
        if hyper.filters == 0 || hyper.kernel_size == 0 || hyper.heads == 0 || hyper.head_dim == 0 || hyper.fc_hidden == 0 {
            return Err(Error::arg("hyperparams", "all dimensions must be positive"));
        }
        if beta < hyper.min_beta().max(8) {
            return Err(Error::arg(
                "beta",
                format!("β = {beta} too small, need at least {}", hyper.min_beta().max(8)),
            ));
        }
        let n = hyper.filters;
        let k = hyper.kernel_size;
        let l = hyper.attention_len(beta);
        let hd = hyper.heads * hyper.head_dim;
        let f = hyper.fc_hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let mut tensors = Vec::with_capacity(16);
        let mut push = |idx: usize, v: ArrayD<f64>| {
            debug_assert_eq!(tensors.len(), idx);
            tensors.push(Tensor::new(PARAM_NAMES[idx], v));
        };
        push(CONV1_W, gaussian_tensor(&mut rng, &[n, 2, k], he(2 * k)));
        push(CONV1_B, ArrayD::zeros(IxDyn(&[n])));
        push(BN1_G, ArrayD::ones(IxDyn(&[n])));
        push(BN1_B, ArrayD::zeros(IxDyn(&[n])));
        push(CONV2_W, gaussian_tensor(&mut rng, &[n, n, 2 * k], he(n * 2 * k)));
        push(CONV2_B, ArrayD::zeros(IxDyn(&[n])));
        push(BN2_G, ArrayD::ones(IxDyn(&[n])));
        push(BN2_B, ArrayD::zeros(IxDyn(&[n])));
        let qkv = (1.0 / l as f64).sqrt();
        push(ATT_Q, uniform_tensor(&mut rng, &[l, hd], qkv));
        push(ATT_K, uniform_tensor(&mut rng, &[l, hd], qkv));
        push(ATT_V, uniform_tensor(&mut rng, &[l, hd], qkv));
        push(ATT_O, uniform_tensor(&mut rng, &[hd, l], (1.0 / hd as f64).sqrt()));
        push(FC1_W, gaussian_tensor(&mut rng, &[f, n], he(n)));
        push(FC1_B, ArrayD::zeros(IxDyn(&[f])));
        push(FC2_W, gaussian_tensor(&mut rng, &[2, f], he(f)));
        push(FC2_B, ArrayD::zeros(IxDyn(&[2])));
        let mut params = ParamSet { tensors };
        params.round_to_f32();
        Ok(Self {
            beta,
            hyper,
            params,
            bn1: RunningStats::new(n),
            bn2: RunningStats::new(n),
        })
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.hyper
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Learnable parameter count per layer, in [`LAYERS`] order (input
    /// and pooling contribute zero).
    pub fn layer_parameter_counts(&self) -> Vec<(&'static str, usize)> {
        let c = |idx: &[usize]| idx.iter().map(|&i| self.params.tensors[i].len()).sum::<usize>();
        vec![
            ("input", 0),
            ("conv1", c(&[CONV1_W, CONV1_B])),
            ("bn1", c(&[BN1_G, BN1_B])),
            ("conv2", c(&[CONV2_W, CONV2_B])),
            ("bn2", c(&[BN2_G, BN2_B])),
            ("mhsa", c(&[ATT_Q, ATT_K, ATT_V, ATT_O])),
            ("gap", 0),
            ("fc1", c(&[FC1_W, FC1_B])),
            ("fc2", c(&[FC2_W, FC2_B])),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.params.total_len()
    }

    /// Per-layer output dimensions for a single sample.
    pub fn shape_chain(&self) -> Vec<(&'static str, Vec<usize>)> {
        let n = self.hyper.filters;
        let l1 = self.hyper.conv1_len(self.beta);
        let l2 = self.hyper.attention_len(self.beta);
        vec![
            ("input", vec![2, self.beta]),
            ("conv1", vec![n, l1]),
            ("bn1", vec![n, l1]),
            ("conv2", vec![n, l2]),
            ("bn2", vec![n, l2]),
            ("mhsa", vec![n, l2]),
            ("gap", vec![n]),
            ("fc1", vec![self.hyper.fc_hidden]),
            ("fc2", vec![2]),
        ]
    }

    fn v1(&self, i: usize) -> ArrayView1<'_, f64> {
        self.params.tensors[i].value.view().into_dimensionality::<Ix1>().expect("rank-1 parameter")
    }

    fn v2(&self, i: usize) -> ArrayView2<'_, f64> {
        self.params.tensors[i].value.view().into_dimensionality::<Ix2>().expect("rank-2 parameter")
    }

    fn v3(&self, i: usize) -> ArrayView3<'_, f64> {
        self.params.tensors[i].value.view().into_dimensionality::<Ix3>().expect("rank-3 parameter")
    }

    fn attention(&self) -> AttentionWeights<'_> {
        AttentionWeights {
            w_q: self.v2(ATT_Q),
            w_k: self.v2(ATT_K),
            w_v: self.v2(ATT_V),
            w_o: self.v2(ATT_O),
            heads: self.hyper.heads,
            head_dim: self.hyper.head_dim,
        }
    }

    fn check_input(&self, x: &ArrayView3<f64>) -> Result<()> {
        let (_, c, l) = x.dim();
        if c != 2 || l != self.beta {
            return Err(Error::shape(("B", 2, self.beta), x.dim()));
        }
        Ok(())
    }

    /// Inference-mode class probabilities, `(B, 2)`. Large batches are
    /// processed in cache-sized chunks.
    pub fn predict(&self, x: ArrayView3<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let batch = x.dim().0;
        if batch <= PREDICT_CHUNK {
            return self.predict_chunk(x);
        }
        let mut out = Array2::zeros((batch, 2));
        for start in (0..batch).step_by(PREDICT_CHUNK) {
            let end = (start + PREDICT_CHUNK).min(batch);
            let p = self.predict_chunk(x.slice(ndarray::s![start..end, .., ..]))?;
            out.slice_mut(ndarray::s![start..end, ..]).assign(&p);
        }
        Ok(out)
    }

    fn predict_chunk(&self, x: ArrayView3<f64>) -> Result<Array2<f64>> {
        let x0 = normalize_rows(x);
        let (z1, _) = layers::conv1d_forward(x0.view(), self.v3(CONV1_W), self.v1(CONV1_B))?;
        let a1 = layers::relu(&layers::batchnorm_infer(z1.view(), self.v1(BN1_G), self.v1(BN1_B), &self.bn1, BN_EPS)?);
        let (z2, _) = layers::conv1d_forward(a1.view(), self.v3(CONV2_W), self.v1(CONV2_B))?;
        let a2 = layers::relu(&layers::batchnorm_infer(z2.view(), self.v1(BN2_G), self.v1(BN2_B), &self.bn2, BN_EPS)?);
        let (att, _) = layers::mhsa_forward(a2.view(), self.attention())?;
        let pooled = layers::gap(att.view())?;
        let h = layers::relu(&layers::fc_forward(pooled.view(), self.v2(FC1_W), self.v1(FC1_B))?);
        let logits = layers::fc_forward(h.view(), self.v2(FC2_W), self.v1(FC2_B))?;
        Ok(layers::softmax(logits.view()))
    }

    /// Training-mode forward pass (batch statistics); does not touch the
    /// running statistics.
    pub fn forward_train(&self, x: ArrayView3<f64>) -> Result<Tape> {
        self.check_input(&x)?;
        let x0 = normalize_rows(x);
        let (z1, conv1) = layers::conv1d_forward(x0.view(), self.v3(CONV1_W), self.v1(CONV1_B))?;
        let (pre1, bn1, bn1_stats) = layers::batchnorm_train(z1.view(), self.v1(BN1_G), self.v1(BN1_B), BN_EPS)?;
        let a1 = layers::relu(&pre1);
        let (z2, conv2) = layers::conv1d_forward(a1.view(), self.v3(CONV2_W), self.v1(CONV2_B))?;
        let (pre2, bn2, bn2_stats) = layers::batchnorm_train(z2.view(), self.v1(BN2_G), self.v1(BN2_B), BN_EPS)?;
        let a2 = layers::relu(&pre2);
        let (att, attn) = layers::mhsa_forward(a2.view(), self.attention())?;
        let attn_len = att.dim().2;
        let pooled = layers::gap(att.view())?;
        let fc1_pre = layers::fc_forward(pooled.view(), self.v2(FC1_W), self.v1(FC1_B))?;
        let fc1_act = layers::relu(&fc1_pre);
        let logits = layers::fc_forward(fc1_act.view(), self.v2(FC2_W), self.v1(FC2_B))?;
        let probs = layers::softmax(logits.view());
        Ok(Tape {
            conv1,
            bn1,
            bn1_stats,
            pre1,
            conv2,
            bn2,
            bn2_stats,
            pre2,
            attn,
            attn_len,
            pooled,
            fc1_pre,
            fc1_act,
            probs,
        })
    }

    /// Mean cross-entropy of a recorded forward pass and its exact gradients.
    pub fn backward(&self, tape: &Tape, labels: &[u8]) -> Result<Gradients> {
        let (loss, dlogits) = layers::cross_entropy_batch(tape.probs.view(), labels)?;
        let mut grads = ParamSet::zeros_like(&self.params);
        let mut put = |idx: usize, g: ArrayD<f64>| grads.tensors[idx].value = g;

        let (dh, dw, db) = layers::fc_backward(tape.fc1_act.view(), self.v2(FC2_W), dlogits.view());
        put(FC2_W, dw.into_dyn());
        put(FC2_B, db.into_dyn());
        let dh = layers::relu_backward(&tape.fc1_pre, &dh);
        let (dpool, dw, db) = layers::fc_backward(tape.pooled.view(), self.v2(FC1_W), dh.view());
        put(FC1_W, dw.into_dyn());
        put(FC1_B, db.into_dyn());
        let datt = layers::gap_backward(dpool.view(), tape.attn_len);
        let ag = layers::mhsa_backward(&tape.attn, self.attention(), datt.view())?;
        put(ATT_Q, ag.dw_q.into_dyn());
        put(ATT_K, ag.dw_k.into_dyn());
        put(ATT_V, ag.dw_v.into_dyn());
        put(ATT_O, ag.dw_o.into_dyn());
        let da2 = layers::relu_backward(&tape.pre2, &ag.dx);
        let (dz2, dg, dbt) = layers::batchnorm_backward(&tape.bn2, self.v1(BN2_G), da2.view());
        put(BN2_G, dg.into_dyn());
        put(BN2_B, dbt.into_dyn());
        let (da1, dw, db) = layers::conv1d_backward(&tape.conv2, self.v3(CONV2_W), dz2.view())?;
        put(CONV2_W, dw.into_dyn());
        put(CONV2_B, db.into_dyn());
        let da1 = layers::relu_backward(&tape.pre1, &da1);
        let (dz1, dg, dbt) = layers::batchnorm_backward(&tape.bn1, self.v1(BN1_G), da1.view());
        put(BN1_G, dg.into_dyn());
        put(BN1_B, dbt.into_dyn());
        let (dx, dw, db) = layers::conv1d_backward(&tape.conv1, self.v3(CONV1_W), dz1.view())?;
        put(CONV1_W, dw.into_dyn());
        put(CONV1_B, db.into_dyn());
        Ok(Gradients {
            loss,
            params: grads,
            input: dx,
            bn1_stats: tape.bn1_stats.clone(),
            bn2_stats: tape.bn2_stats.clone(),
        })
    }

    /// Folds one batch's statistics into the running averages.
    pub fn update_running_stats(&mut self, bn1: &BatchStats, bn2: &BatchStats) {
        self.bn1.update(bn1, BN_MOMENTUM);
        self.bn2.update(bn2, BN_MOMENTUM);
    }

    pub fn running_stats(&self) -> (&RunningStats, &RunningStats) {
        (&self.bn1, &self.bn2)
    }

    /// Probabilities for a batch of feature tensors.
    pub fn predict_features(&self, features: &[FeatureTensor]) -> Result<Vec<[f64; 2]>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let x = stack_features(features, self.beta)?;
        let p = self.predict(x.view())?;
        Ok(p.rows().into_iter().map(|r| [r[0], r[1]]).collect())
    }

    /// MAP decision on one feature tensor; exact ties go to bit 0.
    pub fn demodulate(&self, feature: &FeatureTensor) -> Result<(Bit, [f64; 2])> {
        let p = self.predict_features(std::slice::from_ref(feature))?[0];
        Ok((decide(p), p))
    }

    /// Rounds parameters and running statistics to binary32, the storage
    /// precision, so a save/load cycle is lossless.
    pub fn round_to_storage(&mut self) {
        self.params.round_to_f32();
        for s in [&mut self.bn1, &mut self.bn2] {
            s.mean.mapv_inplace(|v| v as f32 as f64);
            s.var.mapv_inplace(|v| v as f32 as f64);
        }
    }

    fn all_tensors(&self) -> Vec<Tensor> {
        let mut out = self.params.tensors.clone();
        for (name, stats) in [("bn1", &self.bn1), ("bn2", &self.bn2)] {
            out.push(Tensor::new(format!("{name}.running_mean"), stats.mean.clone().into_dyn()));
            out.push(Tensor::new(format!("{name}.running_var"), stats.var.clone().into_dyn()));
        }
        out
    }

    /// Path of the hyperparameter sidecar that accompanies a weight file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("toml")
    }

    /// Writes weights to `path` and hyperparameters to the `.toml` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        write_tensors(&mut w, &self.all_tensors())?;
        drop(w);
        let sidecar = Sidecar {
            format_version: crate::nn::tensor::FORMAT_VERSION,
            beta: self.beta,
            hyperparams: self.hyper,
        };
        let text = toml::to_string(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(Self::sidecar_path(path), text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(Self::sidecar_path(path))?;
        let sidecar: Sidecar = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        let mut model = Self::new(sidecar.beta, sidecar.hyperparams, 0)?;
        let mut r = BufReader::new(fs::File::open(path)?);
        let tensors = read_tensors(&mut r)?;
        let expected = model.all_tensors();
        if tensors.len() != expected.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (t, e) in tensors.iter().zip(&expected) {
            if t.name != e.name || t.dims() != e.dims() {
                return Err(Error::Format(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    t.name,
                    t.dims(),
                    e.name,
                    e.dims()
                )));
            }
        }
        let mut it = tensors.into_iter();
        for slot in model.params.tensors.iter_mut() {
            *slot = it.next().expect("counted");
        }
        let mut stat = || -> Array1<f64> {
            it.next()
                .expect("counted")
                .value
                .into_dimensionality::<Ix1>()
                .expect("rank-1 statistic")
        };
        model.bn1.mean = stat();
        model.bn1.var = stat();
        model.bn2.mean = stat();
        model.bn2.var = stat();
        Ok(model)
    }
}

/// Argmax over the two class probabilities, ties resolved to 0.
pub fn decide(probs: [f64; 2]) -> Bit {
    if probs[1] > probs[0] {
        Bit::One
    } else {
        Bit::Zero
    }
}

/// Forward-then-backward session; calling `backward` first is an error.
pub struct GradientSession<'m> {
    model: &'m DemodulatorModel,
    tape: Option<Tape>,
}

impl<'m> GradientSession<'m> {
    pub fn new(model: &'m DemodulatorModel) -> Self {
        Self { model, tape: None }
    }

    pub fn forward(&mut self, x: ArrayView3<f64>) -> Result<&Array2<f64>> {
        self.tape = Some(self.model.forward_train(x)?);
        Ok(self.tape.as_ref().expect("just set").probs())
    }

    pub fn backward(&self, labels: &[u8]) -> Result<Gradients> {
        let tape = self.tape.as_ref().ok_or(Error::NoForwardPass)?;
        self.model.backward(tape, labels)
    }
}
