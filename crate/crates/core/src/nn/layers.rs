//! Batched forward/backward kernels for the demodulator's layer set.
//!
//! Activations are `(batch, channels, length)` arrays. Every `*_forward`
//! returns the cache its matching `*_backward` needs.

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};

use crate::error::{Error, Result};

fn check(cond: bool, expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::shape(expected, actual))
    }
}

// ---------------------------------------------------------------------------
// 1-D convolution (valid padding, stride 1)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Array2<f64>,
    in_shape: (usize, usize, usize),
}

/// `z(m, j) = Σ_d Σ_l W(m, d, l)·x(d, j + l) + b(m)` per batch element.
pub fn conv1d_forward(
    x: ArrayView3<f64>,
    w: ArrayView3<f64>,
    b: ArrayView1<f64>,
) -> Result<(Array3<f64>, ConvCache)> {
    let (batch, c_in, l_in) = x.dim();
    let (c_out, wc_in, k) = w.dim();
    check(wc_in == c_in, ("C_in", c_in), ("weight C_in", wc_in))?;
    check(b.len() == c_out, ("bias", c_out), b.len())?;
    check(k >= 1 && l_in >= k, ("L_in >= k", k), l_in)?;
    let l_out = l_in - k + 1;

    let mut cols = Array2::<f64>::zeros((c_in * k, batch * l_out));
    for bi in 0..batch {
        for d in 0..c_in {
            for l in 0..k {
                cols.slice_mut(s![d * k + l, bi * l_out..(bi + 1) * l_out])
                    .assign(&x.slice(s![bi, d, l..l + l_out]));
            }
        }
    }
    let w2 = w.to_shape((c_out, c_in * k)).expect("contiguous weight");
    let out2 = w2.dot(&cols);
    let mut out = Array3::<f64>::zeros((batch, c_out, l_out));
    for bi in 0..batch {
        let src = out2.slice(s![.., bi * l_out..(bi + 1) * l_out]);
        let mut dst = out.index_axis_mut(Axis(0), bi);
        Zip::from(dst.rows_mut())
            .and(src.rows())
            .and(&b)
            .for_each(|mut d, s, &bias| {
                Zip::from(&mut d).and(&s).for_each(|o, &v| *o = v + bias);
            });
    }
    Ok((
        out,
        ConvCache {
            cols,
            in_shape: (batch, c_in, l_in),
        },
    ))
}

/// Returns `(dx, dW, db)`.
pub fn conv1d_backward(
    cache: &ConvCache,
    w: ArrayView3<f64>,
    dy: ArrayView3<f64>,
) -> Result<(Array3<f64>, Array3<f64>, Array1<f64>)> {
    let (batch, c_in, l_in) = cache.in_shape;
    let (c_out, _, k) = w.dim();
    let l_out = l_in - k + 1;
    check(dy.dim() == (batch, c_out, l_out), (batch, c_out, l_out), dy.dim())?;

    let mut dy2 = Array2::<f64>::zeros((c_out, batch * l_out));
    for bi in 0..batch {
        dy2.slice_mut(s![.., bi * l_out..(bi + 1) * l_out])
            .assign(&dy.index_axis(Axis(0), bi));
    }
    let w2 = w.to_shape((c_out, c_in * k)).expect("contiguous weight");
    let dw = dy2
        .dot(&cache.cols.t())
        .into_shape_with_order((c_out, c_in, k))
        .expect("weight shape");
    let db = dy2.sum_axis(Axis(1));
    let dcols = w2.t().dot(&dy2);
    let mut dx = Array3::<f64>::zeros((batch, c_in, l_in));
    for bi in 0..batch {
        for d in 0..c_in {
            for l in 0..k {
                let src = dcols.slice(s![d * k + l, bi * l_out..(bi + 1) * l_out]);
                let mut dst = dx.slice_mut(s![bi, d, l..l + l_out]);
                dst += &src;
            }
        }
    }
    Ok((dx, dw, db))
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch, length) per channel
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Array3<f64>,
    inv_std: Array1<f64>,
}

/// Per-channel batch statistics; variance is the biased estimate used for
/// normalization, `unbiased_var` feeds the running average.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub unbiased_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: Array1::zeros(channels),
            var: Array1::ones(channels),
        }
    }

    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        Zip::from(&mut self.mean)
            .and(&batch.mean)
            .for_each(|r, &m| *r = (1.0 - momentum) * *r + momentum * m);
        Zip::from(&mut self.var)
            .and(&batch.unbiased_var)
            .for_each(|r, &v| *r = (1.0 - momentum) * *r + momentum * v);
    }
}

pub fn batchnorm_train(
    x: ArrayView3<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    eps: f64,
) -> Result<(Array3<f64>, BnCache, BatchStats)> {
    let (batch, c, len) = x.dim();
    check(gamma.len() == c && beta.len() == c, c, (gamma.len(), beta.len()))?;
    let m = batch * len;
    if m < 2 {
        return Err(Error::arg(
            "batch",
            "training-mode batch norm needs at least two values per channel",
        ));
    }
    let mut xhat = Array3::<f64>::zeros((batch, c, len));
    let mut y = Array3::<f64>::zeros((batch, c, len));
    let mut inv_std = Array1::<f64>::zeros(c);
    let mut mean = Array1::<f64>::zeros(c);
    let mut unbiased_var = Array1::<f64>::zeros(c);
    for ch in 0..c {
        let xc = x.index_axis(Axis(1), ch);
        let mu = xc.sum() / m as f64;
        let var = xc.fold(0.0, |acc, &v| acc + (v - mu) * (v - mu)) / m as f64;
        let is = 1.0 / (var + eps).sqrt();
        mean[ch] = mu;
        unbiased_var[ch] = var * m as f64 / (m - 1) as f64;
        inv_std[ch] = is;
        let (g, bt) = (gamma[ch], beta[ch]);
        Zip::from(xhat.index_axis_mut(Axis(1), ch))
            .and(y.index_axis_mut(Axis(1), ch))
            .and(&xc)
            .for_each(|h, o, &v| {
                *h = (v - mu) * is;
                *o = g * *h + bt;
            });
    }
    Ok((y, BnCache { xhat, inv_std }, BatchStats { mean, unbiased_var }))
}

pub fn batchnorm_infer(
    x: ArrayView3<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running: &RunningStats,
    eps: f64,
) -> Result<Array3<f64>> {
    let c = x.dim().1;
    check(gamma.len() == c && running.mean.len() == c, c, gamma.len())?;
    let mut y = x.to_owned();
    for ch in 0..c {
        let scale = gamma[ch] / (running.var[ch] + eps).sqrt();
        let shift = beta[ch] - running.mean[ch] * scale;
        y.index_axis_mut(Axis(1), ch)
            .mapv_inplace(|v| v * scale + shift);
    }
    Ok(y)
}

/// Single entry point matching the train/infer contract; updates `running`
/// in train mode.
pub fn batchnorm_forward(
    x: ArrayView3<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running: &mut RunningStats,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<Array3<f64>> {
    match mode {
        Mode::Train => {
            let (y, _, stats) = batchnorm_train(x, gamma, beta, eps)?;
            running.update(&stats, momentum);
            Ok(y)
        }
        Mode::Infer => batchnorm_infer(x, gamma, beta, running, eps),
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    cache: &BnCache,
    gamma: ArrayView1<f64>,
    dy: ArrayView3<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let (batch, c, len) = dy.dim();
    let m = (batch * len) as f64;
    let mut dx = Array3::<f64>::zeros((batch, c, len));
    let mut dgamma = Array1::<f64>::zeros(c);
    let mut dbeta = Array1::<f64>::zeros(c);
    for ch in 0..c {
        let dyc = dy.index_axis(Axis(1), ch);
        let xh = cache.xhat.index_axis(Axis(1), ch);
        let sum_dy = dyc.sum();
        let sum_dy_xh = Zip::from(&dyc)
            .and(&xh)
            .fold(0.0, |acc, &d, &h| acc + d * h);
        dgamma[ch] = sum_dy_xh;
        dbeta[ch] = sum_dy;
        let k = gamma[ch] * cache.inv_std[ch] / m;
        Zip::from(dx.index_axis_mut(Axis(1), ch))
            .and(&dyc)
            .and(&xh)
            .for_each(|o, &d, &h| *o = k * (m * d - sum_dy - h * sum_dy_xh));
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation; zero at and below 0.
pub fn relu_backward<D: ndarray::Dimension>(
    pre: &ndarray::Array<f64, D>,
    dy: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx)
        .and(pre)
        .for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
    dx
}

// ---------------------------------------------------------------------------
// Multi-head self-attention over channel tokens
// ---------------------------------------------------------------------------

/// Projection weights: `w_q`, `w_k`, `w_v` are `L × (h·d_h)` with head `i`
/// in columns `i·d_h..(i+1)·d_h`; `w_o` is `(h·d_h) × L`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub w_q: ArrayView2<'a, f64>,
    pub w_k: ArrayView2<'a, f64>,
    pub w_v: ArrayView2<'a, f64>,
    pub w_o: ArrayView2<'a, f64>,
    pub heads: usize,
    pub head_dim: usize,
}

impl AttentionWeights<'_> {
    fn validate(&self, len: usize) -> Result<()> {
        let hd = self.heads * self.head_dim;
        if self.heads == 0 || self.head_dim == 0 {
            return Err(Error::arg("heads", "need h ≥ 1 and d_h ≥ 1"));
        }
        for w in [self.w_q, self.w_k, self.w_v] {
            check(w.dim() == (len, hd), (len, hd), w.dim())?;
        }
        check(self.w_o.dim() == (hd, len), (hd, len), self.w_o.dim())
    }
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    x2: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array4<f64>,
    zcat: Array2<f64>,
    dims: (usize, usize, usize),
}

impl AttnCache {
    /// Attention matrices, `(batch, head, n, n)`.
    pub fn attention(&self) -> &Array4<f64> {
        &self.attn
    }
}

fn softmax_rows_inplace(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Tokens are the `n` channels, features the `L` positions; the
/// attention matrix of each head is `n × n`.
pub fn mhsa_forward(x: ArrayView3<f64>, p: AttentionWeights<'_>) -> Result<(Array3<f64>, AttnCache)> {
    let (batch, n, len) = x.dim();
    p.validate(len)?;
    let (h, dh) = (p.heads, p.head_dim);
    let x2 = x
        .to_shape((batch * n, len))
        .expect("contiguous activations")
        .into_owned();
    let q = x2.dot(&p.w_q);
    let k = x2.dot(&p.w_k);
    let v = x2.dot(&p.w_v);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut attn = Array4::<f64>::zeros((batch, h, n, n));
    let mut zcat = Array2::<f64>::zeros((batch * n, h * dh));
    for bi in 0..batch {
        let rows = bi * n..(bi + 1) * n;
        for hi in 0..h {
            let cols = hi * dh..(hi + 1) * dh;
            let qb = q.slice(s![rows.clone(), cols.clone()]);
            let kb = k.slice(s![rows.clone(), cols.clone()]);
            let vb = v.slice(s![rows.clone(), cols.clone()]);
            let mut scores = qb.dot(&kb.t());
            scores *= scale;
            softmax_rows_inplace(&mut scores);
            zcat.slice_mut(s![rows.clone(), cols]).assign(&scores.dot(&vb));
            attn.slice_mut(s![bi, hi, .., ..]).assign(&scores);
        }
    }
    let out = zcat
        .dot(&p.w_o)
        .into_shape_with_order((batch, n, len))
        .expect("output shape");
    Ok((
        out,
        AttnCache {
            x2,
            q,
            k,
            v,
            attn,
            zcat,
            dims: (batch, n, len),
        },
    ))
}

pub struct AttnGrads {
    pub dx: Array3<f64>,
    pub dw_q: Array2<f64>,
    pub dw_k: Array2<f64>,
    pub dw_v: Array2<f64>,
    pub dw_o: Array2<f64>,
}

pub fn mhsa_backward(cache: &AttnCache, p: AttentionWeights<'_>, dy: ArrayView3<f64>) -> Result<AttnGrads> {
    let (batch, n, len) = cache.dims;
    check(dy.dim() == cache.dims, cache.dims, dy.dim())?;
    let (h, dh) = (p.heads, p.head_dim);
    let scale = 1.0 / (dh as f64).sqrt();
    let dy2 = dy.to_shape((batch * n, len)).expect("contiguous gradient");
    let dw_o = cache.zcat.t().dot(&dy2);
    let dzcat = dy2.dot(&p.w_o.t());
    let mut dq = Array2::<f64>::zeros((batch * n, h * dh));
    let mut dk = Array2::<f64>::zeros((batch * n, h * dh));
    let mut dv = Array2::<f64>::zeros((batch * n, h * dh));
    for bi in 0..batch {
        let rows = bi * n..(bi + 1) * n;
        for hi in 0..h {
            let cols = hi * dh..(hi + 1) * dh;
            let a = cache.attn.slice(s![bi, hi, .., ..]);
            let qb = cache.q.slice(s![rows.clone(), cols.clone()]);
            let kb = cache.k.slice(s![rows.clone(), cols.clone()]);
            let vb = cache.v.slice(s![rows.clone(), cols.clone()]);
            let dz = dzcat.slice(s![rows.clone(), cols.clone()]);
            let da = dz.dot(&vb.t());
            dv.slice_mut(s![rows.clone(), cols.clone()])
                .assign(&a.t().dot(&dz));
            let mut ds = Array2::<f64>::zeros((n, n));
            for r in 0..n {
                let dot = a.row(r).dot(&da.row(r));
                for c in 0..n {
                    ds[[r, c]] = a[[r, c]] * (da[[r, c]] - dot) * scale;
                }
            }
            dq.slice_mut(s![rows.clone(), cols.clone()])
                .assign(&ds.dot(&kb));
            dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qb));
        }
    }
    let dw_q = cache.x2.t().dot(&dq);
    let dw_k = cache.x2.t().dot(&dk);
    let dw_v = cache.x2.t().dot(&dv);
    let dx2 = dq.dot(&p.w_q.t()) + dk.dot(&p.w_k.t()) + dv.dot(&p.w_v.t());
    Ok(AttnGrads {
        dx: dx2
            .into_shape_with_order((batch, n, len))
            .expect("input shape"),
        dw_q,
        dw_k,
        dw_v,
        dw_o,
    })
}

// ---------------------------------------------------------------------------
// Pooling, dense layers, classifier head
// ---------------------------------------------------------------------------

/// Mean over the length axis: `(B, n, L) → (B, n)`.
pub fn gap(x: ArrayView3<f64>) -> Result<Array2<f64>> {
    if x.dim().2 == 0 {
        return Err(Error::arg("input", "pooling over an empty axis"));
    }
    Ok(x.mean_axis(Axis(2)).expect("nonempty axis"))
}

pub fn gap_backward(dy: ArrayView2<f64>, len: usize) -> Array3<f64> {
    let (batch, n) = dy.dim();
    let inv = 1.0 / len as f64;
    Array3::from_shape_fn((batch, n, len), |(b, m, _)| dy[[b, m]] * inv)
}

/// `y = x·Wᵀ + b` with `W` shaped `(out, in)`.
pub fn fc_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array2<f64>> {
    check(x.ncols() == w.ncols(), w.ncols(), x.ncols())?;
    check(b.len() == w.nrows(), w.nrows(), b.len())?;
    Ok(x.dot(&w.t()) + &b)
}

/// Returns `(dx, dW, db)`.
pub fn fc_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    (dy.dot(&w), dy.t().dot(&x), dy.sum_axis(Axis(0)))
}

/// Row-wise softmax of a `(B, classes)` logit matrix.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    softmax_rows_inplace(&mut p);
    p
}

pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy (natural log) of `prob[1]` against `label`.
pub fn cross_entropy(prob: [f64; 2], label: u8) -> f64 {
    let p = prob[1].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean cross-entropy over a batch and its gradient w.r.t. the logits,
/// `(softmax − one_hot) / B`.
pub fn cross_entropy_batch(probs: ArrayView2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    let batch = probs.nrows();
    check(labels.len() == batch && probs.ncols() == 2, (batch, 2), (labels.len(), probs.ncols()))?;
    let mut loss = 0.0;
    let mut grad = probs.to_owned();
    for (i, &lab) in labels.iter().enumerate() {
        loss += cross_entropy([probs[[i, 0]], probs[[i, 1]]], lab);
        grad[[i, lab as usize]] -= 1.0;
    }
    grad /= batch as f64;
    Ok((loss / batch as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, arr3, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random3(rng: &mut ChaCha8Rng, d: (usize, usize, usize)) -> Array3<f64> {
        Array::from_shape_fn(d, |_| rng.random_range(-1.0..1.0))
    }

    fn random2(rng: &mut ChaCha8Rng, d: (usize, usize)) -> Array2<f64> {
        Array::from_shape_fn(d, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn conv_hand_example() {
        let x = arr3(&[[[1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 0.0, 1.0]]]);
        let w = Array3::ones((1, 2, 3));
        let (y, _) = conv1d_forward(x.view(), w.view(), arr1(&[0.0]).view()).unwrap();
        assert_eq!(y, arr3(&[[[7.0, 11.0]]]));
    }

    #[test]
    fn conv_identity_filter_and_lengths() {
        let x = arr3(&[[[1.0, -2.0, 3.5]]]);
        let (y, _) = conv1d_forward(x.view(), Array3::ones((1, 1, 1)).view(), arr1(&[0.0]).view()).unwrap();
        assert_eq!(y, x);

        let x = Array3::zeros((1, 2, 128));
        let (c1, _) = conv1d_forward(x.view(), Array3::zeros((32, 2, 3)).view(), Array1::zeros(32).view()).unwrap();
        assert_eq!(c1.dim(), (1, 32, 126));
        let (c2, _) = conv1d_forward(c1.view(), Array3::zeros((32, 32, 6)).view(), Array1::zeros(32).view()).unwrap();
        assert_eq!(c2.dim(), (1, 32, 121));

        assert!(conv1d_forward(x.view(), Array3::zeros((4, 3, 3)).view(), Array1::zeros(4).view()).is_err());
    }

    #[test]
    fn batchnorm_examples() {
        let x = arr3(&[[[1.0]], [[3.0]]]);
        let (y, _, _) = batchnorm_train(x.view(), arr1(&[1.0]).view(), arr1(&[0.0]).view(), 0.0).unwrap();
        assert_eq!(y, arr3(&[[[-1.0]], [[1.0]]]));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random3(&mut rng, (4, 3, 5)) * 3.0 + 2.0;
        let (y, _, _) = batchnorm_train(x.view(), Array1::ones(3).view(), Array1::zeros(3).view(), 1e-5).unwrap();
        for ch in 0..3 {
            let yc = y.index_axis(Axis(1), ch);
            let m = yc.mean().unwrap();
            let v = yc.mapv(|a| (a - m) * (a - m)).mean().unwrap();
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }

        let running = RunningStats::new(3);
        let y = batchnorm_infer(x.view(), arr1(&[2.0, 2.0, 2.0]).view(), arr1(&[1.0, 1.0, 1.0]).view(), &running, 0.0).unwrap();
        assert_eq!(y, x.mapv(|a| 2.0 * a + 1.0));

        let single = arr3(&[[[1.0]]]);
        assert!(batchnorm_train(single.view(), arr1(&[1.0]).view(), arr1(&[0.0]).view(), 1e-5).is_err());
    }

    #[test]
    fn batchnorm_forward_updates_running_stats() {
        let x = arr3(&[[[1.0, 3.0]], [[5.0, 7.0]]]);
        let mut running = RunningStats::new(1);
        batchnorm_forward(x.view(), arr1(&[1.0]).view(), arr1(&[0.0]).view(), &mut running, Mode::Train, 1e-5, 0.1).unwrap();
        assert!((running.mean[0] - 0.4).abs() < 1e-12);
        // unbiased variance of {1,3,5,7} is 20/3
        assert!((running.var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
        let before = running.clone();
        batchnorm_forward(x.view(), arr1(&[1.0]).view(), arr1(&[0.0]).view(), &mut running, Mode::Infer, 1e-5, 0.1).unwrap();
        assert_eq!(before, running);
    }

    #[test]
    fn relu_examples() {
        let x = arr1(&[-1.0, 2.0, 0.0]);
        assert_eq!(relu(&x), arr1(&[0.0, 2.0, 0.0]));
        assert_eq!(relu(&relu(&x)), relu(&x));
        assert_eq!(relu_backward(&x, &arr1(&[5.0, 5.0, 5.0])), arr1(&[0.0, 5.0, 0.0]));
    }

    #[test]
    fn attention_hand_example() {
        let x = arr3(&[[[1.0], [1.0]]]);
        let one = arr2(&[[1.0]]);
        let p = AttentionWeights { w_q: one.view(), w_k: one.view(), w_v: one.view(), w_o: one.view(), heads: 1, head_dim: 1 };
        let (y, cache) = mhsa_forward(x.view(), p).unwrap();
        assert_eq!(y, arr3(&[[[1.0], [1.0]]]));
        assert_eq!(cache.attention().slice(s![0, 0, .., ..]), arr2(&[[0.5, 0.5], [0.5, 0.5]]));
    }

    /// Triple-loop reference for multi-head attention, one sample.
    fn naive_mhsa(x: &Array2<f64>, wq: &Array2<f64>, wk: &Array2<f64>, wv: &Array2<f64>, wo: &Array2<f64>, h: usize, dh: usize) -> Array2<f64> {
        let (n, l) = x.dim();
        let mut zcat = vec![vec![0.0; h * dh]; n];
        for head in 0..h {
            let proj = |w: &Array2<f64>| {
                let mut m = vec![vec![0.0; dh]; n];
                for i in 0..n {
                    for j in 0..dh {
                        for t in 0..l {
                            m[i][j] += x[[i, t]] * w[[t, head * dh + j]];
                        }
                    }
                }
                m
            };
            let (q, k, v) = (proj(wq), proj(wk), proj(wv));
            for i in 0..n {
                let mut s = vec![0.0; n];
                for (jj, sv) in s.iter_mut().enumerate() {
                    for d in 0..dh {
                        *sv += q[i][d] * k[jj][d];
                    }
                    *sv /= (dh as f64).sqrt();
                }
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
                let tot: f64 = e.iter().sum();
                for d in 0..dh {
                    for jj in 0..n {
                        zcat[i][head * dh + d] += e[jj] / tot * v[jj][d];
                    }
                }
            }
        }
        let mut out = Array2::zeros((n, l));
        for i in 0..n {
            for t in 0..l {
                for c in 0..h * dh {
                    out[[i, t]] += zcat[i][c] * wo[[c, t]];
                }
            }
        }
        out
    }

    #[test]
    fn attention_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 1..=4 {
            for l in 1..=5 {
                for h in 1..=2 {
                    for dh in 1..=3 {
                        let x = random3(&mut rng, (2, n, l));
                        let wq = random2(&mut rng, (l, h * dh));
                        let wk = random2(&mut rng, (l, h * dh));
                        let wv = random2(&mut rng, (l, h * dh));
                        let wo = random2(&mut rng, (h * dh, l));
                        let p = AttentionWeights { w_q: wq.view(), w_k: wk.view(), w_v: wv.view(), w_o: wo.view(), heads: h, head_dim: dh };
                        let (y, cache) = mhsa_forward(x.view(), p).unwrap();
                        for b in 0..2 {
                            let oracle = naive_mhsa(&x.index_axis(Axis(0), b).to_owned(), &wq, &wk, &wv, &wo, h, dh);
                            let diff = (&y.index_axis(Axis(0), b) - &oracle).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
                            assert!(diff < 1e-10, "n={n} l={l} h={h} dh={dh}: {diff}");
                        }
                        for row in cache.attention().lanes(Axis(3)) {
                            assert!((row.sum() - 1.0).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pooling_and_dense() {
        assert_eq!(gap(arr3(&[[[2.0, 4.0, 6.0]]]).view()).unwrap(), arr2(&[[4.0]]));
        assert_eq!(gap(arr3(&[[[2.0], [5.0]]]).view()).unwrap(), arr2(&[[2.0, 5.0]]));
        assert_eq!(gap(arr3(&[[[6.0, 2.0, 4.0]]]).view()).unwrap(), arr2(&[[4.0]]));

        let x = arr2(&[[1.0, -2.0, 3.0]]);
        let eye = Array2::eye(3);
        assert_eq!(fc_forward(x.view(), eye.view(), Array1::zeros(3).view()).unwrap(), x);
        let b = arr1(&[0.5, -0.5]);
        assert_eq!(fc_forward(x.view(), Array2::zeros((2, 3)).view(), b.view()).unwrap(), arr2(&[[0.5, -0.5]]));
        assert!(fc_forward(x.view(), Array2::zeros((2, 4)).view(), b.view()).is_err());
    }

    #[test]
    fn softmax_and_loss() {
        let p = softmax(arr2(&[[0.0, 0.0], [2f64.ln(), 0.0]]).view());
        assert_eq!(p.row(0).to_vec(), vec![0.5, 0.5]);
        assert!((p[[1, 0]] - 2.0 / 3.0).abs() < 1e-15 && (p[[1, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert!((cross_entropy([0.5, 0.5], 1) - 2f64.ln()).abs() < 1e-15);
        assert!(cross_entropy([1e-12, 1.0 - 1e-12], 1) < 1e-11);
        assert!(cross_entropy([1.0, 0.0], 1).is_finite());
        let (_, g) = cross_entropy_batch(p.view(), &[1, 0]).unwrap();
        assert!((g[[0, 1]] - (0.5 - 1.0) / 2.0).abs() < 1e-15);
        assert!((g[[1, 0]] - (2.0 / 3.0 - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn logit_gradient_matches_finite_difference() {
        let logits = arr2(&[[0.3, -1.2]]);
        let (_, g) = cross_entropy_batch(softmax(logits.view()).view(), &[1]).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut up = logits.clone();
            up[[0, j]] += h;
            let mut dn = logits.clone();
            dn[[0, j]] -= h;
            let lu = cross_entropy_batch(softmax(up.view()).view(), &[1]).unwrap().0;
            let ld = cross_entropy_batch(softmax(dn.view()).view(), &[1]).unwrap().0;
            assert!(((lu - ld) / (2.0 * h) - g[[0, j]]).abs() < 1e-8);
        }
    }
}
