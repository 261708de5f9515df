//! Differentiable building blocks with hand-written backward passes.
//!
//! Every forward function returns its output together with a cache holding
//! exactly what the matching backward function needs. Backward functions
//! accumulate parameter gradients into a gradient structure of the same shape
//! as the layer (`+=`), and return gradients with respect to their inputs.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Period of the daytime encoding, in minutes.
pub const MINUTES_PER_DAY: f64 = 1440.0;

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Access to the trainable tensors of a layer, in a fixed order.
pub trait Tensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn tensor_names(&self, prefix: &str) -> Vec<String>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Sets every parameter to zero, keeping shapes.
    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

/// Exact GELU, `0.5 x (1 + erf(x / sqrt 2))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Derivative of [`gelu`]: `Phi(x) + x phi(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dot product with four independent accumulators, which lets the compiler
/// vectorize the reduction.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let head = n - n % 4;
    for (x, y) in a[..head].chunks_exact(4).zip(b[..head].chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = a[head..].iter().zip(&b[head..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Affine map `y = W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// Square identity map with zero bias.
    pub fn identity(dim: usize) -> Self {
        let mut layer = Self::zeros(dim, dim);
        for i in 0..dim {
            layer.weight[i * dim + i] = 1.0;
        }
        layer
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        check_len("linear weight", weight.len(), in_dim * out_dim)?;
        check_len("linear bias", bias.len(), out_dim)?;
        Ok(Self { in_dim, out_dim, weight, bias })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("linear input", x.len(), self.in_dim)?;
        Ok(self
            .weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect())
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy` and returns `Wᵀ dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(dy.len(), self.out_dim);
        let n = self.in_dim;
        let mut dx = vec![0.0; n];
        let rows = self.weight.chunks_exact(n);
        let grad_rows = grad.weight.chunks_exact_mut(n);
        for ((row, grad_row), (&g, db)) in rows.zip(grad_rows).zip(dy.iter().zip(grad.bias.iter_mut())) {
            *db += g;
            if g != 0.0 {
                axpy(g, x, grad_row);
                axpy(g, row, &mut dx);
            }
        }
        dx
    }
}

/// `y += a x` over equal-length slices.
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    let n = y.len();
    let x = &x[..n];
    for i in 0..n {
        y[i] += a * x[i];
    }
}

impl Tensors for Linear {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        vec![format!("{prefix}.weight"), format!("{prefix}.bias")]
    }
}

/// Samples an inverted-dropout mask: each entry is 0 with probability `rate`
/// and `1 / (1 - rate)` otherwise. Returns `None` when dropout is inactive.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, mode: Mode, rng: &mut R) -> Option<Vec<f64>> {
    if mode == Mode::Eval || rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some((0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect())
}

/// Two blocks of `dropout(gelu(linear(x)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBlockPair {
    pub block1: Linear,
    pub block2: Linear,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Vec<f64>,
    pre1: Vec<f64>,
    mask1: Option<Vec<f64>>,
    hidden: Vec<f64>,
    pre2: Vec<f64>,
    mask2: Option<Vec<f64>>,
}

fn activate(pre: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => pre.iter().zip(m).map(|(&p, &k)| gelu(p) * k).collect(),
        None => pre.iter().map(|&p| gelu(p)).collect(),
    }
}

fn activate_backward(pre: &[f64], mask: Option<&Vec<f64>>, dy: &[f64]) -> Vec<f64> {
    match mask {
        Some(m) => pre.iter().zip(m).zip(dy).map(|((&p, &k), &g)| g * k * gelu_grad(p)).collect(),
        None => pre.iter().zip(dy).map(|(&p, &g)| g * gelu_grad(p)).collect(),
    }
}

impl MlpBlockPair {
    pub fn new(block1: Linear, block2: Linear, dropout_rate: f64) -> Result<Self> {
        if block1.out_dim != block2.in_dim {
            return Err(Error::Shape(format!(
                "mlp hidden width mismatch: block1 emits {}, block2 expects {}",
                block1.out_dim, block2.in_dim
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        Ok(Self { block1, block2, dropout_rate })
    }

    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize, dropout_rate: f64) -> Self {
        Self { block1: Linear::zeros(in_dim, hidden), block2: Linear::zeros(hidden, out_dim), dropout_rate }
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], mode: Mode, rng: &mut R) -> Result<(Vec<f64>, MlpCache)> {
        let pre1 = self.block1.forward(x)?;
        let mask1 = dropout_mask(pre1.len(), self.dropout_rate, mode, rng);
        let hidden = activate(&pre1, mask1.as_ref());
        let pre2 = self.block2.forward(&hidden)?;
        let mask2 = dropout_mask(pre2.len(), self.dropout_rate, mode, rng);
        let out = activate(&pre2, mask2.as_ref());
        Ok((out, MlpCache { x: x.to_vec(), pre1, mask1, hidden, pre2, mask2 }))
    }

    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut MlpBlockPair) -> Vec<f64> {
        let dpre2 = activate_backward(&cache.pre2, cache.mask2.as_ref(), dy);
        let dhidden = self.block2.backward(&cache.hidden, &dpre2, &mut grad.block2);
        let dpre1 = activate_backward(&cache.pre1, cache.mask1.as_ref(), &dhidden);
        self.block1.backward(&cache.x, &dpre1, &mut grad.block1)
    }
}

impl Tensors for MlpBlockPair {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.block1.tensors();
        out.extend(self.block2.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.block1.tensors_mut();
        out.extend(self.block2.tensors_mut());
        out
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let mut out = self.block1.tensor_names(&format!("{prefix}.block1"));
        out.extend(self.block2.tensor_names(&format!("{prefix}.block2")));
        out
    }
}

/// Bare sigmoid cross-attention on a single head: `sigmoid(q·k / sqrt d) v`.
///
/// There are no projections here; the gate is a scalar in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaHead {
    pub head_dim: usize,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct ScaCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    gate: f64,
    inv_sqrt_scale: f64,
}

impl ScaCache {
    pub fn gate(&self) -> f64 {
        self.gate
    }
}

impl ScaHead {
    pub fn new(head_dim: usize, scale: f64) -> Result<Self> {
        if head_dim == 0 || !(scale > 0.0) {
            return Err(Error::Config(format!("invalid attention head: dim {head_dim}, scale {scale}")));
        }
        Ok(Self { head_dim, scale })
    }

    pub fn forward(&self, q: &[f64], k: &[f64], v: &[f64]) -> Result<(Vec<f64>, ScaCache)> {
        check_len("attention query", q.len(), self.head_dim)?;
        check_len("attention key", k.len(), self.head_dim)?;
        check_len("attention value", v.len(), self.head_dim)?;
        let inv_sqrt_scale = 1.0 / self.scale.sqrt();
        let gate = sigmoid(dot(q, k) * inv_sqrt_scale);
        let out = v.iter().map(|x| gate * x).collect();
        Ok((out, ScaCache { q: q.to_vec(), k: k.to_vec(), v: v.to_vec(), gate, inv_sqrt_scale }))
    }

    /// Returns `(dq, dk, dv)`.
    pub fn backward(&self, cache: &ScaCache, dy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = cache.gate;
        let dv = dy.iter().map(|d| g * d).collect();
        let dlogit = dot(dy, &cache.v) * g * (1.0 - g) * cache.inv_sqrt_scale;
        let dq = cache.k.iter().map(|k| dlogit * k).collect();
        let dk = cache.q.iter().map(|q| dlogit * q).collect();
        (dq, dk, dv)
    }
}

/// Convenience wrapper over [`ScaHead`] for one-off evaluation.
pub fn sca_single_head(q: &[f64], k: &[f64], v: &[f64], scale: f64) -> Result<Vec<f64>> {
    let head = ScaHead::new(q.len(), scale)?;
    Ok(head.forward(q, k, v)?.0)
}

/// Multi-head sigmoid cross-attention.
///
/// Query, key and value are each projected once (`N -> N`), split into
/// `num_heads` chunks of `N / num_heads`, gated per chunk with scale equal to
/// the head width, concatenated and passed through the output projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadSca {
    pub num_heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct MhaCache {
    q_in: Vec<f64>,
    k_in: Vec<f64>,
    v_in: Vec<f64>,
    heads: Vec<ScaCache>,
    concat: Vec<f64>,
}

impl MhaCache {
    pub fn gates(&self) -> Vec<f64> {
        self.heads.iter().map(ScaCache::gate).collect()
    }

    /// Head outputs before the output projection.
    pub fn concatenated(&self) -> &[f64] {
        &self.concat
    }
}

impl MultiHeadSca {
    pub fn zeros(dim: usize, num_heads: usize) -> Result<Self> {
        Self::from_projections(
            num_heads,
            Linear::zeros(dim, dim),
            Linear::zeros(dim, dim),
            Linear::zeros(dim, dim),
            Linear::zeros(dim, dim),
        )
    }

    pub fn from_projections(num_heads: usize, query: Linear, key: Linear, value: Linear, output: Linear) -> Result<Self> {
        let dim = query.out_dim;
        if num_heads == 0 || dim % num_heads != 0 {
            return Err(Error::Config(format!("embedding dim {dim} not divisible by {num_heads} heads")));
        }
        for (name, l) in [("query", &query), ("key", &key), ("value", &value), ("output", &output)] {
            if l.in_dim != dim || l.out_dim != dim {
                return Err(Error::Shape(format!(
                    "{name} projection is {}x{}, expected {dim}x{dim}",
                    l.out_dim, l.in_dim
                )));
            }
        }
        Ok(Self { num_heads, query, key, value, output })
    }

    pub fn dim(&self) -> usize {
        self.query.out_dim
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.num_heads
    }

    fn head(&self) -> ScaHead {
        let h = self.head_dim();
        ScaHead { head_dim: h, scale: h as f64 }
    }

    pub fn forward(&self, q: &[f64], k: &[f64], v: &[f64]) -> Result<(Vec<f64>, MhaCache)> {
        let qp = self.query.forward(q)?;
        let kp = self.key.forward(k)?;
        let vp = self.value.forward(v)?;
        let h = self.head_dim();
        let head = self.head();
        let mut concat = Vec::with_capacity(self.dim());
        let mut heads = Vec::with_capacity(self.num_heads);
        for ((qc, kc), vc) in qp.chunks_exact(h).zip(kp.chunks_exact(h)).zip(vp.chunks_exact(h)) {
            let (out, cache) = head.forward(qc, kc, vc)?;
            concat.extend(out);
            heads.push(cache);
        }
        let out = self.output.forward(&concat)?;
        Ok((out, MhaCache { q_in: q.to_vec(), k_in: k.to_vec(), v_in: v.to_vec(), heads, concat }))
    }

    /// Returns `(dq, dk, dv)` with respect to the unprojected inputs.
    pub fn backward(&self, cache: &MhaCache, dy: &[f64], grad: &mut MultiHeadSca) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dconcat = self.output.backward(&cache.concat, dy, &mut grad.output);
        let h = self.head_dim();
        let head = self.head();
        let mut dqp = Vec::with_capacity(self.dim());
        let mut dkp = Vec::with_capacity(self.dim());
        let mut dvp = Vec::with_capacity(self.dim());
        for (hc, d) in cache.heads.iter().zip(dconcat.chunks_exact(h)) {
            let (dq, dk, dv) = head.backward(hc, d);
            dqp.extend(dq);
            dkp.extend(dk);
            dvp.extend(dv);
        }
        let dq = self.query.backward(&cache.q_in, &dqp, &mut grad.query);
        let dk = self.key.backward(&cache.k_in, &dkp, &mut grad.key);
        let dv = self.value.backward(&cache.v_in, &dvp, &mut grad.value);
        (dq, dk, dv)
    }
}

impl Tensors for MultiHeadSca {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.query, &self.key, &self.value, &self.output].into_iter().flat_map(Linear::tensors).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Self { query, key, value, output, .. } = self;
        [query, key, value, output].into_iter().flat_map(Linear::tensors_mut).collect()
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        [("query", &self.query), ("key", &self.key), ("value", &self.value), ("output", &self.output)]
            .into_iter()
            .flat_map(|(n, l)| l.tensor_names(&format!("{prefix}.{n}")))
            .collect()
    }
}

/// Sinusoidal embedding of the time of day.
///
/// `e[2k] = sin(pos / 10000^(2k/n))`, `e[2k+1] = cos(...)`, where `pos` is the
/// minute of day reduced modulo 1440.
pub fn daytime_embed(minute_of_day: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::Config(format!("daytime embedding width must be even and positive, got {n}")));
    }
    if !minute_of_day.is_finite() {
        return Err(Error::Input(format!("non-finite daytime {minute_of_day}")));
    }
    let pos = minute_of_day.rem_euclid(MINUTES_PER_DAY);
    let mut out = Vec::with_capacity(n);
    for k in 0..n / 2 {
        let angle = pos / 10000f64.powf(2.0 * k as f64 / n as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}
