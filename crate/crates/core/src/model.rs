//! The sequential transformer: a recurrent encoder over observed steps
//! followed by a recurrent forecaster over the prediction horizon.
//!
//! Tensor order of [`ParameterStore`] (serialization depends on it):
//!
//! ```text
//! token_embedder.{weight,bias}
//! s0
//! time_block.attention.{query,key,value,output}.{weight,bias}
//! time_block.token_mlp.{block1,block2}.{weight,bias}
//! time_block.state_mlp.{block1,block2}.{weight,bias}
//! prediction_block.attention.{query,key,value,output}.{weight,bias}
//! prediction_block.state_mlp.{block1,block2}.{weight,bias}
//! prediction_block.output_mlp.{block1,block2}.{weight,bias}
//! regression.hidden.{weight,bias}
//! regression.output.{weight,bias}
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::GlucoseWindow;
use crate::error::{check_len, Error, Result};
use crate::nn::{
    add_assign, daytime_embed, gelu, gelu_grad, Linear, MhaCache, MlpBlockPair, MlpCache, Mode, MultiHeadSca,
    ScaCache, ScaHead, Tensors,
};

const INIT_STD: f64 = 0.02;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub observed_len: usize,
    pub forecast_len: usize,
    pub feature_count: usize,
    pub mlp_hidden: usize,
    pub regression_hidden: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    /// 88-wide, 4 heads, 30-minute horizon, glucose only. 129 537 parameters.
    fn default() -> Self {
        Self::with_width(88, 4, 24, 6, 1)
    }
}

impl ModelConfig {
    /// Config with the default proportions (`mlp_hidden = N`, `regression_hidden = N / 2`).
    pub fn with_width(embed_dim: usize, num_heads: usize, observed_len: usize, forecast_len: usize, feature_count: usize) -> Self {
        Self {
            embed_dim,
            num_heads,
            observed_len,
            forecast_len,
            feature_count,
            mlp_hidden: embed_dim,
            regression_hidden: (embed_dim / 2).max(1),
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.embed_dim;
        if n == 0 || n % 2 != 0 {
            return Err(Error::Config(format!("embed_dim must be even and positive, got {n}")));
        }
        if self.num_heads == 0 || n % self.num_heads != 0 {
            return Err(Error::Config(format!("embed_dim {n} not divisible by num_heads {}", self.num_heads)));
        }
        for (name, v) in [
            ("observed_len", self.observed_len),
            ("forecast_len", self.forecast_len),
            ("feature_count", self.feature_count),
            ("mlp_hidden", self.mlp_hidden),
            ("regression_hidden", self.regression_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBlock {
    /// Daytime-queried attention over the token embedding.
    pub attention: MultiHeadSca,
    pub token_mlp: MlpBlockPair,
    /// Follows the bare single-head gate between the running state and the fused token.
    pub state_mlp: MlpBlockPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBlock {
    pub attention: MultiHeadSca,
    pub state_mlp: MlpBlockPair,
    pub output_mlp: MlpBlockPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBlock {
    pub hidden: Linear,
    pub output: Linear,
}

/// Every trainable tensor of the model. The same type doubles as the
/// gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub config: ModelConfig,
    pub token_embedder: Linear,
    pub s0: Vec<f64>,
    pub time_block: TimeBlock,
    pub prediction_block: PredictionBlock,
    pub regression: RegressionBlock,
}

impl Tensors for TimeBlock {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.attention.tensors();
        v.extend(self.token_mlp.tensors());
        v.extend(self.state_mlp.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.attention.tensors_mut();
        v.extend(self.token_mlp.tensors_mut());
        v.extend(self.state_mlp.tensors_mut());
        v
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let mut v = self.attention.tensor_names(&format!("{prefix}.attention"));
        v.extend(self.token_mlp.tensor_names(&format!("{prefix}.token_mlp")));
        v.extend(self.state_mlp.tensor_names(&format!("{prefix}.state_mlp")));
        v
    }
}

impl Tensors for PredictionBlock {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.attention.tensors();
        v.extend(self.state_mlp.tensors());
        v.extend(self.output_mlp.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.attention.tensors_mut();
        v.extend(self.state_mlp.tensors_mut());
        v.extend(self.output_mlp.tensors_mut());
        v
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let mut v = self.attention.tensor_names(&format!("{prefix}.attention"));
        v.extend(self.state_mlp.tensor_names(&format!("{prefix}.state_mlp")));
        v.extend(self.output_mlp.tensor_names(&format!("{prefix}.output_mlp")));
        v
    }
}

impl Tensors for RegressionBlock {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.hidden.tensors();
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.hidden.tensors_mut();
        v.extend(self.output.tensors_mut());
        v
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let mut v = self.hidden.tensor_names(&format!("{prefix}.hidden"));
        v.extend(self.output.tensor_names(&format!("{prefix}.output")));
        v
    }
}

impl Tensors for ParameterStore {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.token_embedder.tensors();
        v.push(&self.s0);
        v.extend(self.time_block.tensors());
        v.extend(self.prediction_block.tensors());
        v.extend(self.regression.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.token_embedder.tensors_mut();
        v.push(&mut self.s0);
        v.extend(self.time_block.tensors_mut());
        v.extend(self.prediction_block.tensors_mut());
        v.extend(self.regression.tensors_mut());
        v
    }

    fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let join = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        let mut v = self.token_embedder.tensor_names(&join("token_embedder"));
        v.push(join("s0"));
        v.extend(self.time_block.tensor_names(&join("time_block")));
        v.extend(self.prediction_block.tensor_names(&join("prediction_block")));
        v.extend(self.regression.tensor_names(&join("regression")));
        v
    }
}

struct EncoderStep {
    features: Vec<f64>,
    attention: MhaCache,
    token_mlp: MlpCache,
    state_gate: ScaCache,
    state_mlp: MlpCache,
}

struct ForecastStep {
    attention: MhaCache,
    state_mlp: MlpCache,
    output_mlp: MlpCache,
    regression_input: Vec<f64>,
    regression_pre: Vec<f64>,
}

/// Everything the backward pass needs from one forward pass over a window.
#[derive(Default)]
pub struct ForwardTrace {
    encoder: Vec<EncoderStep>,
    forecaster: Vec<ForecastStep>,
}

impl ForwardTrace {
    pub fn is_empty(&self) -> bool {
        self.encoder.is_empty() && self.forecaster.is_empty()
    }
}

impl ParameterStore {
    /// All-zero store for `config`; used as a gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.embed_dim;
        let h = config.mlp_hidden;
        let p = config.dropout_rate;
        Ok(Self {
            config: config.clone(),
            token_embedder: Linear::zeros(config.feature_count, n),
            s0: vec![0.0; n],
            time_block: TimeBlock {
                attention: MultiHeadSca::zeros(n, config.num_heads)?,
                token_mlp: MlpBlockPair::zeros(n, h, n, p),
                state_mlp: MlpBlockPair::zeros(n, h, n, p),
            },
            prediction_block: PredictionBlock {
                attention: MultiHeadSca::zeros(n, config.num_heads)?,
                state_mlp: MlpBlockPair::zeros(n, h, n, p),
                output_mlp: MlpBlockPair::zeros(n, h, n, p),
            },
            regression: RegressionBlock {
                hidden: Linear::zeros(n, config.regression_hidden),
                output: Linear::zeros(config.regression_hidden, 1),
            },
        })
    }

    /// Gaussian `N(0, 0.02²)` weights and start state, zero biases.
    /// Deterministic in `(config, seed)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut store = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let names = store.tensor_names("");
        for (name, tensor) in names.iter().zip(store.tensors_mut()) {
            if name.ends_with(".bias") {
                continue;
            }
            for x in tensor.iter_mut() {
                *x = normal.sample(&mut rng);
            }
        }
        Ok(store)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    pub fn count_parameters(&self) -> usize {
        self.param_count()
    }

    /// Adds `other` elementwise into `self`.
    pub fn accumulate(&mut self, other: &ParameterStore) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            add_assign(a, b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn token_embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.token_embedder.forward(features)
    }

    fn state_head(&self) -> ScaHead {
        let n = self.config.embed_dim;
        ScaHead { head_dim: n, scale: n as f64 }
    }

    fn time_block_traced<R: Rng + ?Sized>(
        &self,
        token: &[f64],
        daytime: &[f64],
        prev_state: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, MhaCache, MlpCache, ScaCache, MlpCache)> {
        let n = self.config.embed_dim;
        check_len("time block token", token.len(), n)?;
        check_len("time block daytime", daytime.len(), n)?;
        check_len("time block state", prev_state.len(), n)?;
        let tb = &self.time_block;
        let (weighted, attention) = tb.attention.forward(daytime, token, token)?;
        let (fused, token_mlp) = tb.token_mlp.forward(&weighted, mode, rng)?;
        let (gated, state_gate) = self.state_head().forward(prev_state, &fused, &fused)?;
        let (state, state_mlp) = tb.state_mlp.forward(&gated, mode, rng)?;
        Ok((state, attention, token_mlp, state_gate, state_mlp))
    }

    /// One encoder step: fuses token `z` with daytime `m`, then folds it
    /// into the running state.
    pub fn time_block_step<R: Rng + ?Sized>(
        &self,
        token: &[f64],
        daytime: &[f64],
        prev_state: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        Ok(self.time_block_traced(token, daytime, prev_state, mode, rng)?.0)
    }

    /// Returns `(r_next, p_next)`.
    pub fn prediction_block_step<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        daytime: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let pb = &self.prediction_block;
        let (e, _) = pb.attention.forward(daytime, state, state)?;
        let (r, _) = pb.state_mlp.forward(&e, mode, rng)?;
        let (p, _) = pb.output_mlp.forward(&e, mode, rng)?;
        Ok((r, p))
    }

    /// Scalar output on the normalized glucose scale.
    pub fn regress(&self, p: &[f64]) -> Result<f64> {
        let pre = self.regression.hidden.forward(p)?;
        let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
        Ok(self.regression.output.forward(&act)?[0])
    }

    fn check_window(&self, features: &[f64], daytimes: &[f64], target_daytimes: &[f64]) -> Result<()> {
        let c = &self.config;
        check_len("observed daytimes", daytimes.len(), c.observed_len)?;
        check_len("observed features", features.len(), c.observed_len * c.feature_count)?;
        check_len("target daytimes", target_daytimes.len(), c.forecast_len)
    }

    pub fn encode_sequence<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        daytimes: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let c = &self.config;
        check_len("observed daytimes", daytimes.len(), c.observed_len)?;
        check_len("observed features", features.len(), c.observed_len * c.feature_count)?;
        let mut state = self.s0.clone();
        for (f, &t) in features.chunks_exact(c.feature_count).zip(daytimes) {
            let z = self.token_embed(f)?;
            let m = daytime_embed(t, c.embed_dim)?;
            state = self.time_block_step(&z, &m, &state, mode, rng)?;
        }
        Ok(state)
    }

    pub fn forecast<R: Rng + ?Sized>(
        &self,
        encoded: &[f64],
        target_daytimes: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        check_len("encoded state", encoded.len(), self.config.embed_dim)?;
        check_len("target daytimes", target_daytimes.len(), self.config.forecast_len)?;
        let mut state = encoded.to_vec();
        let mut out = Vec::with_capacity(target_daytimes.len());
        for &t in target_daytimes {
            let b = daytime_embed(t, self.config.embed_dim)?;
            let (r, p) = self.prediction_block_step(&state, &b, mode, rng)?;
            out.push(self.regress(&p)?);
            state = r;
        }
        Ok(out)
    }

    /// Normalized-scale forecast for one window.
    pub fn forward<R: Rng + ?Sized>(&self, window: &GlucoseWindow, mode: Mode, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.forward_traced(window, mode, rng)?.0)
    }

    pub fn forward_traced<R: Rng + ?Sized>(
        &self,
        window: &GlucoseWindow,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        self.forward_parts(&window.observed_features, &window.observed_daytimes, &window.target_daytimes, mode, rng)
    }

    /// Forward pass over raw arrays: `features` is `T × F` row-major.
    pub fn forward_parts<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        daytimes: &[f64],
        target_daytimes: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        self.check_window(features, daytimes, target_daytimes)?;
        let c = &self.config;
        let mut trace = ForwardTrace {
            encoder: Vec::with_capacity(c.observed_len),
            forecaster: Vec::with_capacity(c.forecast_len),
        };

        let mut state = self.s0.clone();
        for (f, &t) in features.chunks_exact(c.feature_count).zip(daytimes) {
            let z = self.token_embed(f)?;
            let m = daytime_embed(t, c.embed_dim)?;
            let (next, attention, token_mlp, state_gate, state_mlp) = self.time_block_traced(&z, &m, &state, mode, rng)?;
            trace.encoder.push(EncoderStep { features: f.to_vec(), attention, token_mlp, state_gate, state_mlp });
            state = next;
        }

        let pb = &self.prediction_block;
        let mut outputs = Vec::with_capacity(c.forecast_len);
        for &t in target_daytimes {
            let b = daytime_embed(t, c.embed_dim)?;
            let (e, attention) = pb.attention.forward(&b, &state, &state)?;
            let (r, state_mlp) = pb.state_mlp.forward(&e, mode, rng)?;
            let (p, output_mlp) = pb.output_mlp.forward(&e, mode, rng)?;
            let pre = self.regression.hidden.forward(&p)?;
            let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
            outputs.push(self.regression.output.forward(&act)?[0]);
            trace.forecaster.push(ForecastStep { attention, state_mlp, output_mlp, regression_input: p, regression_pre: pre });
            state = r;
        }
        Ok((outputs, trace))
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d outputs`
    /// (normalized scale). Returns the gradient with respect to the observed
    /// features, `T × F` row-major.
    pub fn backward(&self, trace: &ForwardTrace, d_outputs: &[f64], grads: &mut ParameterStore) -> Result<Vec<f64>> {
        if trace.is_empty() {
            return Err(Error::State("backward called before forward".into()));
        }
        check_len("output gradient", d_outputs.len(), trace.forecaster.len())?;
        if grads.config != self.config {
            return Err(Error::Shape("gradient store built for a different config".into()));
        }
        let n = self.config.embed_dim;
        let pb = &self.prediction_block;
        let mut d_state = vec![0.0; n];
        for (step, &d_out) in trace.forecaster.iter().zip(d_outputs).rev() {
            let d_act = self.regression.output.backward(
                &step.regression_pre.iter().map(|&x| gelu(x)).collect::<Vec<_>>(),
                &[d_out],
                &mut grads.regression.output,
            );
            let d_pre: Vec<f64> = d_act.iter().zip(&step.regression_pre).map(|(g, &x)| g * gelu_grad(x)).collect();
            let d_p = self.regression.hidden.backward(&step.regression_input, &d_pre, &mut grads.regression.hidden);

            let mut d_e = pb.output_mlp.backward(&step.output_mlp, &d_p, &mut grads.prediction_block.output_mlp);
            add_assign(&mut d_e, &pb.state_mlp.backward(&step.state_mlp, &d_state, &mut grads.prediction_block.state_mlp));
            let (_, d_key, d_value) = pb.attention.backward(&step.attention, &d_e, &mut grads.prediction_block.attention);
            d_state = d_key;
            add_assign(&mut d_state, &d_value);
        }

        let tb = &self.time_block;
        let head = self.state_head();
        let f = self.config.feature_count;
        let mut d_features = vec![0.0; trace.encoder.len() * f];
        for (step, d_f) in trace.encoder.iter().zip(d_features.chunks_exact_mut(f)).rev() {
            let d_gated = tb.state_mlp.backward(&step.state_mlp, &d_state, &mut grads.time_block.state_mlp);
            let (d_prev, d_key, d_value) = head.backward(&step.state_gate, &d_gated);
            let mut d_fused = d_key;
            add_assign(&mut d_fused, &d_value);
            let d_weighted = tb.token_mlp.backward(&step.token_mlp, &d_fused, &mut grads.time_block.token_mlp);
            let (_, d_key, d_value) = tb.attention.backward(&step.attention, &d_weighted, &mut grads.time_block.attention);
            let mut d_token = d_key;
            add_assign(&mut d_token, &d_value);
            d_f.copy_from_slice(&self.token_embedder.backward(&step.features, &d_token, &mut grads.token_embedder));
            d_state = d_prev;
        }
        add_assign(&mut grads.s0, &d_state);
        Ok(d_features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    #[test]
    fn default_parameter_count() {
        let store = ParameterStore::init(&ModelConfig::default(), 0).unwrap();
        assert_eq!(store.count_parameters(), 129_537);
    }

    #[test]
    fn count_independent_of_horizon() {
        let a = ParameterStore::zeros(&ModelConfig::with_width(16, 2, 24, 6, 1)).unwrap();
        let b = ParameterStore::zeros(&ModelConfig::with_width(16, 2, 48, 12, 1)).unwrap();
        assert_eq!(a.count_parameters(), b.count_parameters());
    }

    #[test]
    fn tensor_names_align_with_tensors() {
        let store = ParameterStore::zeros(&ModelConfig::with_width(8, 2, 3, 2, 2)).unwrap();
        let names = store.tensor_names("");
        assert_eq!(names.len(), store.tensors().len());
        assert_eq!(names[0], "token_embedder.weight");
        assert_eq!(names[2], "s0");
        assert_eq!(names.last().unwrap(), "regression.output.bias");
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = ModelConfig::with_width(8, 2, 3, 2, 1);
        let a = ParameterStore::init(&cfg, 5).unwrap();
        let b = ParameterStore::init(&cfg, 5).unwrap();
        let c = ParameterStore::init(&cfg, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.s0, c.s0);
        for (name, t) in a.tensor_names("").iter().zip(a.tensors()) {
            if name.ends_with(".bias") {
                assert!(t.iter().all(|&x| x == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.num_heads = 5;
        assert!(matches!(ParameterStore::init(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = ModelConfig::default();
        cfg.embed_dim = 9;
        cfg.num_heads = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.forecast_len = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn token_embed_is_affine() {
        let mut store = ParameterStore::zeros(&ModelConfig::with_width(4, 2, 2, 1, 1)).unwrap();
        store.token_embedder.weight = vec![1.0, -2.0, 0.5, 3.0];
        store.token_embedder.bias = vec![0.1, 0.2, 0.3, 0.4];
        let z = store.token_embed(&[2.0]).unwrap();
        assert_eq!(z, vec![2.1, -3.8, 1.3, 6.4]);
        assert!(store.token_embed(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_mlps_zero_state() {
        let store = ParameterStore::init(&ModelConfig::with_width(8, 2, 3, 2, 1), 1).unwrap();
        let mut s = store.clone();
        s.time_block.state_mlp.zero();
        let out = s.time_block_step(&[0.3; 8], &[0.2; 8], &[1.0; 8], Mode::Train, &mut rng()).unwrap();
        assert_eq!(out, vec![0.0; 8]);
    }

    #[test]
    fn prediction_block_shared_mlps_agree() {
        let mut store = ParameterStore::init(&ModelConfig::with_width(8, 2, 3, 2, 1), 2).unwrap();
        store.prediction_block.output_mlp = store.prediction_block.state_mlp.clone();
        let (r, p) = store.prediction_block_step(&[0.5; 8], &[0.1; 8], Mode::Eval, &mut rng()).unwrap();
        assert_eq!(r, p);
        let z = ParameterStore::zeros(&store.config).unwrap();
        let (r, p) = z.prediction_block_step(&[0.5; 8], &[0.1; 8], Mode::Eval, &mut rng()).unwrap();
        assert_eq!((r, p), (vec![0.0; 8], vec![0.0; 8]));
    }

    #[test]
    fn regress_constant_when_weights_zero() {
        let mut store = ParameterStore::zeros(&ModelConfig::with_width(8, 2, 3, 2, 1)).unwrap();
        store.regression.output.bias = vec![0.37];
        assert_eq!(store.regress(&[4.0; 8]).unwrap(), 0.37);
        assert!(store.regress(&[4.0; 7]).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let store = ParameterStore::zeros(&ModelConfig::with_width(8, 2, 3, 2, 1)).unwrap();
        let mut grads = store.zeros_like();
        let err = store.backward(&ForwardTrace::default(), &[1.0, 1.0], &mut grads).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn window_length_checked() {
        let store = ParameterStore::init(&ModelConfig::with_width(8, 2, 3, 2, 1), 0).unwrap();
        let r = store.forward_parts(&[0.5; 2], &[0.0, 5.0], &[10.0, 15.0], Mode::Eval, &mut rng());
        assert!(matches!(r, Err(Error::Shape(_))));
        let r = store.forecast(&[0.0; 8], &[1.0], Mode::Eval, &mut rng());
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
