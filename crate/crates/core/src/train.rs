//! Adam, reduce-on-plateau scheduling, early stopping and the epoch loop.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{denormalize_glucose, GlucoseWindow, GLUCOSE_MAX, GLUCOSE_MIN};
use crate::error::{Error, Result};
use crate::loss::{balanced_mse, balanced_mse_grad, EventWeights};
use crate::model::ParameterStore;
use crate::nn::{Mode, Tensors};

/// Windows per gradient worker; fixed so reductions are ordered identically
/// regardless of the thread pool size.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParameterStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first_moment: zeros.clone(), second_moment: zeros }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParameterStore, grads: &ParameterStore, state: &mut AdamState) -> Result<()> {
    if params.config != grads.config || state.first_moment.len() != params.tensors().len() {
        return Err(Error::Shape("gradients or optimizer state do not match the parameters".into()));
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
    for ((p, g), (m, v)) in tensors.zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut())) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Halves the learning rate after `patience` epochs without improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 15,
            min_lr: 1e-6,
            threshold: 1e-8,
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
        }
    }
}

impl PlateauScheduler {
    pub fn step(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best_val_loss - self.threshold {
            self.best_val_loss = val_loss;
            self.epochs_since_improvement = 0;
            return lr;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= self.patience {
            self.epochs_since_improvement = 0;
            return (lr * self.factor).max(self.min_lr).min(lr);
        }
        lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Tracks the best validation snapshot and stops after `patience` epochs
/// without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub threshold: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    best: Option<ParameterStore>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            threshold: 1e-8,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            best: None,
        }
    }

    pub fn check(&mut self, val_loss: f64, epoch: usize, params: &ParameterStore) -> StopDecision {
        if val_loss < self.best_val_loss - self.threshold {
            self.best_val_loss = val_loss;
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            self.best = Some(params.clone());
            return StopDecision::Continue;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_snapshot(&self) -> Option<&ParameterStore> {
        self.best.as_ref()
    }

    pub fn into_best(self) -> Option<ParameterStore> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            batch_size: 64,
            learning_rate: 1e-4,
            early_stop_patience: 150,
            plateau_patience: 15,
            plateau_factor: 0.5,
            min_lr: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Resumable summary written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub epoch: usize,
    pub lr: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    /// Shuffling and dropout streams are derived from `(seed, epoch)`.
    pub seed: u64,
    pub rng_stream: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation snapshot.
    pub params: ParameterStore,
    pub history: Vec<EpochRecord>,
    pub state: TrainingState,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Balanced loss of one window in mg/dL, with its gradient on the model's
/// normalized output scale.
pub fn window_loss_and_grad(
    params: &ParameterStore,
    window: &GlucoseWindow,
    weights: &EventWeights,
    mode: Mode,
    rng_seed: u64,
    grads: Option<&mut ParameterStore>,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (out, trace) = params.forward_traced(window, mode, &mut rng)?;
    let preds: Vec<f64> = out.iter().map(|&y| denormalize_glucose(y)).collect();
    let loss = balanced_mse(&window.targets, &preds, weights)?;
    if let Some(grads) = grads {
        params.backward(&trace, &output_gradient(&window.targets, &preds, weights)?, grads)?;
    }
    Ok(loss)
}

/// Loss gradient on the model's normalized output scale.
fn output_gradient(targets: &[f64], preds: &[f64], weights: &EventWeights) -> Result<Vec<f64>> {
    let scale = GLUCOSE_MAX - GLUCOSE_MIN;
    Ok(balanced_mse_grad(targets, preds, weights)?.into_iter().map(|g| g * scale).collect())
}

/// Mean balanced loss over `windows` and its gradient, averaged over the batch.
pub fn batch_gradient(
    params: &ParameterStore,
    windows: &[&GlucoseWindow],
    weights: &EventWeights,
    mode: Mode,
    seeds: &[u64],
) -> Result<(f64, ParameterStore)> {
    let partials: Vec<Result<(f64, ParameterStore)>> = windows
        .par_chunks(GRAD_CHUNK)
        .zip(seeds.par_chunks(GRAD_CHUNK))
        .map(|(ws, ss)| {
            let mut g = params.zeros_like();
            let mut loss = 0.0;
            for (w, &s) in ws.iter().zip(ss) {
                loss += window_loss_and_grad(params, w, weights, mode, s, Some(&mut g))?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for p in partials {
        let (l, g) = p?;
        total += l;
        grads.accumulate(&g);
    }
    let n = windows.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Mean eval-mode balanced loss; never touches the parameters.
pub fn evaluate_loss(params: &ParameterStore, windows: &[GlucoseWindow], weights: &EventWeights) -> Result<f64> {
    let total: Result<Vec<f64>> =
        windows.par_iter().map(|w| window_loss_and_grad(params, w, weights, Mode::Eval, 0, None)).collect();
    Ok(total?.iter().sum::<f64>() / windows.len().max(1) as f64)
}

/// Eval-mode forecasts in mg/dL.
pub fn predict_mgdl(params: &ParameterStore, windows: &[GlucoseWindow]) -> Result<Vec<Vec<f64>>> {
    windows
        .par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Ok(params.forward(w, Mode::Eval, &mut rng)?.into_iter().map(denormalize_glucose).collect())
        })
        .collect()
}

/// Runs the full training regimen from `initial` and returns the
/// best-validation snapshot.
pub fn train_loop(
    initial: ParameterStore,
    config: &TrainConfig,
    train: &[GlucoseWindow],
    val: &[GlucoseWindow],
    weights: &EventWeights,
    seed: u64,
) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Input(format!(
            "training needs non-empty partitions (train {}, val {})",
            train.len(),
            val.len()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut params = initial;
    let mut adam = AdamState::new(&params, config.learning_rate);
    let mut scheduler = PlateauScheduler {
        factor: config.plateau_factor,
        patience: config.plateau_patience,
        min_lr: config.min_lr,
        ..PlateauScheduler::default()
    };
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(seed, epoch as u64, 0));
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);

        let mut train_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&GlucoseWindow> = idx.iter().map(|&i| &train[i]).collect();
            let seeds: Vec<u64> = idx.iter().map(|&i| mix(seed, epoch as u64, 1 + i as u64)).collect();
            let (loss, grads) = batch_gradient(&params, &batch, weights, Mode::Train, &seeds)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam_step(&mut params, &grads, &mut adam)?;
            train_loss += loss * batch.len() as f64;
        }
        train_loss /= train.len() as f64;

        let val_loss = evaluate_loss(&params, val, weights)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        history.push(EpochRecord { epoch, train_loss, val_loss, lr: adam.lr });
        debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} lr {:.2e}", adam.lr);
        adam.lr = scheduler.step(val_loss, adam.lr);
        if stopper.check(val_loss, epoch, &params) == StopDecision::Stop {
            info!("early stop at epoch {epoch}; best epoch {}", stopper.best_epoch);
            break;
        }
    }

    let state = TrainingState {
        epoch: history.len(),
        lr: adam.lr,
        best_val_loss: stopper.best_val_loss,
        best_epoch: stopper.best_epoch,
        seed,
        rng_stream: "chacha8(splitmix(seed, epoch, slot))".into(),
    };
    let params = stopper.into_best().unwrap_or(params);
    Ok(TrainOutcome { params, history, state })
}
