//! Helpers shared by integration tests: random tiny windows, a central
//! finite-difference gradient checker and a rule-table Clarke evaluator.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqformer::loss::{EventClass, EventWeights};
use seqformer::train::window_loss_and_grad;
use seqformer::{GlucoseWindow, Mode, ModelConfig, ParameterStore, Tensors};

pub const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely; fp64 round-off
/// in a loss of order 1e4 leaves about 1e-7 of noise in a central difference.
pub const FD_FLOOR: f64 = 1e-3;

pub fn random_window(config: &ModelConfig, rng: &mut ChaCha8Rng) -> GlucoseWindow {
    let t = config.observed_len;
    let l = config.forecast_len;
    let f = config.feature_count;
    let start: f64 = rng.random_range(0.0..1440.0);
    let observed_daytimes: Vec<f64> = (0..t).map(|i| (start + 5.0 * i as f64) % 1440.0).collect();
    let target_daytimes: Vec<f64> = (0..l).map(|i| (start + 5.0 * (t + i) as f64) % 1440.0).collect();
    let observed_features: Vec<f64> = (0..t * f).map(|_| rng.random_range(0.0..1.0)).collect();
    // one target from each class keeps every weight in play
    let targets: Vec<f64> = (0..l)
        .map(|i| match i % 3 {
            0 => rng.random_range(45.0..69.0),
            1 => rng.random_range(80.0..170.0),
            _ => rng.random_range(190.0..350.0),
        })
        .collect();
    GlucoseWindow {
        subject: 0,
        start: 0,
        event_label: GlucoseWindow::label_for(&targets),
        observed_features,
        observed_daytimes,
        targets,
        target_daytimes,
    }
}

/// Largest relative disagreement between the analytic gradient and a
/// central difference, over every scalar parameter.
pub fn max_gradient_error(params: &ParameterStore, window: &GlucoseWindow, weights: &EventWeights, mode: Mode, seed: u64) -> f64 {
    let mut analytic = params.zeros_like();
    window_loss_and_grad(params, window, weights, mode, seed, Some(&mut analytic)).unwrap();
    let analytic: Vec<f64> = analytic.tensors().concat();

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    for ti in 0..probe.tensors().len() {
        for j in 0..probe.tensors()[ti].len() {
            let orig = probe.tensors()[ti][j];
            probe.tensors_mut()[ti][j] = orig + FD_STEP;
            let up = window_loss_and_grad(&probe, window, weights, mode, seed, None).unwrap();
            probe.tensors_mut()[ti][j] = orig - FD_STEP;
            let down = window_loss_and_grad(&probe, window, weights, mode, seed, None).unwrap();
            probe.tensors_mut()[ti][j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
            flat += 1;
        }
    }
    worst
}

/// A tiny model and a window whose targets sit a few mg/dL from the model's
/// eval-mode forecast. Small residuals keep the loss near 1e1, where a
/// central difference at `FD_STEP` resolves gradients to well under 1e-4.
/// `seed % 3` picks which event class the forecasts fall in.
pub fn conditioned_case(feature_count: usize, seed: u64) -> (ParameterStore, GlucoseWindow) {
    let mut params = tiny_params(feature_count, seed);
    let mut r = rng(100 + seed);
    let mut window = random_window(&params.config, &mut r);
    let centre = [58.0, 125.0, 260.0][(seed % 3) as usize];
    let first = forecast_mgdl(&params, &window)[0];
    params.regression.output.bias[0] += (centre - first) / 360.0;
    window.targets = forecast_mgdl(&params, &window)
        .into_iter()
        .map(|g| g + r.random_range(1.0..4.0) * if r.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    window.event_label = GlucoseWindow::label_for(&window.targets);
    (params, window)
}

pub fn forecast_mgdl(params: &ParameterStore, window: &GlucoseWindow) -> Vec<f64> {
    params.forward(window, Mode::Eval, &mut rng(0)).unwrap().into_iter().map(seqformer::data::denormalize_glucose).collect()
}

pub fn tiny_params(feature_count: usize, seed: u64) -> ParameterStore {
    let config = ModelConfig::with_width(8, 2, 4, 2, feature_count);
    // larger init than the default so gates and GELUs leave their linear regime
    let mut params = ParameterStore::init(&config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.random_range(-0.6..0.6);
        }
    }
    params
}

pub fn mixed_weights() -> EventWeights {
    EventWeights { hypo: 2.85, normal: 0.25, hyper: 1.60 }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Clarke zone for integer readings, written as a table of rules with all
/// fractional bounds cleared by multiplying through (×5 or ×3).
pub fn clarke_oracle(r: i64, p: i64) -> char {
    let in_a = (p <= 70 && r <= 70) || (5 * p >= 4 * r && 5 * p <= 6 * r);
    let in_e = (r >= 180 && p <= 70) || (r <= 70 && p >= 180);
    let in_c = (r >= 70 && r <= 290 && p >= r + 110) || (r >= 130 && r <= 180 && 5 * p <= 7 * r - 910);
    let mid_p = p >= 70 && p <= 180;
    let in_d = (r >= 240 && mid_p) || (3 * r <= 175 && mid_p) || (3 * r >= 175 && r <= 70 && 5 * p >= 6 * r);
    let table = [(in_a, 'A'), (in_e, 'E'), (in_c, 'C'), (in_d, 'D')];
    table.iter().find(|(hit, _)| *hit).map_or('B', |&(_, z)| z)
}

pub fn zone_letter(z: seqformer::EgaZone) -> char {
    match z {
        seqformer::EgaZone::A => 'A',
        seqformer::EgaZone::B => 'B',
        seqformer::EgaZone::C => 'C',
        seqformer::EgaZone::D => 'D',
        seqformer::EgaZone::E => 'E',
    }
}

pub fn class_of(g: f64) -> EventClass {
    EventClass::of(g)
}
