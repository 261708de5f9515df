//! Desk-scale CGM generator: circadian baseline, meal excursions with
//! matching boluses, insulin-driven dips, a slow random drift and sensor
//! noise.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GlucoseRecord, GLUCOSE_MAX, GLUCOSE_MIN, STEP_MINUTES};

const BASELINE_MEAN: f64 = 146.0;
const BASELINE_AMPLITUDE: f64 = 25.0;
const MEAL_RISE_MIN: f64 = 20.0;
const MEAL_DECAY_MIN: f64 = 90.0;
const INSULIN_PEAK_MIN: f64 = 100.0;
const DIP_PEAK_MIN: f64 = 50.0;
const NOISE_SD: f64 = 5.0;
const DRIFT_AR: f64 = 0.98;
const DRIFT_SD: f64 = 1.5;
const CARB_RATIO_MGDL_PER_G: f64 = 1.6;

/// Meal slots as (minute of day, jitter in minutes).
const MEALS: [(f64, f64); 4] = [(7.5 * 60.0, 40.0), (12.5 * 60.0, 40.0), (16.0 * 60.0, 30.0), (19.5 * 60.0, 45.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSubject {
    pub id: u32,
    pub records: Vec<GlucoseRecord>,
}

struct Event {
    at: f64,
    amplitude: f64,
    kind: Kind,
}

#[derive(Clone, Copy)]
enum Kind {
    Meal,
    Insulin,
    Dip,
}

fn meal_shape(dt: f64) -> f64 {
    // peak of (1 - e^{-t/20}) e^{-t/90}
    let t_peak = MEAL_RISE_MIN * (1.0 + MEAL_DECAY_MIN / MEAL_RISE_MIN).ln();
    let raw = |t: f64| (1.0 - (-t / MEAL_RISE_MIN).exp()) * (-t / MEAL_DECAY_MIN).exp();
    raw(dt) / raw(t_peak)
}

/// Gamma-like response peaking at 1 when `dt = peak`.
fn bump(dt: f64, peak: f64) -> f64 {
    let x = dt / peak;
    x * (1.0 - x).exp()
}

impl Event {
    fn effect(&self, t: f64) -> f64 {
        let dt = t - self.at;
        if dt <= 0.0 {
            return 0.0;
        }
        match self.kind {
            Kind::Meal => self.amplitude * meal_shape(dt),
            Kind::Insulin => -self.amplitude * bump(dt, INSULIN_PEAK_MIN),
            Kind::Dip => -self.amplitude * bump(dt, DIP_PEAK_MIN),
        }
    }

    fn horizon(&self) -> f64 {
        match self.kind {
            Kind::Meal => 10.0 * MEAL_DECAY_MIN,
            Kind::Insulin => 12.0 * INSULIN_PEAK_MIN,
            Kind::Dip => 12.0 * DIP_PEAK_MIN,
        }
    }
}

fn generate_subject(id: u32, days: u32, seed: u64) -> SynthSubject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let noise = Normal::new(0.0, NOISE_SD).unwrap();
    let drift_noise = Normal::new(0.0, DRIFT_SD).unwrap();
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let baseline_offset: f64 = rng.random_range(-10.0..10.0);
    let basal: f64 = (rng.random_range(0.6..1.2f64) * 100.0).round() / 100.0;
    let sensitivity: f64 = rng.random_range(0.8..1.2);

    let steps = days as usize * 1440 / STEP_MINUTES as usize;
    let mut events = Vec::new();
    let mut carbs = vec![0.0; steps];
    let mut bolus = vec![0.0; steps];
    for day in 0..days {
        let day_start = f64::from(day) * 1440.0;
        for (k, &(at, jitter)) in MEALS.iter().enumerate() {
            // afternoon snack on roughly half the days
            if k == 2 && rng.random::<f64>() < 0.5 {
                continue;
            }
            let at = day_start + at + rng.random_range(-jitter..jitter);
            let amplitude = rng.random_range(100.0..190.0);
            let grams = (amplitude / CARB_RATIO_MGDL_PER_G).round();
            // dosing error drives both post-meal highs and late lows
            let dose_ratio: f64 = rng.random_range(0.55..1.35);
            let step = (at / STEP_MINUTES as f64).round() as usize;
            if step < steps {
                carbs[step] += grams;
                bolus[step] += (grams / 10.0 * dose_ratio * 10.0).round() / 10.0;
            }
            events.push(Event { at, amplitude, kind: Kind::Meal });
            events.push(Event { at, amplitude: amplitude * dose_ratio * 0.42 * sensitivity, kind: Kind::Insulin });
        }
        // correction doses or exercise
        let dips = rng.random_range(0..=2);
        for _ in 0..dips {
            let at = day_start + rng.random_range(0.0..1440.0);
            events.push(Event { at, amplitude: rng.random_range(70.0..120.0), kind: Kind::Dip });
        }
    }
    events.sort_by(|a, b| a.at.total_cmp(&b.at));

    let t0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut drift = 0.0;
    let mut first_active = 0;
    let mut records = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = (i as i64 * STEP_MINUTES) as f64;
        drift = DRIFT_AR * drift + drift_noise.sample(&mut rng);
        while first_active < events.len() && events[first_active].at + events[first_active].horizon() < t {
            first_active += 1;
        }
        let circadian = BASELINE_AMPLITUDE * (std::f64::consts::TAU * t / 1440.0 + phase).sin();
        let excursions: f64 = events[first_active..].iter().take_while(|e| e.at < t).map(|e| e.effect(t)).sum();
        let g = BASELINE_MEAN + baseline_offset + circadian + excursions + drift + noise.sample(&mut rng);
        records.push(GlucoseRecord {
            timestamp: t0 + Duration::minutes(i as i64 * STEP_MINUTES),
            glucose: Some(g.clamp(GLUCOSE_MIN, GLUCOSE_MAX).round()),
            carbs: carbs[i],
            bolus: bolus[i],
            basal,
            extra: 0.0,
        });
    }
    SynthSubject { id, records }
}

/// Generates `subjects` independent series of `days` days each. Glucose is
/// rounded to whole mg/dL and clipped to `[40, 400]`.
pub fn synth_generate(subjects: u32, days: u32, seed: u64) -> Vec<SynthSubject> {
    (0..subjects).map(|id| generate_subject(id, days, seed)).collect()
}
