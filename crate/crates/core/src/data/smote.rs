use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{class_counts, normalize_glucose, GlucoseWindow};
use crate::loss::EventClass;

/// Where a synthetic window came from. Indices refer to the input slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticOrigin {
    /// `base + lambda (neighbor - base)`.
    Interpolated { base: usize, neighbor: usize, lambda: f64 },
    /// Copy of `base` plus Gaussian jitter; used when a class has at most `k` members.
    Jittered { base: usize },
}

/// Vector used for neighbor search: scaled features followed by scaled targets.
fn embedding(w: &GlucoseWindow) -> Vec<f64> {
    w.observed_features.iter().copied().chain(w.targets.iter().map(|&g| normalize_glucose(g))).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn k_nearest(points: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (sq_dist(&points[i], p), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

fn interpolate(base: &GlucoseWindow, neighbor: &GlucoseWindow, lambda: f64, label: EventClass) -> GlucoseWindow {
    let lerp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect();
    GlucoseWindow {
        observed_features: lerp(&base.observed_features, &neighbor.observed_features),
        targets: lerp(&base.targets, &neighbor.targets),
        event_label: label,
        ..base.clone()
    }
}

/// SMOTE over windows, oversampling every minority class up to the majority
/// count. Returns the originals followed by the synthetic windows.
pub fn smote_augment(train: &[GlucoseWindow], k: usize, seed: u64) -> Vec<GlucoseWindow> {
    smote_augment_traced(train, k, seed).0
}

/// Like [`smote_augment`], also reporting the origin of each synthetic window
/// (in output order, after the originals).
pub fn smote_augment_traced(train: &[GlucoseWindow], k: usize, seed: u64) -> (Vec<GlucoseWindow>, Vec<SyntheticOrigin>) {
    let mut out = train.to_vec();
    let mut origins = Vec::new();
    let counts = class_counts(train);
    let majority = counts.iter().copied().max().unwrap_or(0);
    if majority == 0 {
        return (out, origins);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // per-dimension spread over the whole training set, for jitter
    let dims = train[0].observed_features.len() + train[0].targets.len();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for w in train {
        for (d, x) in w.observed_features.iter().chain(&w.targets).enumerate() {
            lo[d] = lo[d].min(*x);
            hi[d] = hi[d].max(*x);
        }
    }

    for class in EventClass::ALL {
        let n = counts[class.index()];
        if n == majority {
            continue;
        }
        if n == 0 {
            warn!("no {class:?} windows in the training set; class skipped by SMOTE");
            continue;
        }
        let members: Vec<usize> = (0..train.len()).filter(|&i| train[i].event_label == class).collect();
        let need = majority - n;
        if n > k {
            let points: Vec<Vec<f64>> = members.iter().map(|&i| embedding(&train[i])).collect();
            let neighbors: Vec<Vec<usize>> = (0..n).map(|i| k_nearest(&points, i, k)).collect();
            for j in 0..need {
                let b = j % n;
                let nb = neighbors[b][rng.random_range(0..k)];
                let lambda: f64 = rng.random();
                let (base, neighbor) = (members[b], members[nb]);
                out.push(interpolate(&train[base], &train[neighbor], lambda, class));
                origins.push(SyntheticOrigin::Interpolated { base, neighbor, lambda });
            }
        } else {
            warn!("{class:?} has {n} windows (k = {k}); oversampling with jitter");
            for _ in 0..need {
                let base = members[rng.random_range(0..n)];
                let mut w = train[base].clone();
                let f_len = w.observed_features.len();
                for (d, x) in w.observed_features.iter_mut().chain(w.targets.iter_mut()).enumerate() {
                    let sigma = 0.01 * (hi[d] - lo[d]);
                    if sigma > 0.0 {
                        *x += Normal::new(0.0, sigma).expect("positive sigma").sample(&mut rng);
                    }
                    if d >= f_len {
                        *x = x.max(1.0);
                    }
                }
                w.event_label = class;
                out.push(w);
                origins.push(SyntheticOrigin::Jittered { base });
            }
        }
    }
    (out, origins)
}
