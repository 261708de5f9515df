//! Glycemic event classes and the event-weighted squared error.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Hypoglycemia threshold in mg/dL; values strictly below are hypo.
pub const HYPO_THRESHOLD: f64 = 70.0;
/// Hyperglycemia threshold in mg/dL; values strictly above are hyper.
pub const HYPER_THRESHOLD: f64 = 180.0;

/// Floor applied to every event weight.
pub const MIN_EVENT_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventClass {
    Hypo,
    Normal,
    Hyper,
}

impl EventClass {
    pub const ALL: [EventClass; 3] = [EventClass::Hypo, EventClass::Normal, EventClass::Hyper];

    /// Relevance multiplier: rarer classes get more.
    pub fn relevance(self) -> f64 {
        match self {
            EventClass::Hypo => 3.0,
            EventClass::Normal => 1.0,
            EventClass::Hyper => 2.0,
        }
    }

    /// Severity used to label a window: Hypo > Hyper > Normal.
    pub fn severity(self) -> u8 {
        match self {
            EventClass::Normal => 0,
            EventClass::Hyper => 1,
            EventClass::Hypo => 2,
        }
    }

    pub fn index(self) -> usize {
        match self {
            EventClass::Hypo => 0,
            EventClass::Normal => 1,
            EventClass::Hyper => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Classification without input validation.
    pub fn of(g: f64) -> Self {
        if g < HYPO_THRESHOLD {
            EventClass::Hypo
        } else if g > HYPER_THRESHOLD {
            EventClass::Hyper
        } else {
            EventClass::Normal
        }
    }
}

pub fn classify_event(g: f64) -> Result<EventClass> {
    if !g.is_finite() || g <= 0.0 {
        return Err(Error::Input(format!("glucose value {g} must be positive and finite")));
    }
    Ok(EventClass::of(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventWeights {
    pub hypo: f64,
    pub normal: f64,
    pub hyper: f64,
}

impl EventWeights {
    pub const UNIT: EventWeights = EventWeights { hypo: 1.0, normal: 1.0, hyper: 1.0 };

    pub fn get(&self, class: EventClass) -> f64 {
        match class {
            EventClass::Hypo => self.hypo,
            EventClass::Normal => self.normal,
            EventClass::Hyper => self.hyper,
        }
    }

    pub fn for_target(&self, target: f64) -> f64 {
        self.get(EventClass::of(target))
    }
}

/// `w = relevance × (1 − class frequency)`, floored at [`MIN_EVENT_WEIGHT`].
pub fn compute_event_weights(training_targets: &[f64]) -> Result<EventWeights> {
    if training_targets.is_empty() {
        return Err(Error::Input("cannot derive event weights from an empty target set".into()));
    }
    let mut counts = [0usize; 3];
    for &g in training_targets {
        counts[classify_event(g)?.index()] += 1;
    }
    let total = training_targets.len() as f64;
    let w = |c: EventClass| (c.relevance() * (1.0 - counts[c.index()] as f64 / total)).max(MIN_EVENT_WEIGHT);
    Ok(EventWeights { hypo: w(EventClass::Hypo), normal: w(EventClass::Normal), hyper: w(EventClass::Hyper) })
}

/// `Σ w_i (g_i − ĝ_i)²` with `w_i` picked by the class of the target `g_i`.
pub fn balanced_mse(targets: &[f64], predictions: &[f64], weights: &EventWeights) -> Result<f64> {
    check_len("predictions", predictions.len(), targets.len())?;
    Ok(targets
        .iter()
        .zip(predictions)
        .map(|(&g, &p)| weights.for_target(g) * (g - p).powi(2))
        .sum())
}

/// Gradient of [`balanced_mse`] with respect to the predictions.
pub fn balanced_mse_grad(targets: &[f64], predictions: &[f64], weights: &EventWeights) -> Result<Vec<f64>> {
    check_len("predictions", predictions.len(), targets.len())?;
    Ok(targets
        .iter()
        .zip(predictions)
        .map(|(&g, &p)| -2.0 * weights.for_target(g) * (g - p))
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_event(65.0).unwrap(), EventClass::Hypo);
        assert_eq!(classify_event(200.0).unwrap(), EventClass::Hyper);
        assert_eq!(classify_event(70.0).unwrap(), EventClass::Normal);
        assert_eq!(classify_event(180.0).unwrap(), EventClass::Normal);
        assert!(classify_event(0.0).is_err());
        assert!(classify_event(f64::NAN).is_err());
        assert!(classify_event(-3.0).is_err());
    }

    fn targets_with_counts(hypo: usize, normal: usize, hyper: usize) -> Vec<f64> {
        let mut v = vec![60.0; hypo];
        v.extend(vec![120.0; normal]);
        v.extend(vec![250.0; hyper]);
        v
    }

    #[test]
    fn weights_from_counts() {
        // 3 (1 - 0.05), 1 (1 - 0.75), 2 (1 - 0.2)
        let w = compute_event_weights(&targets_with_counts(50, 750, 200)).unwrap();
        assert!(close(w.hypo, 2.85, 1e-12));
        assert!(close(w.normal, 0.25, 1e-12));
        assert!(close(w.hyper, 1.60, 1e-12));
    }

    #[test]
    fn weights_degenerate_and_thirds() {
        let w = compute_event_weights(&targets_with_counts(0, 10, 0)).unwrap();
        assert_eq!((w.hypo, w.normal, w.hyper), (3.0, MIN_EVENT_WEIGHT, 2.0));
        let w = compute_event_weights(&targets_with_counts(7, 7, 7)).unwrap();
        assert!(close(w.hypo, 2.0, 1e-12));
        assert!(close(w.normal, 2.0 / 3.0, 1e-12));
        assert!(close(w.hyper, 4.0 / 3.0, 1e-12));
        assert!(compute_event_weights(&[]).is_err());
    }

    #[test]
    fn loss_examples() {
        let w = EventWeights { hypo: 2.85, normal: 0.25, hyper: 1.60 };
        assert_eq!(balanced_mse(&[100.0, 65.0], &[100.0, 65.0], &w).unwrap(), 0.0);
        assert!(close(balanced_mse(&[100.0], &[110.0], &w).unwrap(), 25.0, 1e-12));
        assert!(close(balanced_mse(&[65.0, 200.0], &[75.0, 190.0], &w).unwrap(), 445.0, 1e-9));
        assert!(matches!(balanced_mse(&[1.0], &[1.0, 2.0], &w), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn unit_weights_equal_sum_of_squares(pairs in prop::collection::vec((40.0f64..400.0, 40.0f64..400.0), 1..20)) {
            let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let sse: f64 = t.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert_eq!(balanced_mse(&t, &p, &EventWeights::UNIT).unwrap(), sse);
        }

        #[test]
        fn loss_scales_with_weights(pairs in prop::collection::vec((40.0f64..400.0, 40.0f64..400.0), 1..20), c in 0.1f64..10.0) {
            let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let w = EventWeights { hypo: 2.85, normal: 0.25, hyper: 1.6 };
            let scaled = EventWeights { hypo: c * w.hypo, normal: c * w.normal, hyper: c * w.hyper };
            let a = balanced_mse(&t, &p, &w).unwrap();
            let b = balanced_mse(&t, &p, &scaled).unwrap();
            prop_assert!((b - c * a).abs() <= 1e-9 * b.abs().max(1.0));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn gradient_matches_finite_differences(pairs in prop::collection::vec((40.0f64..400.0, 40.0f64..400.0), 1..10)) {
            let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let w = EventWeights { hypo: 2.85, normal: 0.25, hyper: 1.6 };
            let g = balanced_mse_grad(&t, &p, &w).unwrap();
            for i in 0..p.len() {
                let h = 1e-3;
                let mut up = p.clone();
                up[i] += h;
                let mut dn = p.clone();
                dn[i] -= h;
                let fd = (balanced_mse(&t, &up, &w).unwrap() - balanced_mse(&t, &dn, &w).unwrap()) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-8);
                prop_assert!(rel < 1e-6 || (fd - g[i]).abs() < 1e-8, "i={} fd={} g={}", i, fd, g[i]);
            }
        }

        #[test]
        fn zero_only_at_perfect_fit(t in prop::collection::vec(40.0f64..400.0, 1..10), k in 0usize..10, d in 0.01f64..50.0) {
            let w = EventWeights { hypo: 3.0, normal: 0.05, hyper: 2.0 };
            prop_assert_eq!(balanced_mse(&t, &t, &w).unwrap(), 0.0);
            let mut p = t.clone();
            let i = k % p.len();
            p[i] += d;
            prop_assert!(balanced_mse(&t, &p, &w).unwrap() > 0.0);
        }
    }
}
