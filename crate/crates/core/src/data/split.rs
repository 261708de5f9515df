use serde::{Deserialize, Serialize};

use super::GlucoseWindow;
use crate::error::{Error, Result};

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_frac: 0.64, val_frac: 0.16, test_frac: 0.20 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {fr:?} must lie in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// Partition sizes before any boundary drop.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train_frac).min(n);
        let val = floor(self.val_frac).min(n - train);
        (train, val, n - train - val)
    }
}

/// Splits each subject's windows chronologically.
///
/// Windows of a later partition that share any grid step with a window of an
/// earlier partition are dropped, so no sample leaks across the boundary.
pub fn temporal_split(
    windows: &[GlucoseWindow],
    spec: &SplitSpec,
) -> (Vec<GlucoseWindow>, Vec<GlucoseWindow>, Vec<GlucoseWindow>) {
    let mut subjects: Vec<u32> = Vec::new();
    for w in windows {
        if !subjects.contains(&w.subject) {
            subjects.push(w.subject);
        }
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for subject in subjects {
        let mut own: Vec<&GlucoseWindow> = windows.iter().filter(|w| w.subject == subject).collect();
        own.sort_by_key(|w| w.start);
        let (n_train, n_val, _) = spec.sizes(own.len());
        let mut covered_until = 0u32;
        let mut push = |part: &mut Vec<GlucoseWindow>, ws: &[&GlucoseWindow], drop_overlap: bool| {
            let mut end = covered_until;
            for w in ws {
                if drop_overlap && w.start < covered_until {
                    continue;
                }
                end = end.max(w.start + w.span());
                part.push((*w).clone());
            }
            covered_until = end;
        };
        push(&mut train, &own[..n_train], false);
        push(&mut val, &own[n_train..n_train + n_val], true);
        push(&mut test, &own[n_train + n_val..], true);
    }
    (train, val, test)
}
