//! Ingestion, windowing, splitting and augmentation of CGM data.

mod cache;
mod records;
mod smote;
mod split;
mod synth;
mod windows;

pub use cache::{read_window_cache, write_window_cache, WindowCache, WINDOW_CACHE_MAGIC, WINDOW_CACHE_VERSION};
pub use records::{parse_records, records_to_csv, GlucoseRecord, CSV_HEADER};
pub use smote::{smote_augment, smote_augment_traced, SyntheticOrigin};
pub use split::{temporal_split, SplitSpec};
pub use synth::{synth_generate, SynthSubject};
pub use windows::{align_to_grid, build_windows, GridPoint, Modality, WindowSpec};

use serde::{Deserialize, Serialize};

use crate::loss::EventClass;

/// Lower end of the fixed glucose scaling range, mg/dL.
pub const GLUCOSE_MIN: f64 = 40.0;
/// Upper end of the fixed glucose scaling range, mg/dL.
pub const GLUCOSE_MAX: f64 = 400.0;
/// CGM sampling period.
pub const STEP_MINUTES: i64 = 5;

pub fn normalize_glucose(g: f64) -> f64 {
    (g - GLUCOSE_MIN) / (GLUCOSE_MAX - GLUCOSE_MIN)
}

pub fn denormalize_glucose(x: f64) -> f64 {
    GLUCOSE_MIN + x * (GLUCOSE_MAX - GLUCOSE_MIN)
}

/// One training or evaluation sample.
///
/// `observed_features` is `T × F` row-major; column 0 is glucose. Targets
/// stay in mg/dL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlucoseWindow {
    pub subject: u32,
    /// Grid index of the first observed step within the subject's series.
    pub start: u32,
    pub observed_features: Vec<f64>,
    pub observed_daytimes: Vec<f64>,
    pub targets: Vec<f64>,
    pub target_daytimes: Vec<f64>,
    pub event_label: EventClass,
}

impl GlucoseWindow {
    pub fn observed_len(&self) -> usize {
        self.observed_daytimes.len()
    }

    pub fn forecast_len(&self) -> usize {
        self.targets.len()
    }

    pub fn feature_count(&self) -> usize {
        self.observed_features.len() / self.observed_len().max(1)
    }

    /// Number of grid steps spanned (observed plus forecast).
    pub fn span(&self) -> u32 {
        (self.observed_len() + self.forecast_len()) as u32
    }

    /// Glucose at the last observed step, in mg/dL, assuming normalized features.
    pub fn last_glucose(&self) -> f64 {
        let f = self.feature_count();
        denormalize_glucose(self.observed_features[(self.observed_len() - 1) * f])
    }

    /// Most severe class among `targets` (Hypo > Hyper > Normal).
    pub fn label_for(targets: &[f64]) -> EventClass {
        targets
            .iter()
            .map(|&g| EventClass::of(g))
            .max_by_key(|c| c.severity())
            .unwrap_or(EventClass::Normal)
    }
}

/// Per-column feature scaling. Glucose (column 0) always uses the fixed
/// `[40, 400]` map; the remaining columns are min-max scaled with ranges fit
/// on the training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity_glucose(feature_count: usize) -> Self {
        let mut mins = vec![0.0; feature_count];
        let mut maxs = vec![1.0; feature_count];
        mins[0] = GLUCOSE_MIN;
        maxs[0] = GLUCOSE_MAX;
        Self { mins, maxs }
    }

    /// Fits ranges on raw (unscaled) windows.
    pub fn fit(windows: &[GlucoseWindow], feature_count: usize) -> Self {
        let mut scaler = Self::identity_glucose(feature_count);
        for col in 1..feature_count {
            let (lo, hi) = windows
                .iter()
                .flat_map(|w| w.observed_features.chunks_exact(feature_count).map(move |r| r[col]))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if lo.is_finite() && hi > lo {
                scaler.mins[col] = lo;
                scaler.maxs[col] = hi;
            } else if lo.is_finite() {
                scaler.mins[col] = lo;
                scaler.maxs[col] = lo + 1.0;
            }
        }
        scaler
    }

    pub fn feature_count(&self) -> usize {
        self.mins.len()
    }

    pub fn scale_row(&self, row: &mut [f64]) {
        for ((x, lo), hi) in row.iter_mut().zip(&self.mins).zip(&self.maxs) {
            *x = (*x - lo) / (hi - lo);
        }
    }

    pub fn apply(&self, windows: &mut [GlucoseWindow]) {
        let f = self.feature_count();
        for w in windows {
            for row in w.observed_features.chunks_exact_mut(f) {
                self.scale_row(row);
            }
        }
    }
}

/// Counts of windows per event label, indexed by [`EventClass::index`].
pub fn class_counts(windows: &[GlucoseWindow]) -> [usize; 3] {
    let mut c = [0; 3];
    for w in windows {
        c[w.event_label.index()] += 1;
    }
    c
}
