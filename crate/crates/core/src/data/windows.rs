use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{GlucoseRecord, GlucoseWindow, STEP_MINUTES};
use crate::error::{Error, Result};

/// Which input columns feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Glucose only.
    Single,
    /// Glucose, carbs, bolus, basal and the dataset-specific extra channel.
    Multi,
}

impl Modality {
    pub fn feature_count(self) -> usize {
        match self {
            Modality::Single => 1,
            Modality::Multi => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub observed_len: usize,
    pub forecast_len: usize,
    pub modality: Modality,
    /// Longest run of missing samples that is linearly interpolated.
    pub max_gap: usize,
}

impl WindowSpec {
    /// 30 minutes ⇒ 24 observed / 6 predicted; 60 minutes ⇒ 48 / 12.
    pub fn for_horizon(ph_minutes: u32, modality: Modality) -> Result<Self> {
        let (observed_len, forecast_len) = match ph_minutes {
            30 => (24, 6),
            60 => (48, 12),
            other => return Err(Error::Config(format!("prediction horizon must be 30 or 60 minutes, got {other}"))),
        };
        Ok(Self { observed_len, forecast_len, modality, max_gap: 2 })
    }

    pub fn span(&self) -> usize {
        self.observed_len + self.forecast_len
    }
}

/// A sample on the regular 5-minute grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Grid slot, in 5-minute steps since 1970-01-01T00:00.
    pub slot: i64,
    pub daytime: f64,
    pub glucose: Option<f64>,
    pub extras: [f64; 4],
}

fn slot_of(r: &GlucoseRecord) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let secs = (r.timestamp - epoch).num_seconds();
    let step = STEP_MINUTES * 60;
    (secs + step / 2).div_euclid(step)
}

/// Snaps records to the nearest 5-minute slot, fills missing slots with gaps
/// and interpolates glucose linearly over runs of at most `max_gap` missing
/// samples. Longer runs stay `None`.
///
/// When two records land in the same slot, carbs and bolus are summed and the
/// later record wins for everything else.
pub fn align_to_grid(records: &[GlucoseRecord], max_gap: usize) -> Vec<GridPoint> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let first_slot = slot_of(first);
    let last_slot = slot_of(records.last().unwrap());
    let len = (last_slot - first_slot + 1) as usize;
    let mut grid: Vec<GridPoint> = (0..len)
        .map(|i| {
            let slot = first_slot + i as i64;
            let daytime = (slot * STEP_MINUTES).rem_euclid(1440) as f64;
            GridPoint { slot, daytime, glucose: None, extras: [0.0; 4] }
        })
        .collect();
    for r in records {
        let p = &mut grid[(slot_of(r) - first_slot) as usize];
        if r.glucose.is_some() {
            p.glucose = r.glucose;
        }
        p.extras[0] += r.carbs;
        p.extras[1] += r.bolus;
        p.extras[2] = r.basal;
        p.extras[3] = r.extra;
    }
    debug_assert!(grid.iter().all(|p| p.daytime == (p.slot * STEP_MINUTES).rem_euclid(1440) as f64));

    let mut i = 0;
    while i < grid.len() {
        if grid[i].glucose.is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < grid.len() && grid[i].glucose.is_none() {
            i += 1;
        }
        let run = i - start;
        if start == 0 || i == grid.len() || run > max_gap {
            continue;
        }
        let lo = grid[start - 1].glucose.unwrap();
        let hi = grid[i].glucose.unwrap();
        for (k, p) in grid[start..i].iter_mut().enumerate() {
            let frac = (k + 1) as f64 / (run + 1) as f64;
            p.glucose = Some(lo + frac * (hi - lo));
        }
    }
    grid
}

/// Stride-1 sliding windows over one subject's grid. Features are raw
/// (unscaled); see [`super::FeatureScaler`]. Windows touching an
/// unfilled gap are skipped.
pub fn build_windows(records: &[GlucoseRecord], spec: &WindowSpec, subject: u32) -> Vec<GlucoseWindow> {
    let grid = align_to_grid(records, spec.max_gap);
    windows_from_grid(&grid, spec, subject)
}

pub(crate) fn windows_from_grid(grid: &[GridPoint], spec: &WindowSpec, subject: u32) -> Vec<GlucoseWindow> {
    let span = spec.span();
    if grid.len() < span {
        return Vec::new();
    }
    // bad[i] = number of gaps among grid[..i]
    let mut bad = vec![0usize; grid.len() + 1];
    for (i, p) in grid.iter().enumerate() {
        bad[i + 1] = bad[i] + usize::from(p.glucose.is_none());
    }
    let f = spec.modality.feature_count();
    let mut out = Vec::new();
    for start in 0..=grid.len() - span {
        if bad[start + span] != bad[start] {
            continue;
        }
        let observed = &grid[start..start + spec.observed_len];
        let future = &grid[start + spec.observed_len..start + span];
        let mut observed_features = Vec::with_capacity(spec.observed_len * f);
        for p in observed {
            observed_features.push(p.glucose.unwrap());
            if f > 1 {
                observed_features.extend_from_slice(&p.extras[..f - 1]);
            }
        }
        let targets: Vec<f64> = future.iter().map(|p| p.glucose.unwrap()).collect();
        out.push(GlucoseWindow {
            subject,
            start: start as u32,
            observed_features,
            observed_daytimes: observed.iter().map(|p| p.daytime).collect(),
            event_label: GlucoseWindow::label_for(&targets),
            targets,
            target_daytimes: future.iter().map(|p| p.daytime).collect(),
        });
    }
    out
}
