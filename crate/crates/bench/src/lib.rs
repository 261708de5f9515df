//! Fixtures shared by the benches under `benches/`.

use seqformer::data::{build_windows, synth_generate, temporal_split, SplitSpec};
use seqformer::{FeatureScaler, GlucoseWindow, Modality, WindowSpec};

/// Scaled training windows from the synthetic generator at a 30-minute horizon.
pub fn train_windows(subjects: u32, days: u32, seed: u64) -> Vec<GlucoseWindow> {
    let spec = WindowSpec::for_horizon(30, Modality::Single).expect("valid horizon");
    let all: Vec<GlucoseWindow> =
        synth_generate(subjects, days, seed).iter().flat_map(|s| build_windows(&s.records, &spec, s.id)).collect();
    let (mut train, _, _) = temporal_split(&all, &SplitSpec::default());
    FeatureScaler::fit(&train, 1).apply(&mut train);
    train
}
