//! Memory footprint model for microcontroller deployment.
//!
//! Flash holds the weight file. RAM counts f32 activation and data buffers
//! only (no code, stack or weights).

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;

const F32: usize = 4;

/// Floats live inside one encoder step: token and daytime embeddings, the
/// three attention projections, head gates, head outputs and output
/// projection, both MLPs (pre-activation and activation per block) and the
/// state gate.
pub fn encoder_step_floats(c: &ModelConfig) -> usize {
    let (n, h, d) = (c.embed_dim, c.mlp_hidden, c.num_heads);
    let embeddings = 2 * n;
    let attention = 5 * n + d;
    let token_mlp = 2 * h + 2 * n;
    let state_gate = 1 + n;
    let state_mlp = 2 * h + 2 * n;
    embeddings + attention + token_mlp + state_gate + state_mlp
}

/// Floats live inside one forecaster step: daytime embedding, attention,
/// the two MLPs and the regression head.
pub fn forecaster_step_floats(c: &ModelConfig) -> usize {
    let (n, h, d) = (c.embed_dim, c.mlp_hidden, c.num_heads);
    n + (5 * n + d) + 2 * (2 * h + 2 * n) + 2 * c.regression_hidden + 1
}

/// Whole window buffered: every input row and every step's intermediates
/// are kept, plus the running state and the outputs.
pub fn full_window_floats(c: &ModelConfig) -> usize {
    c.observed_len * (c.feature_count + encoder_step_floats(c))
        + c.forecast_len * forecaster_step_floats(c)
        + c.forecast_len
        + c.embed_dim
}

/// One sample at a time: one input row, one step's intermediates, the
/// running state and the outputs. Independent of the observed length.
pub fn streaming_floats(c: &ModelConfig) -> usize {
    c.feature_count + encoder_step_floats(c).max(forecaster_step_floats(c)) + c.embed_dim + c.forecast_len
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub observed_len: usize,
    pub forecast_len: usize,
    pub flash_bytes: usize,
    pub ram_full_window_bytes: usize,
    pub ram_streaming_bytes: usize,
}

impl FootprintReport {
    pub fn new(config: &ModelConfig, flash_bytes: usize) -> Self {
        Self {
            observed_len: config.observed_len,
            forecast_len: config.forecast_len,
            flash_bytes,
            ram_full_window_bytes: F32 * full_window_floats(config),
            ram_streaming_bytes: F32 * streaming_floats(config),
        }
    }

    /// Flash in MiB (2^20 bytes).
    pub fn flash_mb(&self) -> f64 {
        self.flash_bytes as f64 / (1024.0 * 1024.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streaming_independent_of_observed_len() {
        let a = ModelConfig::with_width(88, 4, 24, 6, 1);
        let b = ModelConfig { observed_len: 48, ..a.clone() };
        assert_eq!(streaming_floats(&a), streaming_floats(&b));
        assert!(full_window_floats(&b) > full_window_floats(&a));
        assert!(streaming_floats(&a) < full_window_floats(&a));
    }

    #[test]
    fn horizon_roughly_doubles_full_window() {
        let a = ModelConfig::with_width(88, 4, 24, 6, 1);
        let b = ModelConfig::with_width(88, 4, 48, 12, 1);
        let ratio = full_window_floats(&b) as f64 / full_window_floats(&a) as f64;
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn step_counts_by_hand() {
        // N=4, h=4, D=2: 8 + 22 + 16 + 5 + 16
        let c = ModelConfig::with_width(4, 2, 3, 2, 1);
        assert_eq!(encoder_step_floats(&c), 67);
        // 4 + 22 + 32 + 2*2 + 1
        assert_eq!(forecaster_step_floats(&c), 63);
    }
}
