//! Run configuration, stored as canonical JSON.

use serde::{Deserialize, Serialize};
use seqformer::data::WindowSpec;
use seqformer::{Modality, ModelConfig, TrainConfig};

use crate::error::{CliError, CliResult};

/// Optional overrides on top of [`ModelConfig::default`] proportions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub embed_dim: Option<usize>,
    pub num_heads: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub regression_hidden: Option<usize>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// 30 (T=24, L=6) or 60 (T=48, L=12).
    pub ph_minutes: u32,
    pub modality: Modality,
    pub balanced: bool,
    pub augment: bool,
    pub model: ModelOverrides,
    pub training: TrainConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ph_minutes: 30,
            modality: Modality::Single,
            balanced: true,
            augment: false,
            model: ModelOverrides::default(),
            training: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Sorted keys, no whitespace.
    pub fn to_json(&self) -> String {
        serde_json::to_value(self).expect("run config serializes").to_string()
    }

    pub fn window_spec(&self) -> CliResult<WindowSpec> {
        Ok(WindowSpec::for_horizon(self.ph_minutes, self.modality)?)
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let spec = self.window_spec()?;
        let base = ModelConfig::default();
        let m = &self.model;
        let embed_dim = m.embed_dim.unwrap_or(base.embed_dim);
        let mut c = ModelConfig::with_width(
            embed_dim,
            m.num_heads.unwrap_or(base.num_heads),
            spec.observed_len,
            spec.forecast_len,
            self.modality.feature_count(),
        );
        if let Some(h) = m.mlp_hidden {
            c.mlp_hidden = h;
        }
        if let Some(h) = m.regression_hidden {
            c.regression_hidden = h;
        }
        if let Some(p) = m.dropout_rate {
            c.dropout_rate = p;
        }
        c.validate().map_err(CliError::Core)?;
        Ok(c)
    }
}
