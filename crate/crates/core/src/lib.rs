//! Sequential Transformer glucose forecasting: model, event-balanced
//! training, data pipeline and clinical metrics.

pub mod data;
pub mod error;
pub mod footprint;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;
pub mod weights;

pub use data::{FeatureScaler, GlucoseWindow, Modality, WindowSpec};
pub use error::{Error, Result};
pub use footprint::FootprintReport;
pub use loss::{EventClass, EventWeights};
pub use metrics::{EgaZone, MetricsReport};
pub use model::{ModelConfig, ParameterStore};
pub use nn::{Mode, Tensors};
pub use train::{EpochRecord, TrainConfig, TrainOutcome, TrainingState};
pub use weights::SavedModel;
