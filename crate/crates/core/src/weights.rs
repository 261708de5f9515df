//! `SQT1` weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! b"SQT1" | u32 version (1) | u32 header length | header | tensors as f32
//! ```
//!
//! The header is canonical JSON (sorted keys, no whitespace) holding the
//! model config and the feature scaler: `{"config":{..},"feature_scaler":{..}}`.
//! Tensors follow the [`ParameterStore`] order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::FeatureScaler;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterStore};
use crate::nn::Tensors;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SQT1";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    feature_scaler: FeatureScaler,
}

/// A trained model together with the input scaling it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ParameterStore,
    pub scaler: FeatureScaler,
}

pub fn to_bytes(params: &ParameterStore, scaler: &FeatureScaler) -> Result<Vec<u8>> {
    if scaler.feature_count() != params.config.feature_count {
        return Err(Error::Shape(format!(
            "scaler has {} columns but the model expects {}",
            scaler.feature_count(),
            params.config.feature_count
        )));
    }
    let header = serde_json::to_value(Header { config: params.config.clone(), feature_scaler: scaler.clone() })?.to_string();
    let mut out = Vec::with_capacity(12 + header.len() + 4 * params.count_parameters());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in params.tensors() {
        for &x in t {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_weights<W: Write>(mut w: W, params: &ParameterStore, scaler: &FeatureScaler) -> Result<()> {
    w.write_all(&to_bytes(params, scaler)?)?;
    Ok(())
}

pub fn from_bytes(buf: &[u8]) -> Result<SavedModel> {
    if buf.len() < 12 || &buf[..4] != WEIGHTS_MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let header_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let header = buf.get(12..12 + header_len).ok_or_else(|| Error::Format("weight file header truncated".into()))?;
    let header: Header = serde_json::from_slice(header)?;
    let mut params = ParameterStore::zeros(&header.config)?;
    let body = &buf[12 + header_len..];
    if body.len() != 4 * params.count_parameters() {
        return Err(Error::Format(format!(
            "weight file holds {} bytes of tensors, config needs {}",
            body.len(),
            4 * params.count_parameters()
        )));
    }
    let mut values = body.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
    for t in params.tensors_mut() {
        for (x, v) in t.iter_mut().zip(values.by_ref()) {
            *x = v;
        }
    }
    if header.feature_scaler.feature_count() != header.config.feature_count {
        return Err(Error::Format("feature scaler does not match feature_count".into()));
    }
    Ok(SavedModel { params, scaler: header.feature_scaler })
}

pub fn read_weights<R: Read>(mut r: R) -> Result<SavedModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}
