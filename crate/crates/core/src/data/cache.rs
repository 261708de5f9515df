//! `SQW1` window cache.
//!
//! Little-endian layout:
//!
//! ```text
//! b"SQW1" | u32 version (1) | u32 window count | u32 T | u32 L | u32 F
//! F × (f32 min, f32 max)                      feature scaler
//! per window, all f32:
//!   subject | start | T×F features | T daytimes | L targets | L target daytimes | label
//! ```
//!
//! Labels are encoded as 0 = hypo, 1 = normal, 2 = hyper.

use std::io::{Read, Write};

use super::{FeatureScaler, GlucoseWindow};
use crate::error::{Error, Result};
use crate::loss::EventClass;

pub const WINDOW_CACHE_MAGIC: &[u8; 4] = b"SQW1";
pub const WINDOW_CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCache {
    pub observed_len: usize,
    pub forecast_len: usize,
    pub feature_count: usize,
    pub scaler: FeatureScaler,
    pub windows: Vec<GlucoseWindow>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

pub fn write_window_cache<W: Write>(mut w: W, cache: &WindowCache) -> Result<()> {
    let (t, l, f) = (cache.observed_len, cache.forecast_len, cache.feature_count);
    if cache.scaler.feature_count() != f {
        return Err(Error::Shape(format!("scaler has {} columns, cache has {f}", cache.scaler.feature_count())));
    }
    let mut out = Vec::with_capacity(24 + cache.windows.len() * 4 * (3 + t * (f + 1) + 2 * l));
    out.extend_from_slice(WINDOW_CACHE_MAGIC);
    put_u32(&mut out, WINDOW_CACHE_VERSION);
    put_u32(&mut out, cache.windows.len() as u32);
    put_u32(&mut out, t as u32);
    put_u32(&mut out, l as u32);
    put_u32(&mut out, f as u32);
    for (lo, hi) in cache.scaler.mins.iter().zip(&cache.scaler.maxs) {
        put_f32(&mut out, *lo);
        put_f32(&mut out, *hi);
    }
    for win in &cache.windows {
        if win.observed_len() != t || win.forecast_len() != l || win.observed_features.len() != t * f {
            return Err(Error::Shape(format!(
                "window (subject {}, start {}) does not match cache shape T={t} L={l} F={f}",
                win.subject, win.start
            )));
        }
        put_f32(&mut out, f64::from(win.subject));
        put_f32(&mut out, f64::from(win.start));
        for &x in win.observed_features.iter().chain(&win.observed_daytimes).chain(&win.targets).chain(&win.target_daytimes) {
            put_f32(&mut out, x);
        }
        put_f32(&mut out, win.event_label.index() as f64);
    }
    w.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self.buf.get(self.pos..end).ok_or_else(|| Error::Format("window cache truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f64::from(f32::from_le_bytes(self.take(4)?.try_into().unwrap())))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f32()).collect()
    }
}

pub fn read_window_cache<R: Read>(mut r: R) -> Result<WindowCache> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut rd = Reader { buf: &buf, pos: 0 };
    if rd.take(4)? != WINDOW_CACHE_MAGIC {
        return Err(Error::Format("not a window cache (bad magic)".into()));
    }
    let version = rd.u32()?;
    if version != WINDOW_CACHE_VERSION {
        return Err(Error::Format(format!("unsupported window cache version {version}")));
    }
    let count = rd.u32()? as usize;
    let t = rd.u32()? as usize;
    let l = rd.u32()? as usize;
    let f = rd.u32()? as usize;
    if t == 0 || l == 0 || f == 0 {
        return Err(Error::Format(format!("degenerate cache shape T={t} L={l} F={f}")));
    }
    let mut scaler = FeatureScaler { mins: Vec::with_capacity(f), maxs: Vec::with_capacity(f) };
    for _ in 0..f {
        scaler.mins.push(rd.f32()?);
        scaler.maxs.push(rd.f32()?);
    }
    let mut windows = Vec::with_capacity(count);
    for _ in 0..count {
        let subject = rd.f32()? as u32;
        let start = rd.f32()? as u32;
        let observed_features = rd.f32s(t * f)?;
        let observed_daytimes = rd.f32s(t)?;
        let targets = rd.f32s(l)?;
        let target_daytimes = rd.f32s(l)?;
        let label = rd.f32()?;
        let event_label = EventClass::from_index(label as usize)
            .filter(|_| label.fract() == 0.0)
            .ok_or_else(|| Error::Format(format!("bad event label {label}")))?;
        windows.push(GlucoseWindow { subject, start, observed_features, observed_daytimes, targets, target_daytimes, event_label });
    }
    if rd.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after window cache", buf.len() - rd.pos)));
    }
    Ok(WindowCache { observed_len: t, forecast_len: l, feature_count: f, scaler, windows })
}
