//! Analytical and clinical evaluation of glucose forecasts.

use serde::{Deserialize, Serialize};

use crate::data::GlucoseWindow;
use crate::error::{check_len, Error, Result};
use crate::loss::EventClass;

pub fn rmse(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Input("rmse of an empty series".into()));
    }
    check_len("predictions", predictions.len(), targets.len()).map_err(|e| Error::Input(e.to_string()))?;
    let sse: f64 = targets.iter().zip(predictions).map(|(t, p)| (t - p).powi(2)).sum();
    Ok((sse / targets.len() as f64).sqrt())
}

/// Clarke error grid zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EgaZone {
    A,
    B,
    C,
    D,
    E,
}

impl EgaZone {
    pub const ALL: [EgaZone; 5] = [EgaZone::A, EgaZone::B, EgaZone::C, EgaZone::D, EgaZone::E];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Classifies a (reference, prediction) pair; rules are tried in the order
/// A, E, C, D and anything left is B. Slopes are written as `k·r / 5` so
/// boundaries land exactly on integer readings.
pub fn clarke_zone(reference: f64, prediction: f64) -> Result<EgaZone> {
    if !(reference > 0.0 && prediction > 0.0) || !reference.is_finite() || !prediction.is_finite() {
        return Err(Error::Input(format!("error grid needs positive values, got ({reference}, {prediction})")));
    }
    let (r, p) = (reference, prediction);
    let zone = if (p <= 70.0 && r <= 70.0) || (p >= 4.0 * r / 5.0 && p <= 6.0 * r / 5.0) {
        EgaZone::A
    } else if (r >= 180.0 && p <= 70.0) || (r <= 70.0 && p >= 180.0) {
        EgaZone::E
    } else if ((70.0..=290.0).contains(&r) && p >= r + 110.0) || ((130.0..=180.0).contains(&r) && p <= 7.0 * r / 5.0 - 182.0) {
        EgaZone::C
    } else if (r >= 240.0 && (70.0..=180.0).contains(&p))
        || (r <= 175.0 / 3.0 && (70.0..=180.0).contains(&p))
        || ((175.0 / 3.0..=70.0).contains(&r) && p >= 6.0 * r / 5.0)
    {
        EgaZone::D
    } else {
        EgaZone::B
    };
    Ok(zone)
}

/// Share of pairs in each zone, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgaPercentages {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl EgaPercentages {
    pub fn as_array(&self) -> [f64; 5] {
        [self.a, self.b, self.c, self.d, self.e]
    }
}

/// `pairs` are `(reference, prediction)`.
pub fn ega_percentages(pairs: &[(f64, f64)]) -> Result<EgaPercentages> {
    if pairs.is_empty() {
        return Err(Error::Input("error grid of an empty set".into()));
    }
    let mut counts = [0usize; 5];
    for &(r, p) in pairs {
        counts[clarke_zone(r, p)?.index()] += 1;
    }
    let n = pairs.len() as f64;
    let pct = |i: usize| 100.0 * counts[i] as f64 / n;
    Ok(EgaPercentages { a: pct(0), b: pct(1), c: pct(2), d: pct(3), e: pct(4) })
}

/// Point-wise detection sensitivity for `which` (Hypo or Hyper), in percent.
/// `None` when no target belongs to the class.
pub fn event_sensitivity(targets: &[f64], predictions: &[f64], which: EventClass) -> Result<Option<f64>> {
    check_len("predictions", predictions.len(), targets.len()).map_err(|e| Error::Input(e.to_string()))?;
    let (mut tp, mut fneg) = (0usize, 0usize);
    for (&t, &p) in targets.iter().zip(predictions) {
        if EventClass::of(t) != which {
            continue;
        }
        if EventClass::of(p) == which {
            tp += 1;
        } else {
            fneg += 1;
        }
    }
    Ok((tp + fneg > 0).then(|| 100.0 * tp as f64 / (tp + fneg) as f64))
}

/// Time gain in minutes for one aligned 5-minute series.
///
/// The forecast's delay is the lag `τ ∈ {0, 5, …, ph}` minimising the MSE
/// between `prediction[t]` and `target[t − τ]`; the gain is `ph − τ`.
pub fn time_gain(targets: &[f64], predictions: &[f64], ph_minutes: u32) -> Result<u32> {
    check_len("predictions", predictions.len(), targets.len()).map_err(|e| Error::Input(e.to_string()))?;
    time_gain_segments(&[(targets, predictions)], ph_minutes)
}

/// Time gain pooled over several contiguous segments: squared errors for each
/// lag are summed over all segments before taking the argmin. Segments too
/// short to hold every lag are ignored.
pub fn time_gain_segments(segments: &[(&[f64], &[f64])], ph_minutes: u32) -> Result<u32> {
    if ph_minutes % 5 != 0 {
        return Err(Error::Input(format!("prediction horizon {ph_minutes} is not a multiple of 5 minutes")));
    }
    let max_lag = (ph_minutes / 5) as usize;
    let mut sse = vec![0.0; max_lag + 1];
    let mut count = vec![0usize; max_lag + 1];
    let mut usable = false;
    for (targets, predictions) in segments {
        let n = targets.len().min(predictions.len());
        if n < max_lag + 2 {
            continue;
        }
        usable = true;
        for lag in 0..=max_lag {
            for t in lag..n {
                sse[lag] += (predictions[t] - targets[t - lag]).powi(2);
                count[lag] += 1;
            }
        }
    }
    if !usable {
        return Err(Error::Input(format!("time gain needs a series of at least {} points", max_lag + 2)));
    }
    let mut best = 0;
    for lag in 1..=max_lag {
        if sse[lag] / (count[lag] as f64) < sse[best] / (count[best] as f64) {
            best = lag;
        }
    }
    Ok(ph_minutes - 5 * best as u32)
}

/// One evaluation run, serialized with the exact report keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_mgdl: f64,
    pub tg_min: f64,
    pub hyper_sen_pct: Option<f64>,
    pub hypo_sen_pct: Option<f64>,
    pub ega_pct: EgaPercentages,
    pub params: usize,
    pub ph_min: u32,
}

impl MetricsReport {
    /// Canonical JSON: sorted keys, no whitespace.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_value(self)?.to_string())
    }

    /// RMSE, TG, Hyper Sen, Hypo Sen and the zone shares on one line.
    pub fn summary_line(&self) -> String {
        let sen = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        let z = self.ega_pct;
        format!(
            "PH={} RMSE={:.2} TG={:.2} HyperSen={} HypoSen={} EGA[A={:.2} B={:.2} C={:.2} D={:.2} E={:.2}] Params={}",
            self.ph_min,
            self.rmse_mgdl,
            self.tg_min,
            sen(self.hyper_sen_pct),
            sen(self.hypo_sen_pct),
            z.a,
            z.b,
            z.c,
            z.d,
            z.e,
            self.params
        )
    }
}

/// Computes the full report from per-window predictions in mg/dL.
///
/// Time gain runs on the final-horizon channel, split into runs of
/// consecutive windows (same subject, start advancing by one step).
pub fn evaluate_predictions(
    windows: &[GlucoseWindow],
    predictions: &[Vec<f64>],
    params: usize,
    ph_minutes: u32,
) -> Result<MetricsReport> {
    check_len("prediction sets", predictions.len(), windows.len()).map_err(|e| Error::Input(e.to_string()))?;
    let mut all_t = Vec::new();
    let mut all_p = Vec::new();
    for (w, p) in windows.iter().zip(predictions) {
        check_len("window predictions", p.len(), w.targets.len())?;
        all_t.extend_from_slice(&w.targets);
        all_p.extend_from_slice(p);
    }
    let pairs: Vec<(f64, f64)> = all_t.iter().zip(&all_p).map(|(&t, &p)| (t, p.max(1.0))).collect();

    let mut segments: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut prev: Option<&GlucoseWindow> = None;
    for (w, p) in windows.iter().zip(predictions) {
        let contiguous = prev.is_some_and(|q| q.subject == w.subject && q.start + 1 == w.start);
        if !contiguous {
            segments.push((Vec::new(), Vec::new()));
        }
        let seg = segments.last_mut().unwrap();
        seg.0.push(*w.targets.last().unwrap());
        seg.1.push(*p.last().unwrap());
        prev = Some(w);
    }
    let seg_refs: Vec<(&[f64], &[f64])> = segments.iter().map(|(t, p)| (t.as_slice(), p.as_slice())).collect();

    Ok(MetricsReport {
        rmse_mgdl: rmse(&all_t, &all_p)?,
        tg_min: f64::from(time_gain_segments(&seg_refs, ph_minutes)?),
        hyper_sen_pct: event_sensitivity(&all_t, &all_p, EventClass::Hyper)?,
        hypo_sen_pct: event_sensitivity(&all_t, &all_p, EventClass::Hypo)?,
        ega_pct: ega_percentages(&pairs)?,
        params,
        ph_min: ph_minutes,
    })
}

/// The four ranked metrics for one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonScores {
    pub rmse: f64,
    pub tg: f64,
    pub hyper_sen: f64,
    pub hypo_sen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub name: String,
    pub ph30: HorizonScores,
    pub ph60: HorizonScores,
    /// `None` ranks on metrics only (all rows must agree).
    pub params: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub name: String,
    pub score: f64,
    pub rank: usize,
}

/// Min-max scores in [0, 1]; 1 is best. A constant column scores 0.5.
fn column_scores(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if hi - lo <= 0.0 {
                0.5
            } else if higher_is_better {
                (v - lo) / (hi - lo)
            } else {
                (hi - v) / (hi - lo)
            }
        })
        .collect()
}

/// Ranks models by the average of their per-horizon metric scores, combined
/// with the parameter score when present. Ties share the better rank.
/// The result is ordered by rank, keeping input order among ties.
pub fn rank_models(rows: &[RankRow]) -> Result<Vec<Ranked>> {
    if rows.len() < 2 {
        return Err(Error::Input("ranking needs at least two models".into()));
    }
    let with_params = rows.iter().filter(|r| r.params.is_some()).count();
    if with_params != 0 && with_params != rows.len() {
        return Err(Error::Input("either every model or none must carry a parameter count".into()));
    }
    let horizon_score = |pick: fn(&RankRow) -> HorizonScores| -> Vec<f64> {
        let col = |f: fn(&HorizonScores) -> f64| rows.iter().map(|r| f(&pick(r))).collect::<Vec<_>>();
        let cols = [
            column_scores(&col(|h| h.rmse), false),
            column_scores(&col(|h| h.tg), true),
            column_scores(&col(|h| h.hyper_sen), true),
            column_scores(&col(|h| h.hypo_sen), true),
        ];
        (0..rows.len()).map(|i| cols.iter().map(|c| c[i]).sum::<f64>() / 4.0).collect()
    };
    let s30 = horizon_score(|r| r.ph30);
    let s60 = horizon_score(|r| r.ph60);
    let params = (with_params > 0).then(|| column_scores(&rows.iter().map(|r| r.params.unwrap()).collect::<Vec<_>>(), false));

    let scores: Vec<f64> = (0..rows.len())
        .map(|i| {
            let metric = (s30[i] + s60[i]) / 2.0;
            match &params {
                Some(p) => (metric + p[i]) / 2.0,
                None => metric,
            }
        })
        .collect();
    let mut out: Vec<Ranked> = rows
        .iter()
        .zip(&scores)
        .map(|(r, &s)| Ranked { name: r.name.clone(), score: s, rank: 1 + scores.iter().filter(|&&o| o > s + 1e-12).count() })
        .collect();
    out.sort_by_key(|r| r.rank);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[100.0, 120.0], &[110.0, 120.0]).unwrap() - 50f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[]).is_err());
    }

    #[test]
    fn clarke_examples() {
        assert_eq!(clarke_zone(100.0, 100.0).unwrap(), EgaZone::A);
        assert_eq!(clarke_zone(200.0, 60.0).unwrap(), EgaZone::E);
        assert_eq!(clarke_zone(100.0, 125.0).unwrap(), EgaZone::B);
        assert_eq!(clarke_zone(100.0, 220.0).unwrap(), EgaZone::C);
        assert_eq!(clarke_zone(300.0, 150.0).unwrap(), EgaZone::D);
        assert!(clarke_zone(0.0, 100.0).is_err());
        assert!(clarke_zone(100.0, -1.0).is_err());
    }

    #[test]
    fn ega_examples() {
        let z = ega_percentages(&[(100.0, 100.0), (200.0, 60.0), (100.0, 125.0)]).unwrap();
        let third = 100.0 / 3.0;
        assert!((z.a - third).abs() < 1e-12 && (z.b - third).abs() < 1e-12 && (z.e - third).abs() < 1e-12);
        assert_eq!((z.c, z.d), (0.0, 0.0));
        let z = ega_percentages(&[(80.0, 80.0), (300.0, 300.0)]).unwrap();
        assert_eq!(z.as_array(), [100.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(ega_percentages(&[]).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        let t = [65.0, 65.0, 68.0, 100.0];
        let p = [66.0, 80.0, 60.0, 100.0];
        let s = event_sensitivity(&t, &p, EventClass::Hypo).unwrap().unwrap();
        assert!((s - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(event_sensitivity(&t, &t, EventClass::Hypo).unwrap(), Some(100.0));
        assert_eq!(event_sensitivity(&t, &[100.0; 4], EventClass::Hypo).unwrap(), Some(0.0));
        assert_eq!(event_sensitivity(&t, &p, EventClass::Hyper).unwrap(), None);
        assert!(event_sensitivity(&t, &p[..2], EventClass::Hypo).is_err());
    }

    fn sinusoid(n: usize) -> Vec<f64> {
        (0..n).map(|i| 140.0 + 50.0 * (i as f64 * 2.0 * std::f64::consts::PI / 60.0).sin()).collect()
    }

    #[test]
    fn time_gain_examples() {
        let target = sinusoid(300);
        assert_eq!(time_gain(&target, &target, 30).unwrap(), 30);

        // persistence: prediction at t is the target at t - 30 min
        let persistence: Vec<f64> = (0..300usize).map(|t| target[t.saturating_sub(6)]).collect();
        assert_eq!(time_gain(&target, &persistence, 30).unwrap(), 0);

        let lagged: Vec<f64> = (0..300usize).map(|t| target[t.saturating_sub(2)]).collect();
        assert_eq!(time_gain(&target, &lagged, 30).unwrap(), 20);
        assert_eq!(time_gain(&target, &lagged, 60).unwrap(), 50);

        assert!(time_gain(&target[..7], &target[..7], 30).is_err());
        assert_eq!(time_gain(&target[..8], &target[..8], 30).unwrap(), 30);
    }

    #[test]
    fn evaluate_perfect_predictions() {
        let w = |start: u32, g: f64| GlucoseWindow {
            subject: 0,
            start,
            observed_features: vec![0.5; 2],
            observed_daytimes: vec![0.0, 5.0],
            targets: vec![g, g + 1.0],
            target_daytimes: vec![10.0, 15.0],
            event_label: EventClass::Normal,
        };
        let windows: Vec<_> = (0..40).map(|i| w(i, 50.0 + 5.0 * i as f64)).collect();
        let preds: Vec<Vec<f64>> = windows.iter().map(|w| w.targets.clone()).collect();
        let r = evaluate_predictions(&windows, &preds, 10, 30).unwrap();
        assert_eq!(r.rmse_mgdl, 0.0);
        assert_eq!(r.tg_min, 30.0);
        assert_eq!(r.hypo_sen_pct, Some(100.0));
        assert_eq!(r.hyper_sen_pct, Some(100.0));
        assert_eq!(r.ega_pct.as_array(), [100.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn report_json_keys() {
        let r = MetricsReport {
            rmse_mgdl: 1.0,
            tg_min: 25.0,
            hyper_sen_pct: Some(90.0),
            hypo_sen_pct: None,
            ega_pct: EgaPercentages { a: 100.0, b: 0.0, c: 0.0, d: 0.0, e: 0.0 },
            params: 3,
            ph_min: 30,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["ega_pct", "hyper_sen_pct", "hypo_sen_pct", "params", "ph_min", "rmse_mgdl", "tg_min"]);
        let zones: Vec<&String> = v["ega_pct"].as_object().unwrap().keys().collect();
        assert_eq!(zones, ["a", "b", "c", "d", "e"]);
    }

    fn row(name: &str, rmse: f64, tg: f64, sen: f64, params: f64) -> RankRow {
        let h = HorizonScores { rmse, tg, hyper_sen: sen, hypo_sen: sen };
        RankRow { name: name.into(), ph30: h, ph60: h, params: Some(params) }
    }

    #[test]
    fn dominating_model_ranks_first() {
        let ranked = rank_models(&[row("weak", 20.0, 10.0, 50.0, 500.0), row("strong", 10.0, 20.0, 90.0, 100.0)]).unwrap();
        assert_eq!(ranked[0].name, "strong");
        assert_eq!(ranked[0].rank, 1);
        assert_eq!(ranked[1].rank, 2);
    }

    #[test]
    fn ties_share_rank() {
        let ranked = rank_models(&[row("a", 10.0, 20.0, 90.0, 1.0), row("b", 10.0, 20.0, 90.0, 1.0), row("c", 30.0, 5.0, 10.0, 9.0)]).unwrap();
        assert_eq!(ranked.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 1, 3]);
        assert!(rank_models(&[row("a", 1.0, 1.0, 1.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn ega_sums_to_hundred(pairs in prop::collection::vec((1.0f64..500.0, 1.0f64..500.0), 1..200)) {
            let z = ega_percentages(&pairs).unwrap();
            prop_assert!((z.as_array().iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }

        #[test]
        fn constant_offset_rmse(t in prop::collection::vec(40.0f64..400.0, 1..50), c in -50.0f64..50.0) {
            let p: Vec<f64> = t.iter().map(|x| x + c).collect();
            prop_assert!((rmse(&t, &p).unwrap() - c.abs()).abs() < 1e-9);
        }

        #[test]
        fn time_gain_on_lag_grid(t in prop::collection::vec(40.0f64..400.0, 14..60), p in prop::collection::vec(40.0f64..400.0, 14..60)) {
            let n = t.len().min(p.len());
            let tg = time_gain(&t[..n], &p[..n], 60).unwrap();
            prop_assert!(tg <= 60 && tg % 5 == 0);
        }

        #[test]
        fn rank_invariant_under_affine_rescaling(
            vals in prop::collection::vec((5.0f64..40.0, 0.0f64..40.0, 0.0f64..100.0, 0.0f64..100.0, 1e4f64..1e7), 2..8),
            a in 0.1f64..10.0, b in -5.0f64..5.0,
        ) {
            let rows: Vec<RankRow> = vals.iter().enumerate().map(|(i, v)| {
                let h = HorizonScores { rmse: v.0, tg: v.1, hyper_sen: v.2, hypo_sen: v.3 };
                RankRow { name: i.to_string(), ph30: h, ph60: h, params: Some(v.4) }
            }).collect();
            let scaled: Vec<RankRow> = rows.iter().map(|r| {
                let mut r = r.clone();
                r.ph30.tg = a * r.ph30.tg + b;
                r
            }).collect();
            let ra = rank_models(&rows).unwrap();
            let rb = rank_models(&scaled).unwrap();
            let by_name = |v: &[Ranked]| { let mut x: Vec<(String, usize)> = v.iter().map(|r| (r.name.clone(), r.rank)).collect(); x.sort(); x };
            prop_assert_eq!(by_name(&ra), by_name(&rb));
            prop_assert!(ra.iter().any(|r| r.rank == 1));
        }
    }
}
