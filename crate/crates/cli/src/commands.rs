//! The command implementations. Each returns a value the binary prints;
//! nothing here writes to stdout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use seqformer::data::{
    align_to_grid, build_windows, class_counts, parse_records, read_window_cache, records_to_csv, smote_augment,
    synth_generate, temporal_split, write_window_cache, SplitSpec, WindowCache,
};
use seqformer::footprint::FootprintReport;
use seqformer::loss::{compute_event_weights, EventClass, EventWeights};
use seqformer::metrics::{evaluate_predictions, rank_models, HorizonScores, RankRow, Ranked};
use seqformer::train::{predict_mgdl, train_loop};
use seqformer::weights::{read_weights, to_bytes};
use seqformer::{FeatureScaler, GlucoseWindow, MetricsReport, Modality, ModelConfig, ParameterStore, SavedModel, WindowSpec};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, InFile};

/// Neighbours considered by SMOTE.
pub const SMOTE_K: usize = 5;

/// `<base>.<suffix>` next to `base`.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cache_paths(out: &Path) -> [PathBuf; 3] {
    ["train", "val", "test"].map(|p| sibling(out, p))
}

/// Event weights derived at prepare time, stored next to the train cache.
pub fn weights_path(train_cache: &Path) -> PathBuf {
    sibling(train_cache, "weights.json")
}

pub fn state_path(model: &Path) -> PathBuf {
    sibling(model, "state.json")
}

pub fn history_path(model: &Path) -> PathBuf {
    sibling(model, "history.csv")
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).in_file(path)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).in_file(path)
}

pub fn load_cache(path: &Path) -> CliResult<WindowCache> {
    read_window_cache(&read(path)?[..]).in_file(path)
}

pub fn load_model(path: &Path) -> CliResult<SavedModel> {
    read_weights(&read(path)?[..]).in_file(path)
}

fn save_cache(path: &Path, cache: &WindowCache) -> CliResult<()> {
    let mut bytes = Vec::new();
    write_window_cache(&mut bytes, cache)?;
    write(path, bytes)
}

fn canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value).expect("serializable value").to_string()
}

/// Subject CSVs in `dir`, sorted by file name.
fn subject_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .in_file(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .in_file(dir)?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .csv files in {}", dir.display())));
    }
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct PrepareArgs {
    pub data: PathBuf,
    pub ph_minutes: u32,
    pub modality: Modality,
    pub augment: bool,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub paths: [PathBuf; 3],
    /// Window counts per partition, indexed by [`EventClass::index`].
    pub counts: [[usize; 3]; 3],
    pub weights: EventWeights,
}

impl fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, (path, c)) in ["train", "val", "test"].iter().zip(self.paths.iter().zip(&self.counts)) {
            writeln!(
                f,
                "{name}: {} windows (hypo {}, normal {}, hyper {}) -> {}",
                c.iter().sum::<usize>(),
                c[EventClass::Hypo.index()],
                c[EventClass::Normal.index()],
                c[EventClass::Hyper.index()],
                path.display()
            )?;
        }
        let w = self.weights;
        write!(f, "event weights: hypo {:.4}, normal {:.4}, hyper {:.4}", w.hypo, w.normal, w.hyper)
    }
}

/// Reads every subject CSV, windows, splits, scales and optionally augments
/// the training partition, then writes the three caches.
///
/// Subject ids follow the sorted file order. Feature ranges and event
/// weights come from the training partition before augmentation.
pub fn prepare(args: &PrepareArgs) -> CliResult<PrepareSummary> {
    let spec = WindowSpec::for_horizon(args.ph_minutes, args.modality)?;
    let mut windows = Vec::new();
    for (id, path) in subject_files(&args.data)?.iter().enumerate() {
        let records = parse_records(&read(path)?).in_file(path)?;
        let own = build_windows(&records, &spec, id as u32);
        info!("{}: {} records, {} windows", path.display(), records.len(), own.len());
        windows.extend(own);
    }
    let (mut train, mut val, mut test) = temporal_split(&windows, &SplitSpec::default());
    if train.is_empty() {
        return Err(CliError::Usage(format!(
            "no training windows: every subject needs at least {} contiguous 5-minute readings",
            spec.span()
        )));
    }
    let f = spec.modality.feature_count();
    let targets: Vec<f64> = train.iter().flat_map(|w| w.targets.iter().copied()).collect();
    let weights = compute_event_weights(&targets)?;
    let scaler = FeatureScaler::fit(&train, f);
    for part in [&mut train, &mut val, &mut test] {
        scaler.apply(part);
    }
    if args.augment {
        train = smote_augment(&train, SMOTE_K, args.seed);
    }

    let paths = cache_paths(&args.out);
    let mut counts = [[0; 3]; 3];
    for ((path, part), c) in paths.iter().zip([train, val, test]).zip(&mut counts) {
        *c = class_counts(&part);
        let cache = WindowCache {
            observed_len: spec.observed_len,
            forecast_len: spec.forecast_len,
            feature_count: f,
            scaler: scaler.clone(),
            windows: part,
        };
        save_cache(path, &cache)?;
    }
    write(&weights_path(&paths[0]), canonical_json(&weights))?;
    Ok(PrepareSummary { paths, counts, weights })
}

fn shape(c: &ModelConfig) -> (usize, usize, usize) {
    (c.observed_len, c.forecast_len, c.feature_count)
}

fn cache_shape(c: &WindowCache) -> (usize, usize, usize) {
    (c.observed_len, c.forecast_len, c.feature_count)
}

fn check_shape(expected: (usize, usize, usize), what: &str, path: &Path, got: (usize, usize, usize)) -> CliResult<()> {
    if expected != got {
        let diff: Vec<String> = ["T", "L", "F"]
            .iter()
            .zip([(expected.0, got.0), (expected.1, got.1), (expected.2, got.2)])
            .filter(|(_, (a, b))| a != b)
            .map(|(n, (a, b))| format!("{n}: {a} vs {b}"))
            .collect();
        return Err(CliError::Mismatch(format!(
            "{what} (T, L, F) = {expected:?} but {} has {got:?} [{}]",
            path.display(),
            diff.join(", ")
        )));
    }
    Ok(())
}

/// Brings features scaled with `from` onto the `to` scale.
fn rescale(windows: &mut [GlucoseWindow], from: &FeatureScaler, to: &FeatureScaler) {
    if from == to {
        return;
    }
    let f = from.feature_count();
    for w in windows {
        for row in w.observed_features.chunks_exact_mut(f) {
            for (x, (lo, hi)) in row.iter_mut().zip(from.mins.iter().zip(&from.maxs)) {
                *x = lo + *x * (hi - lo);
            }
            to.scale_row(row);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub train: PathBuf,
    pub val: PathBuf,
    pub out: PathBuf,
    pub unbalanced: bool,
    /// Overrides the config's seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub weights: EventWeights,
    pub params: usize,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.weights;
        write!(
            f,
            "trained {} epochs; best val loss {:.4} at epoch {}; params {}; weights hypo {:.4} normal {:.4} hyper {:.4}",
            self.epochs, self.best_val_loss, self.best_epoch, self.params, w.hypo, w.normal, w.hyper
        )
    }
}

/// Loss weights for a training run: unit weights when unbalanced, otherwise
/// the prepare-time weights, falling back to the cache's own targets.
fn training_weights(balanced: bool, train_path: &Path, train: &WindowCache) -> CliResult<EventWeights> {
    if !balanced {
        return Ok(EventWeights::UNIT);
    }
    let side = weights_path(train_path);
    if side.exists() {
        return serde_json::from_slice(&read(&side)?).in_file(&side);
    }
    warn!("{} not found; deriving event weights from the train cache itself", side.display());
    let targets: Vec<f64> = train.windows.iter().flat_map(|w| w.targets.iter().copied()).collect();
    Ok(compute_event_weights(&targets)?)
}

pub fn train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let config_text = fs::read_to_string(&args.config).in_file(&args.config)?;
    let config = RunConfig::from_json(&config_text).in_file(&args.config)?;
    let model_config = config.model_config()?;
    let train = load_cache(&args.train)?;
    let mut val = load_cache(&args.val)?;
    check_shape(shape(&model_config), "config", &args.train, cache_shape(&train))?;
    check_shape(shape(&model_config), "config", &args.val, cache_shape(&val))?;
    rescale(&mut val.windows, &val.scaler, &train.scaler);

    let weights = training_weights(config.balanced && !args.unbalanced, &args.train, &train)?;
    let seed = args.seed.unwrap_or(config.seed);
    let initial = ParameterStore::init(&model_config, seed)?;
    let params = initial.count_parameters();
    info!("training {params} parameters on {} windows, validating on {}", train.windows.len(), val.windows.len());
    let outcome = train_loop(initial, &config.training, &train.windows, &val.windows, &weights, seed)?;

    write(&args.out, to_bytes(&outcome.params, &train.scaler)?)?;
    write(&state_path(&args.out), canonical_json(&outcome.state))?;
    let mut csv = String::from("epoch,train_loss,val_loss,lr\n");
    for r in &outcome.history {
        csv.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
    }
    write(&history_path(&args.out), csv)?;
    Ok(TrainSummary {
        epochs: outcome.history.len(),
        best_epoch: outcome.state.best_epoch,
        best_val_loss: outcome.state.best_val_loss,
        weights,
        params,
    })
}

/// Forecasts for every window of `cache` with `model`, in mg/dL.
pub fn forecast_cache(model: &SavedModel, cache: &mut WindowCache, cache_path: &Path) -> CliResult<Vec<Vec<f64>>> {
    check_shape(shape(&model.params.config), "model", cache_path, cache_shape(cache))?;
    let from = cache.scaler.clone();
    rescale(&mut cache.windows, &from, &model.scaler);
    cache.scaler = model.scaler.clone();
    Ok(predict_mgdl(&model.params, &cache.windows)?)
}

pub fn evaluate(model_path: &Path, test_path: &Path, report_path: &Path) -> CliResult<MetricsReport> {
    let model = load_model(model_path)?;
    let mut test = load_cache(test_path)?;
    if test.windows.is_empty() {
        return Err(CliError::Usage(format!("{} holds no windows", test_path.display())));
    }
    let predictions = forecast_cache(&model, &mut test, test_path)?;
    let ph = (model.params.config.forecast_len * 5) as u32;
    let report = evaluate_predictions(&test.windows, &predictions, model.params.count_parameters(), ph)?;
    write(report_path, report.to_json()?)?;
    Ok(report)
}

/// Forecast for one observed window given as a record CSV with exactly `T` rows.
pub fn predict(model_path: &Path, window_path: &Path) -> CliResult<Vec<f64>> {
    let model = load_model(model_path)?;
    let c = &model.params.config;
    let records = parse_records(&read(window_path)?).in_file(window_path)?;
    if records.len() != c.observed_len {
        return Err(CliError::Usage(format!(
            "{} has {} rows; the model expects exactly T = {} rows",
            window_path.display(),
            records.len(),
            c.observed_len
        )));
    }
    let grid = align_to_grid(&records, 0);
    if grid.len() != c.observed_len || grid.iter().any(|p| p.glucose.is_none()) {
        return Err(CliError::Usage(format!(
            "{}: rows must be consecutive 5-minute readings with glucose present",
            window_path.display()
        )));
    }
    let mut observed_features = Vec::with_capacity(c.observed_len * c.feature_count);
    for p in &grid {
        let start = observed_features.len();
        observed_features.push(p.glucose.unwrap());
        observed_features.extend_from_slice(&p.extras[..c.feature_count - 1]);
        model.scaler.scale_row(&mut observed_features[start..]);
    }
    let last = grid.last().unwrap().daytime;
    let window = GlucoseWindow {
        subject: 0,
        start: 0,
        observed_features,
        observed_daytimes: grid.iter().map(|p| p.daytime).collect(),
        targets: Vec::new(),
        target_daytimes: (1..=c.forecast_len).map(|k| (last + 5.0 * k as f64) % 1440.0).collect(),
        event_label: EventClass::Normal,
    };
    Ok(predict_mgdl(&model.params, std::slice::from_ref(&window))?.remove(0))
}

/// Model name and horizon for a `--reports` entry: either `NAME=FILE`, or a
/// file whose stem carries the horizon (`seqt-ph30.json` names `seqt`).
fn report_name(entry: &str) -> (String, PathBuf) {
    if let Some((name, path)) = entry.split_once('=') {
        return (name.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(entry);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let lower = stem.to_ascii_lowercase();
    let name = ["ph30", "ph60"]
        .iter()
        .find_map(|tag| lower.rfind(tag).map(|i| stem[..i].trim_end_matches(['-', '_', '.']).to_string()))
        .filter(|n| !n.is_empty())
        .unwrap_or(stem);
    (name, path)
}

pub fn rank(entries: &[String]) -> CliResult<Vec<Ranked>> {
    let mut names: Vec<String> = Vec::new();
    let mut reports: Vec<[Option<MetricsReport>; 2]> = Vec::new();
    for entry in entries {
        let (name, path) = report_name(entry);
        let report: MetricsReport = serde_json::from_slice(&read(&path)?).in_file(&path)?;
        let slot = match report.ph_min {
            30 => 0,
            60 => 1,
            other => return Err(CliError::Usage(format!("{}: unsupported horizon {other}", path.display()))),
        };
        let i = names.iter().position(|n| *n == name).unwrap_or_else(|| {
            names.push(name.clone());
            reports.push([None, None]);
            names.len() - 1
        });
        if reports[i][slot].replace(report).is_some() {
            return Err(CliError::Usage(format!("model {name} has two PH {} reports", [30, 60][slot])));
        }
    }
    let mut rows = Vec::with_capacity(names.len());
    for (name, [r30, r60]) in names.into_iter().zip(reports) {
        let missing = |ph: u32| CliError::Usage(format!("model {name} has no PH {ph} report"));
        let r30 = r30.ok_or_else(|| missing(30))?;
        let r60 = r60.ok_or_else(|| missing(60))?;
        let scores = |r: &MetricsReport| -> CliResult<HorizonScores> {
            let sen = |s: Option<f64>, what: &str| {
                s.ok_or_else(|| {
                    CliError::Usage(format!("model {name}: PH {} report has no {what} sensitivity (class absent)", r.ph_min))
                })
            };
            Ok(HorizonScores {
                rmse: r.rmse_mgdl,
                tg: r.tg_min,
                hyper_sen: sen(r.hyper_sen_pct, "hyper")?,
                hypo_sen: sen(r.hypo_sen_pct, "hypo")?,
            })
        };
        let (ph30, ph60) = (scores(&r30)?, scores(&r60)?);
        rows.push(RankRow { ph30, ph60, params: Some(r30.params.max(r60.params) as f64), name });
    }
    Ok(rank_models(&rows)?)
}

pub fn format_ranking(ranked: &[Ranked]) -> String {
    let width = ranked.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<4} {:<width$} {}\n", "rank", "model", "score");
    for r in ranked {
        out.push_str(&format!("{:<4} {:<width$} {:.4}\n", r.rank, r.name, r.score));
    }
    out
}

/// Footprint of a weight file at both horizons. Parameter count, and so
/// flash, does not depend on the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintSummary {
    pub params: usize,
    pub ph30: FootprintReport,
    pub ph60: FootprintReport,
}

impl FootprintSummary {
    pub fn to_json(&self) -> String {
        canonical_json(self)
    }
}

impl fmt::Display for FootprintSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "params {}, flash {} bytes ({:.3} MB)", self.params, self.ph30.flash_bytes, self.ph30.flash_mb())?;
        for (ph, r) in [(30, &self.ph30), (60, &self.ph60)] {
            writeln!(
                f,
                "PH {ph} (T={}, L={}): RAM full window {:.1} KB, streaming {:.1} KB",
                r.observed_len,
                r.forecast_len,
                r.ram_full_window_bytes as f64 / 1024.0,
                r.ram_streaming_bytes as f64 / 1024.0
            )?;
        }
        Ok(())
    }
}

pub fn footprint(model_path: &Path) -> CliResult<FootprintSummary> {
    let bytes = read(model_path)?;
    let model = seqformer::weights::from_bytes(&bytes).in_file(model_path)?;
    let c = &model.params.config;
    let at = |ph: u32| -> CliResult<FootprintReport> {
        let spec = WindowSpec::for_horizon(ph, Modality::Single)?;
        let config = ModelConfig { observed_len: spec.observed_len, forecast_len: spec.forecast_len, ..c.clone() };
        Ok(FootprintReport::new(&config, bytes.len()))
    };
    Ok(FootprintSummary { params: model.params.count_parameters(), ph30: at(30)?, ph60: at(60)? })
}

/// Writes `subjects` synthetic CSVs named `subject_NN.csv` into `dir`.
pub fn synth(dir: &Path, subjects: u32, days: u32, seed: u64) -> CliResult<Vec<PathBuf>> {
    if subjects == 0 || days == 0 {
        return Err(CliError::Usage("--subjects and --days must be positive".into()));
    }
    fs::create_dir_all(dir).in_file(dir)?;
    synth_generate(subjects, days, seed)
        .iter()
        .map(|s| {
            let path = dir.join(format!("subject_{:02}.csv", s.id));
            write(&path, records_to_csv(&s.records))?;
            Ok(path)
        })
        .collect()
}
