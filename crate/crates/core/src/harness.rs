//! Seeded Monte-Carlo runner: trial pipeline, metrics, sweeps and CSV.
//!
//! A run is a Cartesian grid over spreading length, antenna count and SNR.
//! Every trial of every grid point draws from its own random substream
//! `(seed, point << 32 | trial)`, and all selected detectors see the same
//! received pair, so detector comparisons within a point are paired.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{conventional_detect, oracle_support, BaselineConfig, Regularization};
use crate::channel::{draw_activity, draw_channel, snr_to_noise_variance, synthesize_pair, ReceivedPair};
use crate::diagnostics::{write_iterations_csv, IterationRecord};
use crate::error::{Error, Result};
use crate::messages::NumericalEvents;
use crate::noncoherent::{run_data_detection, DataConfig, DeviceDecision, LambdaMode, VarianceMode};
use crate::rng::{substream, trial_stream};
use crate::sbl::{run_active_detection, SblConfig, SlotMode, SupportEstimate, ThresholdPolicy};
use crate::waveform::{DpskAlphabet, SpreadingMatrix, SymbolFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    /// Activity detection followed by non-coherent data detection.
    Bpmf,
    /// Estimated support, then LMMSE and ratio averaging.
    Conventional,
    /// Non-coherent data detection on the true support.
    Oracle,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Bpmf => "bpmf",
            Detector::Conventional => "conventional",
            Detector::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpmf" | "proposed" => Ok(Detector::Bpmf),
            "conventional" | "lmmse" => Ok(Detector::Conventional),
            "oracle" | "oracle-aided" | "id-aided" => Ok(Detector::Oracle),
            other => Err(Error::Config(format!("unknown detector '{other}'"))),
        }
    }
}

/// Number of active devices: a fixed count or `floor(frac * U)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActiveCount {
    Count(usize),
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub users: usize,
    pub antennas: Vec<usize>,
    pub spread_len: Vec<usize>,
    pub active: ActiveCount,
    /// DPSK order `M`.
    pub order: usize,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub detectors: Vec<Detector>,
    pub sbl: SblConfig,
    pub data: DataConfig,
    pub baseline: BaselineConfig,
    /// Start the data detector from the activity detector's `lambda`.
    pub warm_lambda: bool,
    pub out: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            users: 100,
            antennas: vec![100],
            spread_len: vec![13],
            active: ActiveCount::Fraction(0.1),
            order: 4,
            snr_db: vec![10.0],
            trials: 100,
            seed: 42,
            detectors: vec![Detector::Bpmf],
            sbl: SblConfig::default(),
            data: DataConfig::default(),
            baseline: BaselineConfig::default(),
            warm_lambda: false,
            out: None,
            diagnostics: None,
        }
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub spread_len: usize,
    pub antennas: usize,
    pub snr_db: f64,
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "" | "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

/// `a:step:b` (inclusive, up to rounding) or a comma list.
pub fn parse_snr_list(v: &str) -> Result<Vec<f64>> {
    let key = "snr-db";
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        [single] => parse_list(key, single),
        [a, step, b] => {
            let (a, step, b): (f64, f64, f64) = (parse_num(key, a)?, parse_num(key, step)?, parse_num(key, b)?);
            if !(step > 0.0) || b < a {
                return Err(Error::Config(format!("{key}: bad range '{v}'")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + step * i as f64).collect())
        }
        _ => Err(Error::Config(format!("{key}: expected a:step:b or a list, got '{v}'"))),
    }
}

fn parse_threshold(v: &str) -> Result<ThresholdPolicy> {
    let v = v.trim().to_ascii_lowercase();
    if v == "gap" || v == "largest-gap" {
        return Ok(ThresholdPolicy::default());
    }
    if v == "two-cluster" || v == "kmeans" {
        return Ok(ThresholdPolicy::TwoCluster);
    }
    if let Some(x) = v.strip_prefix("fixed:") {
        return Ok(ThresholdPolicy::Fixed(parse_num("threshold", x)?));
    }
    if let Some(x) = v.strip_prefix("gap:") {
        let parts: Vec<&str> = x.split(',').collect();
        if let [gap, fallback] = parts.as_slice() {
            return Ok(ThresholdPolicy::LargestGap {
                min_log_gap: parse_num("threshold", gap)?,
                fallback: parse_num("threshold", fallback)?,
            });
        }
    }
    Err(Error::Config(format!(
        "threshold: expected gap, gap:<min_log_gap>,<fallback>, fixed:<value> or two-cluster, got '{v}'"
    )))
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`]; they match the CLI flag names.
    pub const KEYS: &'static [&'static str] = &[
        "users",
        "antennas",
        "spread-len",
        "active-frac",
        "active",
        "mod",
        "snr-db",
        "trials",
        "seed",
        "detector",
        "sbl-iterations",
        "data-iterations",
        "sbl-tolerance",
        "data-tolerance",
        "threshold",
        "slots",
        "damping",
        "variance-floor",
        "paper-literal-variance",
        "lambda-mode",
        "warm-lambda",
        "lmmse-regularization",
        "out",
        "emit-diagnostics",
    ];

    /// Sets one option from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "users" => self.users = parse_num(key, v)?,
            "antennas" => self.antennas = parse_list(key, v)?,
            "spread-len" => self.spread_len = parse_list(key, v)?,
            "active-frac" => self.active = ActiveCount::Fraction(parse_num(key, v)?),
            "active" => self.active = ActiveCount::Count(parse_num(key, v)?),
            "mod" => {
                self.order = match v.to_ascii_lowercase().as_str() {
                    "dbpsk" => 2,
                    "dqpsk" => 4,
                    "d8psk" => 8,
                    other => parse_num(key, other)?,
                }
            }
            "snr-db" => self.snr_db = parse_snr_list(v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "detector" => self.detectors = v.split(',').map(str::parse).collect::<Result<_>>()?,
            "sbl-iterations" => self.sbl.max_iterations = parse_num(key, v)?,
            "data-iterations" => self.data.max_iterations = parse_num(key, v)?,
            "sbl-tolerance" => self.sbl.tolerance = parse_num(key, v)?,
            "data-tolerance" => self.data.tolerance = parse_num(key, v)?,
            "threshold" => self.sbl.threshold = parse_threshold(v)?,
            "slots" => {
                self.sbl.slots = match v {
                    "joint" => SlotMode::Joint,
                    "current" => SlotMode::CurrentOnly,
                    _ => return Err(Error::Config(format!("slots: expected joint or current, got '{v}'"))),
                }
            }
            "damping" => self.sbl.damping = parse_num(key, v)?,
            "variance-floor" => {
                let f = parse_num(key, v)?;
                self.sbl.variance_floor = f;
                self.data.variance_floor = f;
            }
            "paper-literal-variance" => {
                self.data.variance_mode = if parse_bool(key, v)? {
                    VarianceMode::Raw
                } else {
                    VarianceMode::Central
                }
            }
            "lambda-mode" => {
                self.data.lambda_mode = match v {
                    "pair" => LambdaMode::Pair,
                    "current" => LambdaMode::CurrentOnly,
                    "fixed" => LambdaMode::Fixed,
                    _ => return Err(Error::Config(format!("lambda-mode: expected pair, current or fixed, got '{v}'"))),
                }
            }
            "warm-lambda" => self.warm_lambda = parse_bool(key, v)?,
            "lmmse-regularization" => {
                self.baseline.regularization = match v {
                    "known" => Regularization::KnownNoise,
                    "sbl" => Regularization::SblLambda,
                    _ => return Err(Error::Config(format!("lmmse-regularization: expected known or sbl, got '{v}'"))),
                }
            }
            "out" => self.out = Some(PathBuf::from(v)),
            "emit-diagnostics" => self.diagnostics = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are
    /// skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_str(&text)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        match self.active {
            ActiveCount::Count(k) => k,
            ActiveCount::Fraction(f) => (f * self.users as f64 + 1e-9).floor() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.snr_db.is_empty() || self.antennas.is_empty() || self.spread_len.is_empty() {
            return bad("grid axes must be nonempty".into());
        }
        if self.detectors.is_empty() {
            return bad("select at least one detector".into());
        }
        if self.users == 0 {
            return bad("users must be >= 1".into());
        }
        if let ActiveCount::Fraction(f) = self.active {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("active fraction {f} outside [0, 1]"));
            }
        }
        if self.active_count() > self.users {
            return bad(format!("{} active devices exceed {} users", self.active_count(), self.users));
        }
        if self.antennas.contains(&0) {
            return bad("antennas must be >= 1".into());
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite".into());
        }
        if self.trials > u32::MAX as usize || self.points().len() > u32::MAX as usize {
            return bad("too many trials or grid points".into());
        }
        DpskAlphabet::new(self.order)?;
        for &l in &self.spread_len {
            SpreadingMatrix::build(l, self.users, None)?;
        }
        Ok(())
    }

    /// Grid points in `spread_len`-major, then antennas, then SNR order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &spread_len in &self.spread_len {
            for &antennas in &self.antennas {
                for &snr_db in &self.snr_db {
                    out.push(GridPoint {
                        index: out.len(),
                        spread_len,
                        antennas,
                        snr_db,
                    });
                }
            }
        }
        out
    }
}

/// Scores of one detector on one trial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectorTrial {
    pub active: usize,
    pub inactive: usize,
    pub misses: usize,
    pub false_alarms: usize,
    /// Over all truly active devices; a missed device counts every bit.
    pub bit_errors: usize,
    pub bits: usize,
    /// Over devices that are both active and detected.
    pub detected_bit_errors: usize,
    pub detected_bits: usize,
    pub fallbacks: usize,
    pub events: NumericalEvents,
}

/// Everything one trial produced, per selected detector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub scores: Vec<(Detector, DetectorTrial)>,
}

/// Per-iteration traces of one trial.
#[derive(Debug, Clone, Default)]
pub struct TrialTraces {
    pub sbl: Vec<IterationRecord>,
    pub data: Vec<IterationRecord>,
}

/// Draws the received pair for `(point, trial)`.
pub fn draw_pair(config: &RunConfig, point: &GridPoint, trial: usize) -> Result<(SpreadingMatrix, ReceivedPair)> {
    let alphabet = DpskAlphabet::new(config.order)?;
    let spreading = SpreadingMatrix::build(point.spread_len, config.users, None)?;
    let mut rng = substream(config.seed, trial_stream(point.index as u32, trial as u32));
    let activity = draw_activity(config.users, config.active_count(), &mut rng)?;
    let channel = draw_channel(config.users, point.antennas, &mut rng);
    let frames = (0..config.users)
        .map(|_| SymbolFrame::new(&alphabet, vec![alphabet.point(rng.random_range(0..alphabet.order()))]))
        .collect::<Result<Vec<_>>>()?;
    let pair = synthesize_pair(
        &spreading,
        &channel,
        &activity,
        &frames,
        1,
        snr_to_noise_variance(point.snr_db),
        &mut rng,
    )?;
    Ok((spreading, pair))
}

fn score(
    alphabet: &DpskAlphabet,
    pair: &ReceivedPair,
    support: &SupportEstimate,
    decisions: &[DeviceDecision],
    events: NumericalEvents,
) -> DetectorTrial {
    let truth = &pair.truth.activity;
    let bps = alphabet.bits_per_symbol();
    let mut s = DetectorTrial {
        active: truth.active_count(),
        inactive: truth.devices() - truth.active_count(),
        ..DetectorTrial::default()
    };
    s.false_alarms = support.active.iter().filter(|&&u| !truth.is_active(u)).count();
    for &u in truth.active() {
        s.bits += bps;
        let Some(col) = support.active.iter().position(|&d| d == u) else {
            s.misses += 1;
            s.bit_errors += bps;
            continue;
        };
        let d = &decisions[col];
        let want = alphabet.label_bits(alphabet.nearest(pair.truth.data[u]));
        let errors = want.iter().zip(&d.bits).filter(|(a, b)| a != b).count();
        s.bit_errors += errors;
        s.detected_bit_errors += errors;
        s.detected_bits += bps;
    }
    s.fallbacks = decisions.iter().filter(|d| d.fallback).count();
    s.events = events;
    s
}

fn data_config(config: &RunConfig, lambda: Option<&[f64]>) -> DataConfig {
    let mut cfg = config.data.clone();
    if config.warm_lambda {
        cfg.initial_lambda = lambda.map(<[f64]>::to_vec);
    }
    cfg
}

/// One full pipeline pass for every selected detector.
pub fn run_trial(config: &RunConfig, point: &GridPoint, trial: usize) -> Result<TrialResult> {
    run_trial_traced(config, point, trial).map(|(r, _)| r)
}

/// [`run_trial`] that also returns the iteration traces of the first
/// detector that produced them.
pub fn run_trial_traced(config: &RunConfig, point: &GridPoint, trial: usize) -> Result<(TrialResult, TrialTraces)> {
    let alphabet = DpskAlphabet::new(config.order)?;
    let (spreading, pair) = draw_pair(config, point, trial)?;
    let mut traces = TrialTraces::default();

    let needs_sbl = config.detectors.iter().any(|d| *d != Detector::Oracle);
    let active = if needs_sbl {
        let det = run_active_detection(&pair.y_prev, &pair.y_curr, spreading.matrix(), &config.sbl)?;
        traces.sbl = det.records.clone();
        Some(det)
    } else {
        None
    };

    let mut scores = Vec::with_capacity(config.detectors.len());
    for &detector in &config.detectors {
        let s = match detector {
            Detector::Bpmf | Detector::Oracle => {
                let (support, lambda, mut events) = match (&active, detector) {
                    (Some(a), Detector::Bpmf) => (a.support.clone(), Some(a.state.lambda.as_slice()), a.events),
                    _ => (oracle_support(&pair.truth.activity), None, NumericalEvents::default()),
                };
                let p_bar = spreading.restrict(&support.active)?;
                let data = run_data_detection(&pair.y_prev, &pair.y_curr, &p_bar, &alphabet, &data_config(config, lambda))?;
                if traces.data.is_empty() {
                    traces.data = data.records.clone();
                }
                events.merge(&data.events);
                score(&alphabet, &pair, &support, &data.decisions, events)
            }
            Detector::Conventional => {
                let a = active.as_ref().expect("activity detection ran");
                let p_bar = spreading.restrict(&a.support.active)?;
                let noise: Vec<f64> = match config.baseline.regularization {
                    Regularization::KnownNoise => vec![pair.noise_variance],
                    Regularization::SblLambda => a.state.lambda.iter().map(|l| 1.0 / l).collect(),
                };
                let d = conventional_detect(&pair.y_prev, &pair.y_curr, &p_bar, &alphabet, &noise, &config.baseline)?;
                score(&alphabet, &pair, &a.support, &d, a.events)
            }
        };
        scores.push((detector, s));
    }
    Ok((TrialResult { trial, scores }, traces))
}

/// Aggregated results of one detector at one grid point. Rates with a
/// zero denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub snr_db: f64,
    #[serde(rename = "L")]
    pub spread_len: usize,
    #[serde(rename = "N")]
    pub antennas: usize,
    #[serde(rename = "U")]
    pub users: usize,
    #[serde(rename = "K")]
    pub active: usize,
    pub detector: String,
    pub miss_rate: Option<f64>,
    pub false_rate: Option<f64>,
    pub ber: Option<f64>,
    pub trials: usize,
    pub bits: usize,
    pub seconds: f64,
    pub ber_detected: Option<f64>,
    pub bit_errors: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub active_total: usize,
    pub inactive_total: usize,
    pub variance_clamps: u64,
    pub precision_clamps: u64,
    pub underflows: u64,
    pub degenerate_splits: u64,
    pub fallbacks: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Sums per-trial scores of one detector into a record.
pub fn compute_metrics(
    point: &GridPoint,
    users: usize,
    active: usize,
    detector: Detector,
    trials: &[DetectorTrial],
    seconds: f64,
) -> MetricsRecord {
    let mut t = DetectorTrial::default();
    for s in trials {
        t.active += s.active;
        t.inactive += s.inactive;
        t.misses += s.misses;
        t.false_alarms += s.false_alarms;
        t.bit_errors += s.bit_errors;
        t.bits += s.bits;
        t.detected_bit_errors += s.detected_bit_errors;
        t.detected_bits += s.detected_bits;
        t.fallbacks += s.fallbacks;
        t.events.merge(&s.events);
    }
    MetricsRecord {
        snr_db: point.snr_db,
        spread_len: point.spread_len,
        antennas: point.antennas,
        users,
        active,
        detector: detector.name().to_string(),
        miss_rate: ratio(t.misses, t.active),
        false_rate: ratio(t.false_alarms, t.inactive),
        ber: ratio(t.bit_errors, t.bits),
        trials: trials.len(),
        bits: t.bits,
        seconds,
        ber_detected: ratio(t.detected_bit_errors, t.detected_bits),
        bit_errors: t.bit_errors,
        misses: t.misses,
        false_alarms: t.false_alarms,
        active_total: t.active,
        inactive_total: t.inactive,
        variance_clamps: t.events.variance_clamps,
        precision_clamps: t.events.precision_clamps,
        underflows: t.events.underflows,
        degenerate_splits: t.events.degenerate_splits,
        fallbacks: t.fallbacks,
    }
}

/// Runs every trial of one grid point (in parallel) and reduces the
/// results in trial order.
pub fn run_point(config: &RunConfig, point: &GridPoint) -> Result<(Vec<TrialResult>, f64)> {
    let start = Instant::now();
    let results = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, point, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((results, start.elapsed().as_secs_f64()))
}

/// Runs the whole grid. Records come out point by point, detectors in the
/// configured order.
pub fn sweep(config: &RunConfig) -> Result<Vec<MetricsRecord>> {
    sweep_with_trials(config).map(|(r, _)| r)
}

/// [`sweep`] that also hands back the raw per-trial results of each point.
pub fn sweep_with_trials(config: &RunConfig) -> Result<(Vec<MetricsRecord>, Vec<Vec<TrialResult>>)> {
    config.validate()?;
    let mut records = Vec::new();
    let mut raw = Vec::new();
    for point in config.points() {
        let (results, seconds) = run_point(config, &point)?;
        for (i, &det) in config.detectors.iter().enumerate() {
            let scores: Vec<DetectorTrial> = results.iter().map(|r| r.scores[i].1.clone()).collect();
            records.push(compute_metrics(&point, config.users, config.active_count(), det, &scores, seconds));
        }
        if let Some(dir) = &config.diagnostics {
            write_traces(dir, config, &point)?;
        }
        raw.push(results);
    }
    Ok((records, raw))
}

fn write_traces(dir: &Path, config: &RunConfig, point: &GridPoint) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let (_, traces) = run_trial_traced(config, point, 0)?;
    for (name, records) in [("sbl", &traces.sbl), ("data", &traces.data)] {
        let path = dir.join(format!("point{}_{name}.csv", point.index));
        let file = File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        write_iterations_csv(records, file).map_err(|source| Error::Csv { path, source })?;
    }
    Ok(())
}

/// Writes records as CSV (header always present).
pub fn write_csv<W: Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Column names in file order.
pub const CSV_HEADER: &[&str] = &[
    "snr_db",
    "L",
    "N",
    "U",
    "K",
    "detector",
    "miss_rate",
    "false_rate",
    "ber",
    "trials",
    "bits",
    "seconds",
    "ber_detected",
    "bit_errors",
    "misses",
    "false_alarms",
    "active_total",
    "inactive_total",
    "variance_clamps",
    "precision_clamps",
    "underflows",
    "degenerate_splits",
    "fallbacks",
];

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(records, file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<csv::Result<Vec<_>>>().map_err(wrap)
}
