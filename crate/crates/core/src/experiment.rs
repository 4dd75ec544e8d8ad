//! Monte Carlo experiment harness: size and power tables, estimation tables,
//! signature ladders and the empirical workflow.
//!
//! One Euler path per replication is simulated on the finest sampling grid of
//! the configuration and reused for every frequency and every `rho`. Work is
//! grouped per model; when an output directory is set each model's rows are
//! cached in a file named after a fingerprint of the configuration, so an
//! interrupted run resumes and a finished run is not recomputed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::cointtest::{run_test, step_one_residuals, TestKind};
use crate::error::{Error, Result};
use crate::estimate::{fit_cointegration, ols, residual_diagnostics, rho_hat, rho_tilde};
use crate::limitdist::{build_table, tabulate, CriticalValueTable, SigmaCurve, NO_SIGMA_HASH};
use crate::preprocess::{deflate, detrend_deflate, DeflationConfig, SigmaScale, TruncationConfig};
use crate::rng::split_seed;
use crate::simulate::{assemble, simulate_latent, Features, JumpScale, ModelSpec, RhoRegime, SimParams};
use crate::timegrid::{
    pair_align, resample_previous_tick, subsample_truncating, PairSeries, Session, SessionClock, TickSeries,
};

/// Standard signature ladder in session seconds: 10 min, 30 min, 1 h, 2 h, 1 d, 2 d.
pub const SIGNATURE_LADDER: [f64; 6] = [600.0, 1_800.0, 3_600.0, 7_200.0, 23_400.0, 46_800.0];

/// Points used to sample a model's market-volatility curve for table keys.
pub const SIGMA_CURVE_POINTS: usize = 1_001;

const LATENT_STREAM: u64 = 0x1A7E_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub models: Vec<u8>,
    pub rhos: Vec<f64>,
    /// Sampling intervals in session seconds; each fixes one `n`.
    pub intervals: Vec<f64>,
    pub reps: usize,
    pub level: f64,
    pub kinds: Vec<TestKind>,
    pub horizon_days: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub truncation: TruncationConfig,
    pub deflation: DeflationConfig,
    pub euler_step_seconds: f64,
    pub params: SimParams,
    pub session: Session,
    pub cv_reps: usize,
    pub cv_grid: usize,
    pub confidence: f64,
}

impl ExperimentConfig {
    /// `paper`: `T = 504` days, `M = 1000`, full ladder. `desk`: `T = 126`
    /// days, `M = 200`, ladder without 2 h (it does not divide 126 days).
    pub fn preset(preset: Preset) -> Self {
        let (horizon, reps, intervals, cv_reps, cv_grid) = match preset {
            Preset::Paper => (504.0, 1_000, SIGNATURE_LADDER.to_vec(), 100_000, 5_000),
            Preset::Desk => (126.0, 200, vec![600.0, 1_800.0, 3_600.0, 23_400.0, 46_800.0], 20_000, 2_000),
        };
        ExperimentConfig {
            preset,
            models: (1..=8).collect(),
            rhos: vec![1.0, 0.9, 0.8],
            intervals,
            reps,
            level: 0.05,
            kinds: default_kinds(),
            horizon_days: horizon,
            seed: 1,
            out_dir: None,
            truncation: TruncationConfig::default(),
            deflation: DeflationConfig::default(),
            euler_step_seconds: 10.0,
            params: SimParams::default(),
            session: Session::default(),
            cv_reps,
            cv_grid,
            confidence: 0.95,
        }
    }

    /// Parses `key = value` lines on top of the preset named by a `preset`
    /// key (desk if absent). `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let preset = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse()?,
            None => Preset::Desk,
        };
        let mut cfg = Self::preset(preset);
        for (k, v) in &pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_kv(&fs::read_to_string(path)?)
    }

    /// Sets one key. Keys match the long CLI flags with `_` for `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value {value:?} for {what}"));
        let num = |what: &str| value.trim().parse::<f64>().map_err(|_| bad(what));
        let int = |what: &str| value.trim().parse::<u64>().map_err(|_| bad(what));
        match key.trim().replace('-', "_").as_str() {
            "preset" => *self = Self::preset(value.parse()?),
            "models" => {
                self.models = split_list(value)
                    .map(|s| s.parse::<u8>().map_err(|_| bad("models")))
                    .collect::<Result<_>>()?
            }
            "rhos" => {
                self.rhos = split_list(value)
                    .map(|s| s.parse::<f64>().map_err(|_| bad("rhos")))
                    .collect::<Result<_>>()?
            }
            "intervals" | "frequencies" => {
                self.intervals = split_list(value)
                    .map(|s| parse_interval(s, &self.session))
                    .collect::<Result<_>>()?
            }
            "reps" | "m" => self.reps = int("reps")? as usize,
            "level" => self.level = num("level")?,
            "kinds" => self.kinds = parse_kinds(value)?,
            "horizon_days" | "t" => self.horizon_days = num("horizon_days")?,
            "seed" => self.seed = int("seed")?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value.trim())),
            "a0" => self.truncation.a0 = num("a0")?,
            "omega" | "omega_bar" => self.truncation.omega_bar = num("omega_bar")?,
            "sigma_scale" => {
                self.truncation.sigma_scale = match value.trim() {
                    "auto" => SigmaScale::Auto,
                    "none" | "disabled" => SigmaScale::Disabled,
                    v => SigmaScale::Fixed(v.parse().map_err(|_| bad("sigma_scale"))?),
                }
            }
            "gamma" => self.deflation.gamma = num("gamma")?,
            "gamma_prime" => self.deflation.gamma_prime = num("gamma_prime")?,
            "euler_step" | "euler_step_seconds" => self.euler_step_seconds = num("euler_step")?,
            "cv_reps" => self.cv_reps = int("cv_reps")? as usize,
            "cv_grid" => self.cv_grid = int("cv_grid")? as usize,
            "confidence" => self.confidence = num("confidence")?,
            "sigma_tilde_sq" => self.params.sigma_tilde_sq = num("sigma_tilde_sq")?,
            "rates_per_year" => {
                self.params.rates_per_year = value.trim().parse().map_err(|_| bad("rates_per_year"))?
            }
            "jump_scale" => {
                self.params.jump_scale = match value.trim() {
                    "variance" => JumpScale::Variance,
                    "stddev" | "sd" => JumpScale::StdDev,
                    _ => return Err(bad("jump_scale")),
                }
            }
            "x0" => self.params.x0 = num("x0")?,
            "session_seconds" => {
                let s = num("session_seconds")?;
                if !(s > 0.0) {
                    return Err(bad("session_seconds"));
                }
                self.session = Session::with_seconds_per_day(s);
            }
            // handled by the command-line front end
            "threads" => {}
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.models.is_empty() || self.rhos.is_empty() || self.intervals.is_empty() {
            return Err(Error::Config("models, rhos and intervals must be non-empty".into()));
        }
        for &m in &self.models {
            Features::for_model(m).map_err(|e| Error::Config(e.to_string()))?;
        }
        for &r in &self.rhos {
            if !(r > -1.0 && r <= 1.0) {
                return Err(Error::Config(format!("rho must lie in (-1, 1], got {r}")));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("at least one test kind is needed".into()));
        }
        self.truncation.validate()?;
        self.deflation.validate()?;
        let base = self.base_interval();
        let euler_n = self.horizon_days * self.session.seconds_per_day / self.euler_step_seconds;
        for &iv in &self.intervals {
            let n = self.n_for(iv)?;
            let steps = euler_n / n as f64;
            if (steps - steps.round()).abs() > 1e-9 * steps {
                return Err(Error::Config(format!(
                    "n = {n} does not divide the Euler-grid count {euler_n}"
                )));
            }
            let ratio = iv / base;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return Err(Error::Config(format!(
                    "interval {iv} s is not a multiple of the finest interval {base} s"
                )));
            }
        }
        Ok(())
    }

    /// Finest sampling interval, on which the latent paths are simulated.
    pub fn base_interval(&self) -> f64 {
        self.intervals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Number of increments at sampling interval `seconds`.
    pub fn n_for(&self, seconds: f64) -> Result<usize> {
        let n_real = self.horizon_days * self.session.seconds_per_day / seconds;
        let n = n_real.round();
        if !(n >= 2.0) || (n_real - n).abs() > 1e-9 * n_real {
            return Err(Error::Config(format!(
                "interval {seconds} s gives a non-integer n = {n_real} over {} days",
                self.horizon_days
            )));
        }
        Ok(n as usize)
    }

    fn latent_spec(&self, model: u8, rep: usize) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(model, RhoRegime::NoCointegration, 0)?
            .with_horizon(self.horizon_days)
            .with_sampling_seconds(self.base_interval());
        spec.euler_step_seconds = self.euler_step_seconds;
        spec.params = self.params;
        spec.session = self.session;
        spec.seed = split_seed(self.seed, LATENT_STREAM + model as u64, rep as u64);
        Ok(spec)
    }

    /// Hash of everything that determines the rows of one model.
    fn fingerprint(&self, what: &str, model: u8, extra: &str) -> String {
        let text = format!(
            "{what};{model};{:?};{:?};{};{:?};{};{};{:?};{:?};{};{:?};{:?};{};{};{};{extra}",
            self.rhos,
            self.intervals,
            self.reps,
            self.level,
            kinds_string(&self.kinds),
            self.horizon_days,
            self.truncation,
            self.deflation,
            self.seed,
            self.euler_step_seconds,
            self.params,
            self.session.seconds_per_day,
            self.cv_reps,
            self.cv_grid,
        );
        fnv_hex(text.as_bytes())
    }
}

/// Modified DF plus the four classical tests with default lag rules.
pub fn default_kinds() -> Vec<TestKind> {
    vec![
        TestKind::ModifiedDf,
        TestKind::ClassicalDf,
        TestKind::Adf(usize::MAX),
        TestKind::PpZAlpha(usize::MAX),
        TestKind::PpZTau(usize::MAX),
    ]
}

/// Parses a comma-separated kind list; `all` or `standard` gives [`default_kinds`].
pub fn parse_kinds(value: &str) -> Result<Vec<TestKind>> {
    let v = value.trim().to_ascii_lowercase();
    if v == "all" || v == "standard" {
        return Ok(default_kinds());
    }
    split_list(&v).map(TestKind::from_str).collect()
}

fn kinds_string(kinds: &[TestKind]) -> String {
    kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// `600`, `10m`, `30min`, `1h`, `2h`, `1d`, `2d` to session seconds.
pub fn parse_interval(s: &str, session: &Session) -> Result<f64> {
    let s = s.trim().to_ascii_lowercase();
    let split = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad sampling interval {s:?}")))?;
    let scale = match unit.trim() {
        "" | "s" => 1.0,
        "m" | "min" => 60.0,
        "h" => 3_600.0,
        "d" => session.seconds_per_day,
        _ => return Err(Error::Config(format!("bad sampling interval unit in {s:?}"))),
    };
    let seconds = v * scale;
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::Config(format!("sampling interval must be positive, got {s:?}")));
    }
    Ok(seconds)
}

fn fnv_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Market-volatility curve of `model`, as used for detrended table keys.
pub fn model_sigma_curve(model: u8) -> Result<SigmaCurve> {
    let shape = Features::for_model(model)?.market;
    SigmaCurve::from_fn(|u| shape.factor(u), SIGMA_CURVE_POINTS)
}

/// Plain CSV table with run metadata kept apart so the rows stay deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub meta: Vec<(String, String)>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["key", "value"])?;
        for (k, v) in &self.meta {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.meta.csv`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{name}.csv"));
        self.write_csv(fs::File::create(&path)?)?;
        self.write_meta(fs::File::create(dir.join(format!("{name}.meta.csv")))?)?;
        Ok(path)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Data(format!("bad number {s:?} in cached cell file")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizePowerRow {
    pub model: u8,
    pub interval_seconds: f64,
    pub n: usize,
    pub rho: f64,
    pub kind: String,
    pub rejections: usize,
    pub failed: usize,
    pub reps: usize,
}

impl SizePowerRow {
    pub const HEADER: [&'static str; 10] = [
        "model", "interval_seconds", "n", "rho", "kind", "rejections", "failed", "reps", "frequency", "se",
    ];

    pub fn frequency(&self) -> f64 {
        self.rejections as f64 / self.reps as f64
    }

    /// Monte Carlo standard error `sqrt(p (1 - p) / M)`.
    pub fn se(&self) -> f64 {
        let p = self.frequency();
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.model.to_string(),
            fmt_f(self.interval_seconds),
            self.n.to_string(),
            fmt_f(self.rho),
            self.kind.clone(),
            self.rejections.to_string(),
            self.failed.to_string(),
            self.reps.to_string(),
            fmt_f(self.frequency()),
            fmt_f(self.se()),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self> {
        let get = |i: usize| r.get(i).ok_or_else(|| Error::Data("short cached row".into()));
        let int = |i: usize| -> Result<usize> {
            get(i)?.parse().map_err(|_| Error::Data("bad integer in cached row".into()))
        };
        Ok(SizePowerRow {
            model: int(0)? as u8,
            interval_seconds: parse_f(get(1)?)?,
            n: int(2)?,
            rho: parse_f(get(3)?)?,
            kind: get(4)?.to_string(),
            rejections: int(5)?,
            failed: int(6)?,
            reps: int(7)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRow {
    pub model: u8,
    pub interval_seconds: f64,
    pub n: usize,
    pub rho: f64,
    pub mod_alpha_bias: f64,
    pub mod_alpha_std: f64,
    pub mod_c_bias: f64,
    pub mod_c_std: f64,
    pub std_alpha_bias: f64,
    pub std_alpha_std: f64,
    pub std_c_bias: f64,
    pub std_c_std: f64,
    pub rho_hat_mean: f64,
    pub rho_tilde_mean: f64,
    pub reps: usize,
    pub failed: usize,
}

impl EstimationRow {
    pub const HEADER: [&'static str; 16] = [
        "model",
        "interval_seconds",
        "n",
        "rho",
        "mod_alpha_bias",
        "mod_alpha_std",
        "mod_c_bias",
        "mod_c_std",
        "std_alpha_bias",
        "std_alpha_std",
        "std_c_bias",
        "std_c_std",
        "rho_hat_mean",
        "rho_tilde_mean",
        "reps",
        "failed",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.model.to_string(),
            fmt_f(self.interval_seconds),
            self.n.to_string(),
            fmt_f(self.rho),
            fmt_f(self.mod_alpha_bias),
            fmt_f(self.mod_alpha_std),
            fmt_f(self.mod_c_bias),
            fmt_f(self.mod_c_std),
            fmt_f(self.std_alpha_bias),
            fmt_f(self.std_alpha_std),
            fmt_f(self.std_c_bias),
            fmt_f(self.std_c_std),
            fmt_f(self.rho_hat_mean),
            fmt_f(self.rho_tilde_mean),
            self.reps.to_string(),
            self.failed.to_string(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self> {
        let get = |i: usize| r.get(i).ok_or_else(|| Error::Data("short cached row".into()));
        let f = |i: usize| parse_f(get(i)?);
        let int = |i: usize| -> Result<usize> {
            get(i)?.parse().map_err(|_| Error::Data("bad integer in cached row".into()))
        };
        Ok(EstimationRow {
            model: int(0)? as u8,
            interval_seconds: f(1)?,
            n: int(2)?,
            rho: f(3)?,
            mod_alpha_bias: f(4)?,
            mod_alpha_std: f(5)?,
            mod_c_bias: f(6)?,
            mod_c_std: f(7)?,
            std_alpha_bias: f(8)?,
            std_alpha_std: f(9)?,
            std_c_bias: f(10)?,
            std_c_std: f(11)?,
            rho_hat_mean: f(12)?,
            rho_tilde_mean: f(13)?,
            reps: int(14)?,
            failed: int(15)?,
        })
    }
}

fn to_table<R>(header: &[&str], rows: &[R], record: impl Fn(&R) -> Vec<String>, meta: Vec<(String, String)>) -> ResultTable {
    ResultTable {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(record).collect(),
        meta,
    }
}

pub fn size_power_table(rows: &[SizePowerRow], meta: Vec<(String, String)>) -> ResultTable {
    to_table(&SizePowerRow::HEADER, rows, SizePowerRow::record, meta)
}

pub fn estimation_table(rows: &[EstimationRow], meta: Vec<(String, String)>) -> ResultTable {
    to_table(&EstimationRow::HEADER, rows, EstimationRow::record, meta)
}

fn cell_path(cfg: &ExperimentConfig, what: &str, model: u8, fingerprint: &str) -> Option<PathBuf> {
    cfg.out_dir
        .as_ref()
        .map(|d| d.join("cells").join(format!("{what}-m{model}-{fingerprint}.csv")))
}

fn load_cell<R>(path: &Path, parse: impl Fn(&csv::StringRecord) -> Result<R>) -> Result<Vec<R>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.records().map(|r| parse(&r?)).collect()
}

fn store_cell(path: &Path, header: &[&str], records: Vec<Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    // write then rename so that a half-written file never counts as done
    let tmp = path.with_extension("partial");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(header)?;
        for r in records {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs per-model work, loading cached cells when present. Returns rows in
/// model order plus the number of models actually simulated.
fn run_cells<R: Send>(
    cfg: &ExperimentConfig,
    what: &str,
    extra: &str,
    header: &[&str],
    record: impl Fn(&R) -> Vec<String>,
    parse: impl Fn(&csv::StringRecord) -> Result<R>,
    compute: impl Fn(u8) -> Result<Vec<R>>,
) -> Result<(Vec<R>, usize)> {
    let mut rows = Vec::new();
    let mut computed = 0;
    for &model in &cfg.models {
        let fp = cfg.fingerprint(what, model, extra);
        let path = cell_path(cfg, what, model, &fp);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            log::info!("{what}: model {model} loaded from {}", p.display());
            rows.extend(load_cell(p, &parse)?);
            continue;
        }
        let started = Instant::now();
        let cell = compute(model)?;
        computed += 1;
        log::info!("{what}: model {model} done in {:.1} s", started.elapsed().as_secs_f64());
        if let Some(p) = path {
            store_cell(&p, header, cell.iter().map(&record).collect())?;
        }
        rows.extend(cell);
    }
    Ok((rows, computed))
}

fn meta_common(cfg: &ExperimentConfig, started: Instant, computed: usize) -> Vec<(String, String)> {
    vec![
        ("preset".into(), format!("{:?}", cfg.preset).to_ascii_lowercase()),
        ("master_seed".into(), cfg.seed.to_string()),
        ("reps".into(), cfg.reps.to_string()),
        ("horizon_days".into(), cfg.horizon_days.to_string()),
        ("latent_seed_rule".into(), "split_seed(master, 0x1A7E0000 + model, rep)".into()),
        ("models_simulated".into(), computed.to_string()),
        ("elapsed_seconds".into(), format!("{:.3}", started.elapsed().as_secs_f64())),
    ]
}

/// Table key hash a test of `kind` uses on data from `model`.
fn sigma_hash_for(kind: TestKind, model: u8) -> Result<String> {
    if kind.is_detrended() {
        Ok(model_sigma_curve(model)?.hash())
    } else {
        Ok(NO_SIGMA_HASH.to_string())
    }
}

/// Simulated critical values for every kind, the configured level and, for the
/// detrended kind, every model's market-volatility curve.
pub fn required_table(cfg: &ExperimentConfig) -> Result<CriticalValueTable> {
    let plain: Vec<TestKind> = cfg.kinds.iter().copied().filter(|k| !k.is_detrended()).collect();
    let mut table = build_table(&plain, &[cfg.level], cfg.cv_reps, cfg.cv_grid, cfg.seed, None)?;
    if cfg.kinds.iter().any(|k| k.is_detrended()) {
        for &model in &cfg.models {
            let sigma = model_sigma_curve(model)?;
            table.merge(build_table(
                &[TestKind::ModifiedDfDetrended],
                &[cfg.level],
                cfg.cv_reps,
                cfg.cv_grid,
                cfg.seed,
                Some(&sigma),
            )?);
        }
    }
    Ok(table)
}

/// Rejection frequencies of every test for every model, `n` and `rho`.
///
/// Every needed critical value is looked up before any path is simulated.
/// A replication whose pipeline fails counts as a non-rejection and is
/// reported in the `failed` column.
pub fn run_size_power(cfg: &ExperimentConfig, cv: &CriticalValueTable) -> Result<(Vec<SizePowerRow>, ResultTable)> {
    cfg.validate()?;
    let mut quantiles = String::new();
    for &model in &cfg.models {
        for kind in &cfg.kinds {
            let hash = sigma_hash_for(*kind, model)?;
            let q = cv.lookup(kind.table_key(), cfg.level, kind.is_detrended(), &hash)?;
            write!(quantiles, "{}:{hash}:{q:?};", kind.table_key()).ok();
        }
    }
    let started = Instant::now();
    let base = cfg.base_interval();
    let (rows, computed) = run_cells(
        cfg,
        "size_power",
        &quantiles,
        &SizePowerRow::HEADER,
        SizePowerRow::record,
        SizePowerRow::from_record,
        |model| {
            let sigma = model_sigma_curve(model)?;
            let ncell = cfg.rhos.len() * cfg.intervals.len() * cfg.kinds.len();
            let outcomes: Vec<Vec<Option<bool>>> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| -> Result<Vec<Option<bool>>> {
                    let latent = simulate_latent(&cfg.latent_spec(model, rep)?)?;
                    let mut out = Vec::with_capacity(ncell);
                    for &rho in &cfg.rhos {
                        for &iv in &cfg.intervals {
                            let m = (iv / base).round() as usize;
                            let sim = assemble(&latent, m, rho, 1.0, 2.0)?;
                            for kind in &cfg.kinds {
                                let k = kind.resolve(sim.pair.n());
                                let r = run_test(&sim.pair, k, cfg.level, cv, &cfg.truncation, &cfg.deflation, Some(&sigma));
                                match r {
                                    Ok(t) => out.push(Some(t.reject)),
                                    Err(e) if e.is_data_error() => out.push(None),
                                    Err(e) => return Err(e),
                                }
                            }
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            let mut rows = Vec::with_capacity(ncell);
            let mut idx = 0;
            for &rho in &cfg.rhos {
                for &iv in &cfg.intervals {
                    let n = cfg.n_for(iv)?;
                    for kind in &cfg.kinds {
                        let (mut rej, mut failed) = (0, 0);
                        for o in &outcomes {
                            match o[idx] {
                                Some(true) => rej += 1,
                                Some(false) => {}
                                None => failed += 1,
                            }
                        }
                        rows.push(SizePowerRow {
                            model,
                            interval_seconds: iv,
                            n,
                            rho,
                            kind: kind.resolve(n).to_string(),
                            rejections: rej,
                            failed,
                            reps: cfg.reps,
                        });
                        idx += 1;
                    }
                }
            }
            Ok(rows)
        },
    )?;
    let mut meta = meta_common(cfg, started, computed);
    meta.push(("level".into(), cfg.level.to_string()));
    let table = size_power_table(&rows, meta);
    if let Some(dir) = &cfg.out_dir {
        table.save(dir, "size_power")?;
    }
    Ok((rows, table))
}

/// Estimates of one pair by the modified and the standard estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationSample {
    pub mod_alpha: f64,
    pub mod_c: f64,
    pub std_alpha: f64,
    pub std_c: f64,
    /// `NaN` when the residual autocorrelation is undefined.
    pub rho_hat: f64,
    pub rho_tilde: f64,
}

pub fn estimate_pair(pair: &PairSeries, cfg_t: &TruncationConfig, cfg_d: &DeflationConfig) -> Result<EstimationSample> {
    let dp = deflate(pair, cfg_t, cfg_d)?;
    let fit = fit_cointegration(&dp)?;
    let rho_hat = match residual_diagnostics(&fit, &dp) {
        Ok(d) => d.rho_hat,
        Err(Error::DiagnosticsDegenerate { partial, .. }) => partial.rho_hat.unwrap_or(f64::NAN),
        Err(e) => return Err(e),
    };
    let x = pair.x().values();
    let y = pair.y().values();
    let line = ols(&x[1..], &y[1..])?;
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - line.intercept - line.slope * a).collect();
    Ok(EstimationSample {
        mod_alpha: fit.alpha_hat,
        mod_c: fit.c_hat,
        std_alpha: line.slope,
        std_c: line.intercept,
        rho_hat,
        rho_tilde: rho_tilde(&resid).unwrap_or(f64::NAN),
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates samples into bias and standard deviation against `(alpha0, c0)`.
pub fn summarize_estimates(samples: &[EstimationSample], alpha0: f64, c0: f64) -> [f64; 10] {
    let col = |f: &dyn Fn(&EstimationSample) -> f64| -> Vec<f64> { samples.iter().map(f).collect() };
    let (ma, sa) = mean_std(&col(&|s| s.mod_alpha - alpha0));
    let (mc, sc) = mean_std(&col(&|s| s.mod_c - c0));
    let (ta, tsa) = mean_std(&col(&|s| s.std_alpha - alpha0));
    let (tc, tsc) = mean_std(&col(&|s| s.std_c - c0));
    let finite = |v: Vec<f64>| -> Vec<f64> { v.into_iter().filter(|x| x.is_finite()).collect() };
    let (rh, _) = mean_std(&finite(col(&|s| s.rho_hat)));
    let (rt, _) = mean_std(&finite(col(&|s| s.rho_tilde)));
    [ma, sa, mc, sc, ta, tsa, tc, tsc, rh, rt]
}

/// Bias and standard deviation of both estimators, and mean residual autocorrelations.
pub fn run_estimation_table(cfg: &ExperimentConfig) -> Result<(Vec<EstimationRow>, ResultTable)> {
    cfg.validate()?;
    let started = Instant::now();
    let base = cfg.base_interval();
    let (rows, computed) = run_cells(
        cfg,
        "estimation",
        "",
        &EstimationRow::HEADER,
        EstimationRow::record,
        EstimationRow::from_record,
        |model| {
            let ncell = cfg.rhos.len() * cfg.intervals.len();
            let per_rep: Vec<Vec<Option<EstimationSample>>> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| -> Result<Vec<Option<EstimationSample>>> {
                    let spec = cfg.latent_spec(model, rep)?;
                    let latent = simulate_latent(&spec)?;
                    let mut out = Vec::with_capacity(ncell);
                    for &rho in &cfg.rhos {
                        for &iv in &cfg.intervals {
                            let m = (iv / base).round() as usize;
                            let sim = assemble(&latent, m, rho, spec.c0, spec.alpha0)?;
                            match estimate_pair(&sim.pair, &cfg.truncation, &cfg.deflation) {
                                Ok(s) => out.push(Some(s)),
                                Err(e) if e.is_data_error() => out.push(None),
                                Err(e) => return Err(e),
                            }
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            let spec = cfg.latent_spec(model, 0)?;
            let mut rows = Vec::with_capacity(ncell);
            let mut idx = 0;
            for &rho in &cfg.rhos {
                for &iv in &cfg.intervals {
                    let samples: Vec<EstimationSample> = per_rep.iter().filter_map(|r| r[idx]).collect();
                    let s = summarize_estimates(&samples, spec.alpha0, spec.c0);
                    rows.push(EstimationRow {
                        model,
                        interval_seconds: iv,
                        n: cfg.n_for(iv)?,
                        rho,
                        mod_alpha_bias: s[0],
                        mod_alpha_std: s[1],
                        mod_c_bias: s[2],
                        mod_c_std: s[3],
                        std_alpha_bias: s[4],
                        std_alpha_std: s[5],
                        std_c_bias: s[6],
                        std_c_std: s[7],
                        rho_hat_mean: s[8],
                        rho_tilde_mean: s[9],
                        reps: cfg.reps,
                        failed: cfg.reps - samples.len(),
                    });
                    idx += 1;
                }
            }
            Ok(rows)
        },
    )?;
    let table = estimation_table(&rows, meta_common(cfg, started, computed));
    if let Some(dir) = &cfg.out_dir {
        table.save(dir, "estimation")?;
    }
    Ok((rows, table))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRow {
    pub interval_seconds: f64,
    pub n: usize,
    pub rho_hat: f64,
    pub rho_tilde: f64,
}

pub fn signature_table(rows: &[SignatureRow]) -> ResultTable {
    to_table(
        &["interval_seconds", "n", "rho_hat", "rho_tilde"],
        rows,
        |r| vec![fmt_f(r.interval_seconds), r.n.to_string(), fmt_f(r.rho_hat), fmt_f(r.rho_tilde)],
        Vec::new(),
    )
}

/// Subsamples a pair to `interval_seconds`, dropping a non-dividing tail.
pub fn pair_at_interval(pair: &PairSeries, interval_seconds: f64) -> Result<PairSeries> {
    let base = pair.grid().interval_seconds();
    let ratio = interval_seconds / base;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::Argument(format!(
            "{interval_seconds} s is not a multiple of the pair's {base} s sampling"
        )));
    }
    let m = m as usize;
    if m == 1 {
        return Ok(pair.clone());
    }
    pair_align(subsample_truncating(pair.x(), m)?, subsample_truncating(pair.y(), m)?)
}

/// `rho_hat` and `rho_tilde` of one pair at each interval of `ladder`.
pub fn signature_plot(
    pair: &PairSeries,
    ladder: &[f64],
    cfg_t: &TruncationConfig,
    cfg_d: &DeflationConfig,
) -> Result<Vec<SignatureRow>> {
    ladder
        .iter()
        .map(|&iv| {
            let p = pair_at_interval(pair, iv)?;
            let dp = deflate(&p, cfg_t, cfg_d)?;
            let fit = fit_cointegration(&dp)?;
            let eps = step_one_residuals(p.x().values(), p.y().values())?;
            Ok(SignatureRow {
                interval_seconds: iv,
                n: p.n(),
                rho_hat: rho_hat(&fit.residuals).unwrap_or(f64::NAN),
                rho_tilde: rho_tilde(&eps).unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Mean signature ladder of a simulated batch, one row per model, `rho` and interval.
pub fn signature_batch(cfg: &ExperimentConfig) -> Result<Vec<(u8, f64, SignatureRow)>> {
    let (rows, _) = run_estimation_table(cfg)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            (
                r.model,
                r.rho,
                SignatureRow {
                    interval_seconds: r.interval_seconds,
                    n: r.n,
                    rho_hat: r.rho_hat_mean,
                    rho_tilde: r.rho_tilde_mean,
                },
            )
        })
        .collect())
}

/// Outcome of one test at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub kind: String,
    pub outcome: std::result::Result<(f64, f64, bool), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRow {
    pub interval_seconds: f64,
    pub n: usize,
    pub decisions: Vec<Decision>,
    pub rho_hat: f64,
    pub rho_tilde: f64,
    pub error: Option<String>,
}

/// Test decisions and residual autocorrelations at every ladder frequency of
/// an aligned pair. Failures are recorded per frequency and per test.
pub fn run_empirical_pair(
    pair: &PairSeries,
    ladder: &[f64],
    cfg: &ExperimentConfig,
    cv: &CriticalValueTable,
) -> Result<Vec<EmpiricalRow>> {
    let mut cv = cv.clone();
    let mut rows = Vec::with_capacity(ladder.len());
    for &iv in ladder {
        let p = match pair_at_interval(pair, iv) {
            Ok(p) => p,
            Err(e) => {
                rows.push(EmpiricalRow {
                    interval_seconds: iv,
                    n: 0,
                    decisions: Vec::new(),
                    rho_hat: f64::NAN,
                    rho_tilde: f64::NAN,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        let mut decisions = Vec::with_capacity(cfg.kinds.len());
        for kind in &cfg.kinds {
            let k = kind.resolve(p.n());
            let sigma = if k.is_detrended() {
                match empirical_sigma(&p, cfg, &mut cv) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        decisions.push(Decision { kind: k.to_string(), outcome: Err(e.to_string()) });
                        continue;
                    }
                }
            } else {
                None
            };
            let outcome = run_test(&p, k, cfg.level, &cv, &cfg.truncation, &cfg.deflation, sigma.as_ref())
                .map(|t| (t.statistic, t.critical_value, t.reject))
                .map_err(|e| e.to_string());
            decisions.push(Decision { kind: k.to_string(), outcome });
        }
        let (rho_hat, rho_tilde, error) = match signature_plot(&p, &[iv], &cfg.truncation, &cfg.deflation) {
            Ok(s) => (s[0].rho_hat, s[0].rho_tilde, None),
            Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
        };
        rows.push(EmpiricalRow { interval_seconds: iv, n: p.n(), decisions, rho_hat, rho_tilde, error });
    }
    Ok(rows)
}

/// Market-volatility curve of an observed pair, estimated from the lagged
/// realized-volatility proxy. The detrended limit depends on it, so a missing
/// table entry is tabulated into `cv`.
pub fn empirical_sigma(p: &PairSeries, cfg: &ExperimentConfig, cv: &mut CriticalValueTable) -> Result<SigmaCurve> {
    let dp = detrend_deflate(p, &cfg.truncation, &cfg.deflation)?;
    let proxy: Vec<f64> = dp.volatility_proxy().into_iter().filter(|v| v.is_finite()).collect();
    let sigma = SigmaCurve::from_series(&proxy, SIGMA_CURVE_POINTS)?;
    let key = TestKind::ModifiedDfDetrended.table_key();
    if cv.get(key, cfg.level, true, &sigma.hash()).is_none() {
        log::info!("tabulating the detrended limit for sigma curve {}", sigma.hash());
        cv.merge(tabulate(
            TestKind::ModifiedDfDetrended,
            &[cfg.level],
            cfg.cv_reps,
            cfg.cv_grid,
            cfg.seed,
            Some(&sigma),
        )?);
    }
    Ok(sigma)
}

/// Ingests both tick files, resamples them on the finest ladder interval of
/// the common calendar and runs [`run_empirical_pair`].
pub fn run_empirical<R1: Read, R2: Read>(
    x_csv: R1,
    y_csv: R2,
    ladder: &[f64],
    cfg: &ExperimentConfig,
    cv: &CriticalValueTable,
    range: (Option<chrono::NaiveDate>, Option<chrono::NaiveDate>),
) -> Result<Vec<EmpiricalRow>> {
    let x: TickSeries = crate::timegrid::ingest_csv(x_csv, &cfg.session)?;
    let y: TickSeries = crate::timegrid::ingest_csv(y_csv, &cfg.session)?;
    let clock = SessionClock::from_ticks(&[&x, &y], cfg.session, range.0, range.1)?;
    let base = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let grid = clock.grid(base)?;
    let pair = pair_align(
        resample_previous_tick(&x, &grid, &clock)?,
        resample_previous_tick(&y, &grid, &clock)?,
    )?;
    run_empirical_pair(&pair, ladder, cfg, cv)
}

/// Table with columns `interval_seconds,n,<kind>...,rho_hat,rho_tilde,error`;
/// decisions are `1` (reject), `0` (no rejection) or `err`.
pub fn empirical_table(rows: &[EmpiricalRow]) -> ResultTable {
    let mut kinds: BTreeMap<usize, String> = BTreeMap::new();
    for r in rows {
        for (i, d) in r.decisions.iter().enumerate() {
            kinds.entry(i).or_insert_with(|| d.kind.split('(').next().unwrap_or("").to_string());
        }
    }
    let mut header = vec!["interval_seconds".to_string(), "n".to_string()];
    for k in kinds.values() {
        header.push(k.clone());
        header.push(format!("{k}_stat"));
    }
    header.extend(["rho_hat", "rho_tilde", "error"].map(String::from));
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let mut rec = vec![fmt_f(r.interval_seconds), r.n.to_string()];
        for i in 0..kinds.len() {
            match r.decisions.get(i).map(|d| &d.outcome) {
                Some(Ok((stat, _, reject))) => {
                    rec.push(if *reject { "1" } else { "0" }.to_string());
                    rec.push(fmt_f(*stat));
                }
                Some(Err(e)) => {
                    rec.push("err".into());
                    rec.push(e.clone());
                }
                None => {
                    rec.push("err".into());
                    rec.push(String::new());
                }
            }
        }
        rec.push(fmt_f(r.rho_hat));
        rec.push(fmt_f(r.rho_tilde));
        rec.push(r.error.clone().unwrap_or_default());
        out.push(rec);
    }
    ResultTable { header, rows: out, meta: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_parsing() {
        let s = Session::default();
        assert_eq!(parse_interval("10m", &s).unwrap(), 600.0);
        assert_eq!(parse_interval("30min", &s).unwrap(), 1_800.0);
        assert_eq!(parse_interval("2h", &s).unwrap(), 7_200.0);
        assert_eq!(parse_interval("1d", &s).unwrap(), 23_400.0);
        assert_eq!(parse_interval("2d", &s).unwrap(), 46_800.0);
        assert_eq!(parse_interval("900", &s).unwrap(), 900.0);
        assert!(parse_interval("3w", &s).is_err());
        assert!(parse_interval("-1m", &s).is_err());
    }

    #[test]
    fn presets_and_n_ladder() {
        let desk = ExperimentConfig::preset(Preset::Desk);
        desk.validate().unwrap();
        let ns: Vec<usize> = desk.intervals.iter().map(|&i| desk.n_for(i).unwrap()).collect();
        assert_eq!(ns, vec![4914, 1638, 819, 126, 63]);
        assert_eq!(desk.reps, 200);
        let paper = ExperimentConfig::preset(Preset::Paper);
        paper.validate().unwrap();
        let ns: Vec<usize> = paper.intervals.iter().map(|&i| paper.n_for(i).unwrap()).collect();
        assert_eq!(ns, vec![19656, 6552, 3276, 1638, 504, 252]);
        assert_eq!((paper.reps, paper.horizon_days), (1_000, 504.0));
    }

    #[test]
    fn two_hours_rejected_at_desk_horizon() {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.intervals.push(7_200.0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn kv_parsing() {
        let cfg = ExperimentConfig::from_kv(
            "# comment\npreset = paper\nmodels = 1, 3\nrhos = 1,0.8\nintervals = 10m,1d\nreps = 7\nkinds = df, adf(4)\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.horizon_days, 504.0);
        assert_eq!(cfg.models, vec![1, 3]);
        assert_eq!(cfg.rhos, vec![1.0, 0.8]);
        assert_eq!(cfg.intervals, vec![600.0, 23_400.0]);
        assert_eq!(cfg.reps, 7);
        assert_eq!(cfg.kinds, vec![TestKind::ClassicalDf, TestKind::Adf(4)]);
        assert_eq!(cfg.seed, 9);
        assert!(ExperimentConfig::from_kv("bogus = 1").is_err());
        assert!(ExperimentConfig::from_kv("reps 3").is_err());
        assert!(ExperimentConfig::from_kv("reps = 0").unwrap().validate().is_err());
    }

    #[test]
    fn se_column() {
        let row = SizePowerRow {
            model: 1,
            interval_seconds: 600.0,
            n: 10,
            rho: 1.0,
            kind: "df".into(),
            rejections: 10,
            failed: 0,
            reps: 200,
        };
        assert_eq!(row.frequency(), 0.05);
        assert!((row.se() - (0.05f64 * 0.95 / 200.0).sqrt()).abs() < 1e-15);
        let rec = csv::StringRecord::from(row.record());
        assert_eq!(SizePowerRow::from_record(&rec).unwrap(), row);
    }

    #[test]
    fn missing_table_fails_before_simulation() {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.reps = 1;
        let err = run_size_power(&cfg, &CriticalValueTable::default()).unwrap_err();
        assert!(matches!(err, Error::Table(_)));
    }
}
