//! `hfcoint` command-line front end.
//!
//! Exit codes: 0 success, 2 data error, 3 configuration error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hfcoint::cointtest::{run_test, TestKind};
use hfcoint::estimate::estimate;
use hfcoint::experiment::{
    default_kinds, empirical_sigma, empirical_table, model_sigma_curve, parse_interval, parse_kinds,
    required_table, run_empirical, run_estimation_table, run_size_power, signature_batch, signature_plot,
    signature_table, ExperimentConfig, Preset, ResultTable,
};
use hfcoint::limitdist::{build_table, CriticalValueTable};
use hfcoint::preprocess::{deflate, detrend_deflate, DeflationConfig, SigmaScale, TruncationConfig};
use hfcoint::simulate::{simulate_model, JumpScale, ModelSpec, RhoRegime};
use hfcoint::timegrid::{
    ingest_csv, pair_align, parse_date, path_from_columns, read_numeric_columns, resample_previous_tick,
    weekday_calendar, write_path_csv, write_tick_csv, NaiveDate, PairSeries, Session, SessionClock,
};
use hfcoint::{Error, Result};

const OUT_DIR_ENV: &str = "HFCOINT_OUT_DIR";
const DEFAULT_LADDER: &str = "10m,30m,1h,2h,1d,2d";

#[derive(Parser, Debug)]
#[command(name = "hfcoint", version, about = "Cointegration testing for high-frequency price pairs")]
struct Cli {
    /// Worker threads for Monte Carlo work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resample tick files onto a regular session grid.
    Ingest(IngestArgs),
    /// Simulate one path of a benchmark model.
    Simulate(SimulateArgs),
    /// Truncation mask, deflators and deflated series of a pair.
    Preprocess(PreprocessArgs),
    /// Modified OLS estimate with diagnostics and confidence intervals.
    Estimate(EstimateArgs),
    /// Modified and classical residual-based tests on a pair.
    Test(TestArgs),
    /// Monte Carlo critical values of the limit laws.
    Critvals(CritvalsArgs),
    /// Size and power table over models, frequencies and rho.
    TableSizePower(TableArgs),
    /// Bias and spread of the modified and standard estimators.
    TableEstimation(TableArgs),
    /// Residual autocorrelation estimates across sampling frequencies.
    Signature(SignatureArgs),
    /// Full test report for two tick files across the frequency ladder.
    Empirical(EmpiricalArgs),
}

#[derive(Args, Debug, Clone)]
struct SessionArgs {
    /// Trading seconds per session.
    #[arg(long, default_value_t = 23_400.0)]
    session_seconds: f64,
}

impl SessionArgs {
    fn session(&self) -> Result<Session> {
        if !(self.session_seconds > 0.0 && self.session_seconds.is_finite()) {
            return Err(Error::Config(format!("session seconds must be positive, got {}", self.session_seconds)));
        }
        Ok(Session::with_seconds_per_day(self.session_seconds))
    }
}

#[derive(Args, Debug, Clone)]
struct PrepArgs {
    /// Threshold multiplier a0.
    #[arg(long, default_value_t = 4.0)]
    a0: f64,
    /// Threshold exponent.
    #[arg(long, default_value_t = 0.48)]
    omega: f64,
    /// `auto`, `none`, or a fixed volatility per square-root day.
    #[arg(long, default_value = "auto")]
    sigma_scale: String,
    /// Deflation window exponent.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Deflation lag exponent.
    #[arg(long, default_value_t = 0.01)]
    gamma_prime: f64,
}

impl PrepArgs {
    fn configs(&self) -> Result<(TruncationConfig, DeflationConfig)> {
        let sigma_scale = match self.sigma_scale.trim() {
            "auto" => SigmaScale::Auto,
            "none" | "disabled" => SigmaScale::Disabled,
            v => SigmaScale::Fixed(
                v.parse()
                    .map_err(|_| Error::Config(format!("bad sigma scale {v:?}")))?,
            ),
        };
        let t = TruncationConfig { a0: self.a0, omega_bar: self.omega, sigma_scale };
        let d = DeflationConfig { gamma: self.gamma, gamma_prime: self.gamma_prime };
        t.validate()?;
        d.validate()?;
        Ok((t, d))
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let (t, d) = self.configs()?;
        cfg.truncation = t;
        cfg.deflation = d;
        Ok(())
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// `timestamp,price` tick file; give two to write an aligned pair.
    #[arg(long, required = true, num_args = 1)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    session: SessionArgs,
    /// Grid spacing in minutes.
    #[arg(long, default_value_t = 10.0)]
    grid_minutes: f64,
    /// First calendar day kept (YYYY-MM-DD).
    #[arg(long)]
    start: Option<String>,
    /// Last calendar day kept (YYYY-MM-DD).
    #[arg(long)]
    end: Option<String>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Model 1 to 8.
    #[arg(long)]
    model: u8,
    /// Residual autoregression; 1 means no cointegration.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Local alternative rho = 1 - beta / n; overrides --rho.
    #[arg(long)]
    beta: Option<f64>,
    /// Number of increments; overrides --interval.
    #[arg(long)]
    n: Option<usize>,
    /// Sampling interval such as 600, 10m, 1h, 1d.
    #[arg(long, default_value = "10m")]
    interval: String,
    #[arg(long, default_value_t = 504.0)]
    horizon_days: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    euler_step: f64,
    /// Second parameter of the jump-size normals: `sd` or `variance`.
    #[arg(long, default_value = "sd")]
    jump_scale: String,
    #[command(flatten)]
    session: SessionArgs,
    /// Output CSV `t,X,Y,eps_true` (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write X as `timestamp,price` ticks.
    #[arg(long)]
    ticks_x: Option<PathBuf>,
    /// Also write Y as `timestamp,price` ticks.
    #[arg(long)]
    ticks_y: Option<PathBuf>,
    /// First trading day of the tick export.
    #[arg(long, default_value = "2012-01-02")]
    start_date: String,
}

#[derive(Args, Debug)]
struct PairInput {
    /// Pair CSV `t,X,Y` as written by `simulate` or `ingest`.
    #[arg(long)]
    pair: PathBuf,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    input: PairInput,
    #[command(flatten)]
    prep: PrepArgs,
    /// Subtract the truncated mean increment before deflating.
    #[arg(long)]
    detrended: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    input: PairInput,
    #[command(flatten)]
    prep: PrepArgs,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    /// Critical-value table; simulated on the fly when absent.
    #[arg(long)]
    critvals: Option<PathBuf>,
    /// Replications when simulating critical values.
    #[arg(long, default_value_t = 20_000)]
    cv_reps: usize,
    /// Grid points when simulating critical values.
    #[arg(long, default_value_t = 2_000)]
    cv_grid: usize,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    input: PairInput,
    #[command(flatten)]
    prep: PrepArgs,
    /// Comma-separated kinds, or `all`.
    #[arg(long, default_value = "all")]
    kind: String,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// Add the drift-robust modified test.
    #[arg(long)]
    detrended: bool,
    /// ADF lag (default: Schwert rule).
    #[arg(long)]
    adf_lag: Option<usize>,
    /// Phillips-Perron bandwidth (default: Newey-West rule).
    #[arg(long)]
    pp_bandwidth: Option<usize>,
    #[command(flatten)]
    cv: CvArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CritvalsArgs {
    /// Comma-separated kinds, or `all` (including the detrended kind).
    #[arg(long, default_value = "all")]
    kind: String,
    #[arg(long, default_value = "0.01,0.05,0.10")]
    levels: String,
    #[arg(long, default_value_t = 20_000)]
    reps: usize,
    #[arg(long, default_value_t = 2_000)]
    grid: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Market-volatility curve of this model for the detrended kind.
    #[arg(long)]
    sigma_model: Option<u8>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    rhos: Option<String>,
    #[arg(long)]
    intervals: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    horizon_days: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    a0: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    gamma_prime: Option<String>,
    #[arg(long)]
    cv_reps: Option<String>,
    #[arg(long)]
    cv_grid: Option<String>,
    /// Result directory (default: the config's `out_dir`, then $HFCOINT_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Any other configuration key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut text = match &self.config {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        if let Some(p) = &self.preset {
            text.push_str(&format!("\npreset = {p}\n"));
        }
        let mut cfg = ExperimentConfig::from_kv(&text)?;
        let flags = [
            ("models", &self.models),
            ("rhos", &self.rhos),
            ("intervals", &self.intervals),
            ("reps", &self.reps),
            ("level", &self.level),
            ("kinds", &self.kinds),
            ("horizon_days", &self.horizon_days),
            ("seed", &self.seed),
            ("a0", &self.a0),
            ("omega", &self.omega),
            ("gamma", &self.gamma),
            ("gamma_prime", &self.gamma_prime),
            ("cv_reps", &self.cv_reps),
            ("cv_grid", &self.cv_grid),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = Some(d.clone());
        } else if cfg.out_dir.is_none() {
            cfg.out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TableArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Critical-value table (size/power only); simulated when absent.
    #[arg(long)]
    critvals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SignatureArgs {
    /// Pair CSV; without it the simulated batch of the configuration is used.
    #[arg(long)]
    pair: Option<PathBuf>,
    /// Comma-separated intervals for a pair (default: 10m,30m,1h,2h,1d,2d).
    #[arg(long)]
    ladder: Option<String>,
    /// Truncation and deflation settings come from the configuration flags.
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmpiricalArgs {
    /// Tick file of the regressor.
    #[arg(long)]
    x: PathBuf,
    /// Tick file of the dependent series.
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    end: Option<String>,
    /// Comma-separated intervals (default: 10m,30m,1h,2h,1d,2d).
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    cv: CvArgs,
    #[command(flatten)]
    prep: PrepArgs,
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Simulate(a) => simulate(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Test(a) => test_cmd(a),
        Command::Critvals(a) => critvals(a),
        Command::TableSizePower(a) => table_size_power(a),
        Command::TableEstimation(a) => table_estimation(a),
        Command::Signature(a) => signature(a),
        Command::Empirical(a) => empirical(a),
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:?}")
    }
}

fn date_range(start: &Option<String>, end: &Option<String>) -> Result<(Option<NaiveDate>, Option<NaiveDate>)> {
    let parse = |s: &Option<String>| s.as_deref().map(parse_date).transpose();
    Ok((parse(start)?, parse(end)?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_pair(path: &Path, session: Session) -> Result<PairSeries> {
    let cols = read_numeric_columns(open(path)?, 3)?;
    let x = path_from_columns(&cols[0], cols[1].clone(), session)?;
    let y = path_from_columns(&cols[0], cols[2].clone(), session)?;
    pair_align(x, y)
}

fn parse_ladder(spec: &Option<String>, session: &Session) -> Result<Vec<f64>> {
    spec.as_deref()
        .unwrap_or(DEFAULT_LADDER)
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_interval(p, session))
        .collect()
}

fn ingest(a: IngestArgs) -> Result<()> {
    if a.input.len() > 2 {
        return Err(Error::Config("ingest takes one or two --input files".into()));
    }
    if !(a.grid_minutes > 0.0) {
        return Err(Error::Config(format!("grid minutes must be positive, got {}", a.grid_minutes)));
    }
    let session = a.session.session()?;
    let (start, end) = date_range(&a.start, &a.end)?;
    let ticks = a
        .input
        .iter()
        .map(|p| ingest_csv(open(p)?, &session))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = ticks.iter().collect();
    let clock = SessionClock::from_ticks(&refs, session, start, end)?;
    let grid = clock.grid(a.grid_minutes * 60.0)?;
    let paths = ticks
        .iter()
        .map(|t| resample_previous_tick(t, &grid, &clock))
        .collect::<Result<Vec<_>>>()?;
    let mut out = sink(a.out.as_deref())?;
    if paths.len() == 1 {
        write_path_csv(&paths[0], &mut out)?;
    } else {
        writeln!(out, "t,X,Y")?;
        for i in 0..=grid.n() {
            writeln!(out, "{},{},{}", fmt(grid.time(i)), fmt(paths[0].values()[i]), fmt(paths[1].values()[i]))?;
        }
    }
    out.flush()?;
    log::info!("ingested {} trading days, n = {}", clock.trading_days(), grid.n());
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let session = a.session.session()?;
    let interval = match a.n {
        Some(n) if n >= 2 => a.horizon_days * session.seconds_per_day / n as f64,
        Some(n) => return Err(Error::Config(format!("n must be at least 2, got {n}"))),
        None => parse_interval(&a.interval, &session)?,
    };
    let n = (a.horizon_days * session.seconds_per_day / interval).round() as usize;
    let regime = match a.beta {
        Some(b) => RhoRegime::Weak(b),
        None => RhoRegime::from_rho(a.rho),
    };
    let mut spec = ModelSpec::new(a.model, regime, a.seed)
        .map_err(|e| Error::Config(e.to_string()))?
        .with_horizon(a.horizon_days)
        .with_sampling_seconds(interval);
    spec.euler_step_seconds = a.euler_step;
    spec.session = session;
    spec.params.jump_scale = match a.jump_scale.as_str() {
        "sd" | "stddev" => JumpScale::StdDev,
        "variance" => JumpScale::Variance,
        other => return Err(Error::Config(format!("jump scale must be sd or variance, got {other:?}"))),
    };
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    let sim = simulate_model(&spec)?;
    let grid = *sim.pair.grid();
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "t,X,Y,eps_true")?;
    let (x, y) = (sim.pair.x().values(), sim.pair.y().values());
    for i in 0..=grid.n() {
        writeln!(out, "{},{},{},{}", fmt(grid.time(i)), fmt(x[i]), fmt(y[i]), fmt(sim.eps[i]))?;
    }
    out.flush()?;
    if a.ticks_x.is_some() || a.ticks_y.is_some() {
        let start = parse_date(&a.start_date)?;
        let days = weekday_calendar(start, a.horizon_days.ceil() as usize);
        for (target, path) in [(&a.ticks_x, sim.pair.x()), (&a.ticks_y, sim.pair.y())] {
            if let Some(p) = target {
                let mut w = sink(Some(p))?;
                write_tick_csv(path, &days, &mut w)?;
                w.flush()?;
            }
        }
    }
    log::info!("model {} n = {n}, rho = {}", a.model, sim.rho);
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let pair = read_pair(&a.input.pair, a.input.session.session()?)?;
    let (t, d) = a.prep.configs()?;
    let dp = if a.detrended {
        detrend_deflate(&pair, &t, &d)?
    } else {
        deflate(&pair, &t, &d)?
    };
    let grid = pair.grid();
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "i,t,keep,C_i,tx_def,ty_def")?;
    writeln!(out, "0,{},,,{},{}", fmt(grid.time(0)), fmt(dp.tx_def[0]), fmt(dp.ty_def[0]))?;
    let keep = dp.mask.keep();
    for i in 1..=dp.n() {
        writeln!(
            out,
            "{i},{},{},{},{},{}",
            fmt(grid.time(i)),
            u8::from(keep[i - 1]),
            fmt(dp.deflators[i - 1]),
            fmt(dp.tx_def[i]),
            fmt(dp.ty_def[i])
        )?;
    }
    out.flush()?;
    log::info!("discarded {} of {} increments, k = {}, l = {}", dp.mask.discarded(), dp.n(), dp.k, dp.l);
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    if !(a.confidence > 0.0 && a.confidence < 1.0) {
        return Err(Error::Config(format!("confidence must lie in (0, 1), got {}", a.confidence)));
    }
    let pair = read_pair(&a.input.pair, a.input.session.session()?)?;
    let (t, d) = a.prep.configs()?;
    let dp = deflate(&pair, &t, &d)?;
    let fit = estimate(&dp, a.confidence)?;
    let mut rows: Vec<(&str, String)> = vec![
        ("n", dp.n().to_string()),
        ("discarded", dp.mask.discarded().to_string()),
        ("alpha_hat", fmt(fit.alpha_hat)),
        ("c_hat", fmt(fit.c_hat)),
    ];
    if let Some(g) = &fit.diagnostics {
        rows.extend([
            ("rho_hat", fmt(g.rho_hat)),
            ("r_inf_hat", fmt(g.r_inf_hat)),
            ("r_inf_clamped", g.r_inf_clamped.to_string()),
            ("v_eps_hat", fmt(g.v_eps_hat)),
        ]);
    }
    if let Some(s) = &fit.studentized {
        rows.extend([
            ("bias_alpha", fmt(s.bias_alpha)),
            ("bias_c", fmt(s.bias_c)),
            ("var_alpha", fmt(s.var_alpha)),
            ("var_c", fmt(s.var_c)),
            ("confidence", fmt(s.confidence)),
            ("ci_alpha_low", fmt(s.ci_alpha.0)),
            ("ci_alpha_high", fmt(s.ci_alpha.1)),
            ("ci_c_low", fmt(s.ci_c.0)),
            ("ci_c_high", fmt(s.ci_c.1)),
        ]);
    }
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "key,value")?;
    for (k, v) in rows {
        writeln!(out, "{k},{v}")?;
    }
    out.flush()?;
    Ok(())
}

fn load_or_build(cv: &CvArgs, kinds: &[TestKind], level: f64, seed: u64) -> Result<CriticalValueTable> {
    match &cv.critvals {
        Some(p) => CriticalValueTable::read_csv(open(p)?),
        None => {
            let plain: Vec<TestKind> = kinds.iter().copied().filter(|k| !k.is_detrended()).collect();
            log::info!("simulating critical values ({} reps, grid {})", cv.cv_reps, cv.cv_grid);
            build_table(&plain, &[level], cv.cv_reps, cv.cv_grid, seed, None)
        }
    }
}

fn test_cmd(a: TestArgs) -> Result<()> {
    let session = a.input.session.session()?;
    let pair = read_pair(&a.input.pair, session)?;
    let mut kinds = parse_kinds(&a.kind)?;
    if a.detrended && !kinds.contains(&TestKind::ModifiedDfDetrended) {
        kinds.push(TestKind::ModifiedDfDetrended);
    }
    // table keys ignore lags, so tabulate before fixing them
    let mut cv = load_or_build(&a.cv, &kinds, a.level, a.seed)?;
    let n = pair.n();
    let kinds: Vec<TestKind> = kinds
        .into_iter()
        .map(|k| match (k, a.adf_lag, a.pp_bandwidth) {
            (TestKind::Adf(_), Some(p), _) => TestKind::Adf(p),
            (TestKind::PpZAlpha(_), _, Some(l)) => TestKind::PpZAlpha(l),
            (TestKind::PpZTau(_), _, Some(l)) => TestKind::PpZTau(l),
            (k, _, _) => k.resolve(n),
        })
        .collect();
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {}", a.level)));
    }
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.level = a.level;
    cfg.seed = a.seed;
    cfg.cv_reps = a.cv.cv_reps;
    cfg.cv_grid = a.cv.cv_grid;
    cfg.session = session;
    a.prep.apply(&mut cfg)?;

    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "kind,statistic,critical_value,level,reject,n,delta_days,phi_hat,s_phi")?;
    for kind in kinds {
        let sigma = if kind.is_detrended() {
            Some(empirical_sigma(&pair, &cfg, &mut cv)?)
        } else {
            None
        };
        let r = run_test(&pair, kind, a.level, &cv, &cfg.truncation, &cfg.deflation, sigma.as_ref())?;
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind,
            fmt(r.statistic),
            fmt(r.critical_value),
            fmt(r.level),
            u8::from(r.reject),
            r.n,
            fmt(r.delta_days),
            opt(r.phi_hat),
            opt(r.s_phi)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn critvals(a: CritvalsArgs) -> Result<()> {
    let kinds = if a.kind.trim().eq_ignore_ascii_case("all") {
        let mut k = default_kinds();
        k.push(TestKind::ModifiedDfDetrended);
        k
    } else {
        parse_kinds(&a.kind)?
    };
    let levels = a
        .levels
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|l| *l > 0.0 && *l < 1.0)
                .ok_or_else(|| Error::Config(format!("bad level {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma = a.sigma_model.map(model_sigma_curve).transpose()?;
    let table = build_table(&kinds, &levels, a.reps, a.grid, a.seed, sigma.as_ref())?;
    let mut out = sink(a.out.as_deref())?;
    table.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn emit(table: &ResultTable, cfg: &ExperimentConfig, name: &str) -> Result<()> {
    match &cfg.out_dir {
        Some(dir) => {
            let path = table.save(dir, name)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut out = sink(None)?;
            table.write_csv(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn table_size_power(a: TableArgs) -> Result<()> {
    let cfg = a.exp.config()?;
    let cv = match &a.critvals {
        Some(p) => CriticalValueTable::read_csv(open(p)?)?,
        None => {
            log::info!("simulating critical values ({} reps, grid {})", cfg.cv_reps, cfg.cv_grid);
            let table = required_table(&cfg)?;
            if let Some(dir) = &cfg.out_dir {
                fs::create_dir_all(dir)?;
                table.write_file(&dir.join("critvals.csv"))?;
            }
            table
        }
    };
    let (_, table) = run_size_power(&cfg, &cv)?;
    emit(&table, &cfg, "size_power")
}

fn table_estimation(a: TableArgs) -> Result<()> {
    let cfg = a.exp.config()?;
    let (_, table) = run_estimation_table(&cfg)?;
    emit(&table, &cfg, "estimation")
}

fn signature(a: SignatureArgs) -> Result<()> {
    let mut out = sink(a.out.as_deref())?;
    match &a.pair {
        Some(p) => {
            let cfg = a.exp.config()?;
            let pair = read_pair(p, cfg.session)?;
            let ladder = parse_ladder(&a.ladder, &cfg.session)?;
            let rows = signature_plot(&pair, &ladder, &cfg.truncation, &cfg.deflation)?;
            signature_table(&rows).write_csv(&mut out)?;
        }
        None => {
            let cfg = a.exp.config()?;
            let rows = signature_batch(&cfg)?;
            writeln!(out, "model,rho,interval_seconds,n,rho_hat,rho_tilde")?;
            for (m, rho, r) in rows {
                writeln!(out, "{m},{},{},{},{},{}", fmt(rho), fmt(r.interval_seconds), r.n, fmt(r.rho_hat), fmt(r.rho_tilde))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn empirical(a: EmpiricalArgs) -> Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {}", a.level)));
    }
    let session = a.session.session()?;
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.session = session;
    cfg.kinds = parse_kinds(&a.kinds)?;
    cfg.level = a.level;
    cfg.seed = a.seed;
    cfg.cv_reps = a.cv.cv_reps;
    cfg.cv_grid = a.cv.cv_grid;
    a.prep.apply(&mut cfg)?;
    let ladder = parse_ladder(&a.ladder, &session)?;
    let range = date_range(&a.start, &a.end)?;
    let cv = load_or_build(&a.cv, &cfg.kinds, a.level, a.seed)?;
    let rows = run_empirical(open(&a.x)?, open(&a.y)?, &ladder, &cfg, &cv, range)?;
    let mut out = sink(a.out.as_deref())?;
    empirical_table(&rows).write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
