//! Monte Carlo for the limit law of the modified DF statistic and for the
//! classical residual-based statistics, plus critical-value tables.
//!
//! The limit of the modified statistic under local alternatives `rho = 1 - beta/n`
//! is a functional of a planar standard Brownian motion `W` on `[0, 1]`:
//!
//! * `J_u = int_0^u exp(-beta (u - s)) sigma_s dW_s`
//! * `xi_u = W2_u - beta int_0^u sigma_s^{-1} lambda' J_s ds`, `lambda = (r / sqrt(1 - r^2), 1)`
//! * `H = (W1 - centre(W1), xi - centre(xi))`, `kappa = (int H1 H2 / int H1^2, -1)`
//! * `Q = kappa' H`, statistic `int Q dQ / sqrt(kappa' kappa int Q^2)`.
//!
//! `centre` is the time average, or for the detrended statistic
//! `V_breve_u = int V + (int sigma^{-1}(s) s ds - int_u^1 sigma^{-1}) int sigma dV`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cointtest::{classical_statistic, pp_bandwidth, step_one_residuals, TestKind};
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const NO_SIGMA_HASH: &str = "none";

/// Default ADF lag used when tabulating the ADF null distribution.
pub const TABLE_ADF_LAG: usize = 4;

/// Market-volatility shape on `[0, 1]`, sampled on a uniform grid and linearly
/// interpolated. Only the shape matters to the limit law, so the hash is taken
/// after normalizing the maximum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCurve {
    samples: Vec<f64>,
}

impl SigmaCurve {
    pub fn constant() -> Self {
        SigmaCurve { samples: vec![1.0, 1.0] }
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("sigma curve needs at least two samples".into()));
        }
        if samples.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("sigma curve must be finite and positive".into()));
        }
        let max = samples.iter().cloned().fold(0.0, f64::max);
        if samples.iter().all(|s| *s == samples[0]) {
            return Ok(Self::constant());
        }
        Ok(SigmaCurve {
            samples: samples.into_iter().map(|s| s / max).collect(),
        })
    }

    /// Samples `f` at `points` equispaced abscissae including both ends.
    pub fn from_fn(f: impl Fn(f64) -> f64, points: usize) -> Result<Self> {
        let m = points.max(2) - 1;
        Self::from_samples((0..=m).map(|i| f(i as f64 / m as f64)).collect())
    }

    /// Averages an arbitrary-length positive series down to at most `points`
    /// buckets; intended for volatility proxies estimated from data.
    pub fn from_series(series: &[f64], points: usize) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Config("empty volatility series".into()));
        }
        let m = points.clamp(2, series.len().max(2));
        let samples: Vec<f64> = (0..m)
            .map(|b| {
                let lo = b * series.len() / m;
                let hi = ((b + 1) * series.len() / m).max(lo + 1).min(series.len());
                series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        Self::from_samples(samples)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, u: f64) -> f64 {
        let m = (self.samples.len() - 1) as f64;
        let x = (u.clamp(0.0, 1.0)) * m;
        let i = (x.floor() as usize).min(self.samples.len() - 2);
        let w = x - i as f64;
        self.samples[i] * (1.0 - w) + self.samples[i + 1] * w
    }

    pub fn is_constant(&self) -> bool {
        self.samples.iter().all(|s| *s == self.samples[0])
    }

    /// FNV-1a over the normalized samples rounded to 11 significant digits.
    pub fn hash(&self) -> String {
        if self.is_constant() {
            return "const".to_string();
        }
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in &self.samples {
            // rounded so that rescaled copies of a curve share the hash
            for b in format!("{s:.10e};").bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitConfig {
    pub grid_points: usize,
    pub reps: usize,
    pub seed: u64,
    pub beta: f64,
    pub r_inf: f64,
    pub sigma: SigmaCurve,
    pub detrended: bool,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            grid_points: 2_000,
            reps: 20_000,
            seed: 1,
            beta: 0.0,
            r_inf: 0.0,
            sigma: SigmaCurve::constant(),
            detrended: false,
        }
    }
}

impl LimitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 1_000 {
            return Err(Error::Config(format!(
                "grid_points must be at least 1000, got {}",
                self.grid_points
            )));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.r_inf > -1.0 && self.r_inf < 1.0) {
            return Err(Error::Config(format!("r_inf must lie in (-1, 1), got {}", self.r_inf)));
        }
        if self.reps < 10_000 {
            log::debug!("limit simulation with only {} reps", self.reps);
        }
        Ok(())
    }
}

/// Quantities of one limit draw that tests inspect directly.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPath {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub q: Vec<f64>,
    pub kappa1: f64,
    pub statistic: f64,
}

/// Grid quantities that depend on the config but not on the draw.
struct Precomputed {
    n: usize,
    h: f64,
    decay: f64,
    lambda1: f64,
    sigma: Vec<f64>,
    inv_sigma: Vec<f64>,
    /// `int_0^1 sigma^{-1}(s) s ds - int_u^1 sigma^{-1}` at each grid point.
    breve_weight: Vec<f64>,
}

impl Precomputed {
    fn new(cfg: &LimitConfig) -> Self {
        let n = cfg.grid_points;
        let h = 1.0 / n as f64;
        let sigma: Vec<f64> = (0..=n).map(|k| cfg.sigma.eval(k as f64 * h)).collect();
        let inv_sigma: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
        let mut tail = vec![0.0; n + 1];
        for k in (0..n).rev() {
            tail[k] = tail[k + 1] + 0.5 * h * (inv_sigma[k] + inv_sigma[k + 1]);
        }
        let weighted: f64 = (1..=n)
            .map(|k| {
                let (a, b) = ((k - 1) as f64 * h, k as f64 * h);
                0.5 * h * (inv_sigma[k - 1] * a + inv_sigma[k] * b)
            })
            .sum();
        Precomputed {
            n,
            h,
            decay: (-cfg.beta * h).exp(),
            lambda1: cfg.r_inf / (1.0 - cfg.r_inf * cfg.r_inf).sqrt(),
            sigma,
            inv_sigma,
            breve_weight: tail.iter().map(|t| weighted - t).collect(),
        }
    }
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len() - 1;
    let inner: f64 = v[1..n].iter().sum();
    h * (inner + 0.5 * (v[0] + v[n]))
}

fn trapezoid_product(a: &[f64], b: &[f64], h: f64) -> f64 {
    let n = a.len() - 1;
    let inner: f64 = (1..n).map(|k| a[k] * b[k]).sum();
    h * (inner + 0.5 * (a[0] * b[0] + a[n] * b[n]))
}

fn centre_in_place(v: &mut [f64], pre: &Precomputed, detrended: bool) {
    let mean = trapezoid(v, pre.h);
    if detrended {
        let mut ito = 0.0;
        for k in 1..=pre.n {
            ito += pre.sigma[k - 1] * (v[k] - v[k - 1]);
        }
        for (k, x) in v.iter_mut().enumerate() {
            *x -= mean + pre.breve_weight[k] * ito;
        }
    } else {
        v.iter_mut().for_each(|x| *x -= mean);
    }
}

/// `(Q_1^2 - Q_0^2 - sum (dQ)^2) / 2`, the grid version of `int Q dQ`.
pub fn ito_integral(q: &[f64]) -> f64 {
    let qv: f64 = q.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    let n = q.len() - 1;
    0.5 * (q[n] * q[n] - q[0] * q[0] - qv)
}

/// Builds one draw from the Brownian increments `dw1`, `dw2` (each of variance `1/N`).
fn limit_from_increments(dw1: &[f64], dw2: &[f64], pre: &Precomputed, cfg: &LimitConfig) -> LimitPath {
    let n = pre.n;
    let mut w1 = vec![0.0; n + 1];
    let mut xi = vec![0.0; n + 1];
    let (mut j1, mut j2) = (0.0, 0.0);
    let mut w2 = 0.0;
    let mut integral = 0.0;
    let mut g_prev = 0.0;
    for k in 1..=n {
        w1[k] = w1[k - 1] + dw1[k - 1];
        w2 += dw2[k - 1];
        if cfg.beta > 0.0 {
            j1 = pre.decay * (j1 + pre.sigma[k - 1] * dw1[k - 1]);
            j2 = pre.decay * (j2 + pre.sigma[k - 1] * dw2[k - 1]);
            let g = pre.inv_sigma[k] * (pre.lambda1 * j1 + j2);
            integral += 0.5 * pre.h * (g_prev + g);
            g_prev = g;
        }
        xi[k] = w2 - cfg.beta * integral;
    }
    centre_in_place(&mut w1, pre, cfg.detrended);
    centre_in_place(&mut xi, pre, cfg.detrended);
    let h11 = trapezoid_product(&w1, &w1, pre.h);
    let h12 = trapezoid_product(&w1, &xi, pre.h);
    let kappa1 = h12 / h11;
    let q: Vec<f64> = w1.iter().zip(&xi).map(|(a, b)| kappa1 * a - b).collect();
    let qq = trapezoid_product(&q, &q, pre.h);
    let statistic = ito_integral(&q) / ((kappa1 * kappa1 + 1.0) * qq).sqrt();
    LimitPath {
        h1: w1,
        h2: xi,
        q,
        kappa1,
        statistic,
    }
}

fn draw_increments(rng: &mut impl Rng, n: usize, sd: f64, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
}

/// One full draw for replication `rep`, exposing the intermediate processes.
pub fn simulate_limit_path(cfg: &LimitConfig, rep: u64) -> Result<LimitPath> {
    cfg.validate()?;
    let pre = Precomputed::new(cfg);
    let mut rng = rng_for(cfg.seed, 0x11D1, rep);
    let sd = pre.h.sqrt();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    draw_increments(&mut rng, pre.n, sd, &mut a);
    draw_increments(&mut rng, pre.n, sd, &mut b);
    Ok(limit_from_increments(&a, &b, &pre, cfg))
}

/// `cfg.reps` draws of the limit statistic in replication order. Non-finite
/// draws (degenerate `int H1^2`) are dropped and logged.
pub fn simulate_limit_statistic(cfg: &LimitConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let pre = Precomputed::new(cfg);
    let sd = pre.h.sqrt();
    let draws: Vec<f64> = (0..cfg.reps as u64)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(a, b), rep| {
                let mut rng = rng_for(cfg.seed, 0x11D1, rep);
                draw_increments(&mut rng, pre.n, sd, a);
                draw_increments(&mut rng, pre.n, sd, b);
                limit_from_increments(a, b, &pre, cfg).statistic
            },
        )
        .collect();
    let finite: Vec<f64> = draws.into_iter().filter(|d| d.is_finite()).collect();
    if finite.len() < cfg.reps {
        log::warn!("discarded {} degenerate limit draws", cfg.reps - finite.len());
    }
    Ok(finite)
}

/// Null draws of a classical statistic: step-one OLS on two independent
/// Gaussian random walks of `grid_points` steps, then the step-two statistic.
/// `cfg.r_inf` sets the correlation of the two innovation sequences.
pub fn classical_limit_draws(kind: TestKind, cfg: &LimitConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !kind.is_classical() {
        return Err(Error::Argument(format!("{kind} is not a classical test")));
    }
    let n = cfg.grid_points;
    let kind = match kind {
        TestKind::Adf(usize::MAX) => TestKind::Adf(TABLE_ADF_LAG),
        TestKind::PpZAlpha(usize::MAX) => TestKind::PpZAlpha(pp_bandwidth(n)),
        TestKind::PpZTau(usize::MAX) => TestKind::PpZTau(pp_bandwidth(n)),
        k => k,
    };
    let r = cfg.r_inf;
    let r_perp = (1.0 - r * r).sqrt();
    let draws: Vec<f64> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(cfg.seed, 0xC1A5, rep);
            let mut x = Vec::with_capacity(n + 1);
            let mut y = Vec::with_capacity(n + 1);
            let (mut lx, mut ly) = (0.0, 0.0);
            x.push(lx);
            y.push(ly);
            for _ in 0..n {
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                lx += e1;
                ly += r * e1 + r_perp * e2;
                x.push(lx);
                y.push(ly);
            }
            step_one_residuals(&x, &y)
                .and_then(|eps| classical_statistic(&eps, kind))
                .map(|(s, _)| s)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let finite: Vec<f64> = draws.into_iter().filter(|d| d.is_finite()).collect();
    if finite.len() < cfg.reps {
        log::warn!("discarded {} degenerate classical draws", cfg.reps - finite.len());
    }
    Ok(finite)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub value: f64,
    pub se: f64,
}

fn lower_quantile(values: &mut [f64], delta: f64) -> f64 {
    let idx = ((values.len() - 1) as f64 * delta + 1e-12).floor() as usize;
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Empirical `delta`-quantile (lower order statistic at `floor((N-1) delta)`)
/// with a bootstrap standard error.
pub fn critical_value(draws: &[f64], delta: f64) -> Result<QuantileEstimate> {
    if draws.is_empty() {
        return Err(Error::Argument("no draws".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("level {delta} not in (0, 1)")));
    }
    let mut work = draws.to_vec();
    let value = lower_quantile(&mut work, delta);
    let mut rng = rng_for(0xB007, draws.len() as u64, delta.to_bits());
    let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for w in work.iter_mut() {
            *w = draws[rng.random_range(0..draws.len())];
        }
        boots.push(lower_quantile(&mut work, delta));
    }
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (boots.len() - 1) as f64;
    Ok(QuantileEstimate {
        value,
        se: var.sqrt(),
    })
}

/// Rejection probability `P(stat < q_delta)` of the limit law at each `beta`,
/// with its binomial standard error.
pub fn local_power_curve(betas: &[f64], cfg: &LimitConfig, q_delta: f64) -> Result<Vec<(f64, f64, f64)>> {
    betas
        .iter()
        .map(|&beta| {
            let c = LimitConfig { beta, ..cfg.clone() };
            let draws = simulate_limit_statistic(&c)?;
            let p = draws.iter().filter(|d| **d < q_delta).count() as f64 / draws.len() as f64;
            Ok((beta, p, (p * (1.0 - p) / draws.len() as f64).sqrt()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub kind: String,
    pub level: f64,
    pub detrended: bool,
    pub sigma_hash: String,
    pub quantile: f64,
    pub reps: usize,
    pub grid: usize,
    pub seed: u64,
    pub se: f64,
}

type CvKey = (String, u64, bool, String);

/// Critical values keyed by `(kind, level, detrended, sigma_hash)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CriticalValueTable {
    entries: BTreeMap<CvKey, CvEntry>,
}

fn level_key(level: f64) -> u64 {
    (level * 1e9).round() as u64
}

impl CriticalValueTable {
    pub fn insert(&mut self, entry: CvEntry) {
        let key = (
            entry.kind.clone(),
            level_key(entry.level),
            entry.detrended,
            entry.sigma_hash.clone(),
        );
        self.entries.insert(key, entry);
    }

    pub fn merge(&mut self, other: CriticalValueTable) {
        for e in other.entries.into_values() {
            self.insert(e);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &CvEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: &str, level: f64, detrended: bool, sigma_hash: &str) -> Option<&CvEntry> {
        self.entries
            .get(&(kind.to_string(), level_key(level), detrended, sigma_hash.to_string()))
    }

    pub fn lookup(&self, kind: &str, level: f64, detrended: bool, sigma_hash: &str) -> Result<f64> {
        self.get(kind, level, detrended, sigma_hash)
            .map(|e| e.quantile)
            .ok_or_else(|| {
                Error::Table(format!(
                    "no critical value for kind={kind} level={level} detrended={detrended} sigma={sigma_hash}"
                ))
            })
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["kind", "level", "detrended", "sigma_hash", "quantile", "reps", "grid", "seed", "se"])?;
        for e in self.entries.values() {
            w.write_record([
                e.kind.clone(),
                e.level.to_string(),
                e.detrended.to_string(),
                e.sigma_hash.clone(),
                e.quantile.to_string(),
                e.reps.to_string(),
                e.grid.to_string(),
                e.seed.to_string(),
                e.se.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(source);
        let headers = rdr.headers()?.clone();
        let expected = ["kind", "level", "detrended", "sigma_hash", "quantile", "reps", "grid", "seed", "se"];
        if headers.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(Error::Table(format!("unexpected table header {headers:?}")));
        }
        let mut table = CriticalValueTable::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |j: usize| rec.get(j).unwrap_or("").trim();
            let bad = |what: &str| Error::Table(format!("line {line}: bad {what}"));
            table.insert(CvEntry {
                kind: field(0).to_string(),
                level: field(1).parse().map_err(|_| bad("level"))?,
                detrended: field(2).parse().map_err(|_| bad("detrended"))?,
                sigma_hash: field(3).to_string(),
                quantile: field(4).parse().map_err(|_| bad("quantile"))?,
                reps: field(5).parse().map_err(|_| bad("reps"))?,
                grid: field(6).parse().map_err(|_| bad("grid"))?,
                seed: field(7).parse().map_err(|_| bad("seed"))?,
                se: field(8).parse().map_err(|_| bad("se"))?,
            });
        }
        Ok(table)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Simulates the null law of `kind` and tabulates the requested levels.
pub fn tabulate(
    kind: TestKind,
    levels: &[f64],
    reps: usize,
    grid: usize,
    seed: u64,
    sigma: Option<&SigmaCurve>,
) -> Result<CriticalValueTable> {
    let detrended = kind.is_detrended();
    let sigma = if detrended {
        sigma.cloned().unwrap_or_else(SigmaCurve::constant)
    } else {
        SigmaCurve::constant()
    };
    let cfg = LimitConfig {
        grid_points: grid,
        reps,
        seed,
        detrended,
        sigma: sigma.clone(),
        ..LimitConfig::default()
    };
    let draws = match kind {
        TestKind::ModifiedDf | TestKind::ModifiedDfDetrended => simulate_limit_statistic(&cfg)?,
        k => classical_limit_draws(k, &cfg)?,
    };
    let sigma_hash = if detrended {
        sigma.hash()
    } else {
        NO_SIGMA_HASH.to_string()
    };
    let mut table = CriticalValueTable::default();
    for &level in levels {
        let q = critical_value(&draws, level)?;
        table.insert(CvEntry {
            kind: kind.table_key().to_string(),
            level,
            detrended,
            sigma_hash: sigma_hash.clone(),
            quantile: q.value,
            reps,
            grid,
            seed,
            se: q.se,
        });
    }
    Ok(table)
}

/// Tables for several kinds; each kind uses its own derived seed.
pub fn build_table(
    kinds: &[TestKind],
    levels: &[f64],
    reps: usize,
    grid: usize,
    seed: u64,
    sigma: Option<&SigmaCurve>,
) -> Result<CriticalValueTable> {
    let mut table = CriticalValueTable::default();
    for kind in kinds {
        let kind_seed = crate::rng::split_seed(seed, 0x7AB1E, kind_stream(kind));
        table.merge(tabulate(*kind, levels, reps, grid, kind_seed, sigma)?);
    }
    Ok(table)
}

fn kind_stream(kind: &TestKind) -> u64 {
    match kind {
        TestKind::ModifiedDf => 1,
        TestKind::ModifiedDfDetrended => 2,
        TestKind::ClassicalDf => 3,
        TestKind::Adf(_) => 4,
        TestKind::PpZAlpha(_) => 5,
        TestKind::PpZTau(_) => 6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_cfg() -> LimitConfig {
        LimitConfig {
            grid_points: 1_000,
            reps: 50,
            seed: 9,
            ..LimitConfig::default()
        }
    }

    #[test]
    fn beta_zero_constant_sigma_is_demeaned_brownian_motion() {
        let cfg = small_cfg();
        let path = simulate_limit_path(&cfg, 3).unwrap();
        // recompute W from the same rng stream
        let mut rng = rng_for(cfg.seed, 0x11D1, 3);
        let sd = (1.0f64 / 1000.0).sqrt();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        draw_increments(&mut rng, 1000, sd, &mut a);
        draw_increments(&mut rng, 1000, sd, &mut b);
        let mut w1 = vec![0.0];
        let mut w2 = vec![0.0];
        for k in 0..1000 {
            w1.push(w1[k] + a[k]);
            w2.push(w2[k] + b[k]);
        }
        let m1 = trapezoid(&w1, 1e-3);
        let m2 = trapezoid(&w2, 1e-3);
        for k in 0..=1000 {
            assert!((path.h1[k] - (w1[k] - m1)).abs() < 1e-12);
            assert!((path.h2[k] - (w2[k] - m2)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_correlation_gives_unit_second_weight() {
        let cfg = LimitConfig { beta: 5.0, ..small_cfg() };
        let pre = Precomputed::new(&cfg);
        assert_eq!(pre.lambda1, 0.0);
        let cfg = LimitConfig { r_inf: 0.6, ..cfg };
        assert!((Precomputed::new(&cfg).lambda1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn breve_centre_for_constant_sigma_is_bridge() {
        let cfg = LimitConfig { detrended: true, ..small_cfg() };
        let pre = Precomputed::new(&cfg);
        let v: Vec<f64> = (0..=1000).map(|k| ((k as f64) * 0.01).sin()).collect();
        let mut c = v.clone();
        centre_in_place(&mut c, &pre, true);
        let mean = trapezoid(&v, pre.h);
        let v1 = v[1000];
        for k in (0..=1000).step_by(50) {
            let u = k as f64 / 1000.0;
            let expected = v[k] - mean - (u - 0.5) * v1;
            assert!((c[k] - expected).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn quantile_order_statistic() {
        let draws: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(critical_value(&draws, 0.05).unwrap().value, 5.0);
        let sym: Vec<f64> = (-500..=500).map(|i| i as f64).collect();
        assert_eq!(critical_value(&sym, 0.5).unwrap().value, 0.0);
        assert!(critical_value(&[], 0.05).is_err());
    }

    #[test]
    fn draws_are_finite_and_kappa_norm_at_least_one() {
        let cfg = LimitConfig { beta: 3.0, r_inf: 0.4, ..small_cfg() };
        for rep in 0..10 {
            let p = simulate_limit_path(&cfg, rep).unwrap();
            assert!(p.statistic.is_finite());
            assert!(p.kappa1 * p.kappa1 + 1.0 >= 1.0);
        }
    }

    #[test]
    fn table_round_trip_and_lookup() {
        let t = build_table(&[TestKind::ModifiedDf, TestKind::ClassicalDf], &[0.01, 0.05, 0.1], 200, 1000, 4, None).unwrap();
        assert_eq!(t.len(), 6);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = CriticalValueTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back, t);
        let q1 = t.lookup("modified_df", 0.01, false, NO_SIGMA_HASH).unwrap();
        let q5 = t.lookup("modified_df", 0.05, false, NO_SIGMA_HASH).unwrap();
        let q10 = t.lookup("modified_df", 0.10, false, NO_SIGMA_HASH).unwrap();
        assert!(q1 <= q5 && q5 <= q10);
        assert!(matches!(t.lookup("adf", 0.05, false, NO_SIGMA_HASH), Err(Error::Table(_))));

        let again = build_table(&[TestKind::ModifiedDf, TestKind::ClassicalDf], &[0.01, 0.05, 0.1], 200, 1000, 4, None).unwrap();
        let mut buf2 = Vec::new();
        again.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn sigma_hash_ignores_scale() {
        let a = SigmaCurve::from_fn(|u| 1.0 - 0.75 * u, 101).unwrap();
        let b = SigmaCurve::from_fn(|u| 3.0 * (1.0 - 0.75 * u), 101).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), SigmaCurve::constant().hash());
        assert_eq!(SigmaCurve::from_samples(vec![2.0; 7]).unwrap().hash(), "const");
    }

    proptest! {
        #[test]
        fn ito_identity_on_grid(v in proptest::collection::vec(-10.0f64..10.0, 2..200)) {
            let riemann: f64 = v.windows(2).map(|w| w[0] * (w[1] - w[0])).sum();
            let scale: f64 = v.iter().map(|x| x * x).sum::<f64>() + 1.0;
            prop_assert!((ito_integral(&v) - riemann).abs() <= 1e-10 * scale);
        }
    }
}
