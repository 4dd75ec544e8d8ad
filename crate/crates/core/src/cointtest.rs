//! Residual-based tests for the null of no cointegration.
//!
//! The modified Dickey-Fuller statistic works on truncated, deflated residuals.
//! The classical DF, ADF and Phillips-Perron statistics work on the residuals of
//! a plain OLS regression of raw `Y` on raw `X`. All tests reject in the left tail.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimate::{fit_cointegration, ols};
use crate::limitdist::{CriticalValueTable, SigmaCurve, NO_SIGMA_HASH};
use crate::linalg::least_squares;
use crate::preprocess::{deflate, detrend_deflate, DeflatedPair, DeflationConfig, TruncationConfig};
use crate::timegrid::PairSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    ModifiedDf,
    ModifiedDfDetrended,
    ClassicalDf,
    Adf(usize),
    PpZAlpha(usize),
    PpZTau(usize),
}

impl TestKind {
    /// Name used in critical-value tables; lag and bandwidth are not part of it.
    pub fn table_key(&self) -> &'static str {
        match self {
            TestKind::ModifiedDf => "modified_df",
            TestKind::ModifiedDfDetrended => "modified_df_detrended",
            TestKind::ClassicalDf => "df",
            TestKind::Adf(_) => "adf",
            TestKind::PpZAlpha(_) => "pp_z_alpha",
            TestKind::PpZTau(_) => "pp_z_tau",
        }
    }

    pub fn is_detrended(&self) -> bool {
        matches!(self, TestKind::ModifiedDfDetrended)
    }

    pub fn is_classical(&self) -> bool {
        matches!(
            self,
            TestKind::ClassicalDf | TestKind::Adf(_) | TestKind::PpZAlpha(_) | TestKind::PpZTau(_)
        )
    }

    /// Standard set for sample size `n`, with the default lag and bandwidth rules.
    pub fn standard_set(n: usize) -> Vec<TestKind> {
        let lag = select_adf_lag(n);
        let bw = pp_bandwidth(n);
        vec![
            TestKind::ModifiedDf,
            TestKind::ClassicalDf,
            TestKind::Adf(lag),
            TestKind::PpZAlpha(bw),
            TestKind::PpZTau(bw),
        ]
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestKind::Adf(p) => write!(f, "adf({p})"),
            TestKind::PpZAlpha(l) => write!(f, "pp_z_alpha({l})"),
            TestKind::PpZTau(l) => write!(f, "pp_z_tau({l})"),
            other => f.write_str(other.table_key()),
        }
    }
}

/// Parses `modified_df`, `modified_df_detrended`, `df`, `adf`, `adf(4)`,
/// `pp_z_alpha`, `pp_z_tau(7)`. A missing lag or bandwidth becomes
/// `usize::MAX`, meaning "choose from n" (see [`TestKind::resolve`]).
impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.find('(') {
            Some(pos) if s.ends_with(')') => (&s[..pos], Some(&s[pos + 1..s.len() - 1])),
            _ => (s.as_str(), None),
        };
        let arg = match arg {
            Some(a) => a
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad lag in test kind {s:?}")))?,
            None => usize::MAX,
        };
        let kind = match name {
            "modified_df" | "mdf" => TestKind::ModifiedDf,
            "modified_df_detrended" | "mdf_detrended" => TestKind::ModifiedDfDetrended,
            "df" | "classical_df" => TestKind::ClassicalDf,
            "adf" => TestKind::Adf(arg),
            "pp_z_alpha" | "z_alpha" => TestKind::PpZAlpha(arg),
            "pp_z_tau" | "z_tau" => TestKind::PpZTau(arg),
            _ => return Err(Error::Config(format!("unknown test kind {s:?}"))),
        };
        Ok(kind)
    }
}

impl TestKind {
    /// Replaces an unset lag or bandwidth by the default rule at sample size `n`.
    pub fn resolve(self, n: usize) -> TestKind {
        match self {
            TestKind::Adf(usize::MAX) => TestKind::Adf(select_adf_lag(n)),
            TestKind::PpZAlpha(usize::MAX) => TestKind::PpZAlpha(pp_bandwidth(n)),
            TestKind::PpZTau(usize::MAX) => TestKind::PpZTau(pp_bandwidth(n)),
            k => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfStat {
    pub phi_hat: f64,
    pub s_phi: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub critical_value: f64,
    pub level: f64,
    pub reject: bool,
    pub n: usize,
    pub delta_days: f64,
    pub phi_hat: Option<f64>,
    pub s_phi: Option<f64>,
}

impl TestResult {
    fn new(kind: TestKind, statistic: f64, critical_value: f64, level: f64, pair: &PairSeries, df: Option<DfStat>) -> Self {
        TestResult {
            kind,
            statistic,
            critical_value,
            level,
            reject: statistic < critical_value,
            n: pair.n(),
            delta_days: pair.grid().delta(),
            phi_hat: df.map(|d| d.phi_hat),
            s_phi: df.map(|d| d.s_phi),
        }
    }
}

/// Dickey-Fuller t-type statistic on residuals `eps_0..=eps_n`.
///
/// `phi_hat = sum d(eps_i) eps_{i-1} / sum eps_i^2` and
/// `s_phi^2 = n^{-1} sum (d(eps_i) - phi_hat eps_{i-1})^2 / sum eps_{i-1}^2`.
pub fn df_psi(eps: &[f64]) -> Result<DfStat> {
    if eps.len() < 3 {
        return Err(Error::Argument("df_psi needs n >= 2".into()));
    }
    let n = eps.len() - 1;
    let mut cross = 0.0;
    let mut sq = 0.0;
    let mut sq_lag = 0.0;
    for i in 1..=n {
        cross += (eps[i] - eps[i - 1]) * eps[i - 1];
        sq += eps[i] * eps[i];
        sq_lag += eps[i - 1] * eps[i - 1];
    }
    if !(sq > 0.0 && sq_lag > 0.0) {
        return Err(Error::DegenerateResidual("residual sum of squares is zero".into()));
    }
    let phi_hat = cross / sq;
    let mut rss = 0.0;
    for i in 1..=n {
        let u = eps[i] - eps[i - 1] - phi_hat * eps[i - 1];
        rss += u * u;
    }
    let s_phi = (rss / n as f64 / sq_lag).sqrt();
    let psi = if phi_hat == 0.0 { 0.0 } else { phi_hat / s_phi };
    if !psi.is_finite() {
        return Err(Error::DegenerateResidual("zero regression residuals".into()));
    }
    Ok(DfStat { phi_hat, s_phi, psi })
}

/// Statistic of the modified test and the transformed pair it was computed on.
pub fn modified_df_statistic(
    pair: &PairSeries,
    cfg_t: &TruncationConfig,
    cfg_d: &DeflationConfig,
    detrended: bool,
) -> Result<(DfStat, DeflatedPair)> {
    let dp = if detrended {
        detrend_deflate(pair, cfg_t, cfg_d)?
    } else {
        deflate(pair, cfg_t, cfg_d)?
    };
    let fit = fit_cointegration(&dp)?;
    exact_fit_check(&fit.residuals, &dp.ty_def)?;
    Ok((df_psi(&fit.residuals)?, dp))
}

/// Full modified test. The detrended limit depends on the market-volatility
/// curve; `sigma` selects the matching table entry (constant curve if `None`).
pub fn run_modified_df(
    pair: &PairSeries,
    cfg_t: &TruncationConfig,
    cfg_d: &DeflationConfig,
    detrended: bool,
    level: f64,
    cv: &CriticalValueTable,
    sigma: Option<&SigmaCurve>,
) -> Result<TestResult> {
    let kind = if detrended {
        TestKind::ModifiedDfDetrended
    } else {
        TestKind::ModifiedDf
    };
    let hash = if detrended {
        sigma.cloned().unwrap_or_else(SigmaCurve::constant).hash()
    } else {
        NO_SIGMA_HASH.to_string()
    };
    let q = cv.lookup(kind.table_key(), level, detrended, &hash)?;
    let (df, _) = modified_df_statistic(pair, cfg_t, cfg_d, detrended)?;
    Ok(TestResult::new(kind, df.psi, q, level, pair, Some(df)))
}

// Y an exact affine function of X leaves nothing to test.
fn exact_fit_check(residuals: &[f64], y: &[f64]) -> Result<()> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let syy: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    if rss <= 1e-24 * syy.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateRegressor("Y is an exact affine function of X".into()));
    }
    Ok(())
}

/// Residuals of raw `Y` on raw `X` with intercept.
pub fn step_one_residuals(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let line = ols(x, y)?;
    let eps: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - line.intercept - line.slope * a)
        .collect();
    exact_fit_check(&eps, y)?;
    Ok(eps)
}

/// Schwert rule `floor(12 (n/100)^{1/4})`.
pub fn select_adf_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25) + 1e-9).floor() as usize
}

/// Newey-West rule `floor(4 (n/100)^{2/9})`.
pub fn pp_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0) + 1e-9).floor() as usize
}

/// t-statistic of `phi` in `d(eps_i) = phi eps_{i-1} + sum_j psi_j d(eps_{i-j}) + u_i`
/// over `i = p+1..=n`, no intercept.
pub fn adf_statistic(eps: &[f64], p: usize) -> Result<f64> {
    let n = eps.len().saturating_sub(1);
    if n < p + 3 {
        return Err(Error::Argument(format!("ADF({p}) needs n >= {}, got {n}", p + 3)));
    }
    let d: Vec<f64> = eps.windows(2).map(|w| w[1] - w[0]).collect(); // d[i-1] = d(eps_i)
    let mut rows = Vec::with_capacity(n - p);
    let mut y = Vec::with_capacity(n - p);
    for i in p + 1..=n {
        let mut row = Vec::with_capacity(p + 1);
        row.push(eps[i - 1]);
        for j in 1..=p {
            row.push(d[i - j - 1]);
        }
        rows.push(row);
        y.push(d[i - 1]);
    }
    least_squares(&rows, &y)?.t_stat(0)
}

/// Phillips-Perron `(Z_alpha, Z_tau)` with a Bartlett kernel of bandwidth `bandwidth`.
pub fn pp_statistics(eps: &[f64], bandwidth: usize) -> Result<(f64, f64)> {
    if eps.len() < 3 {
        return Err(Error::Argument("PP needs n >= 2".into()));
    }
    let n = eps.len() - 1;
    let nf = n as f64;
    let mut cross = 0.0;
    let mut dsum = 0.0;
    for i in 1..=n {
        cross += (eps[i] - eps[i - 1]) * eps[i - 1];
        dsum += eps[i - 1] * eps[i - 1];
    }
    if !(dsum > 0.0) {
        return Err(Error::DegenerateResidual("zero lagged residual variation".into()));
    }
    let phi = cross / dsum;
    // u[i-1] = u_i
    let u: Vec<f64> = (1..=n).map(|i| eps[i] - eps[i - 1] - phi * eps[i - 1]).collect();
    let s2 = u.iter().map(|v| v * v).sum::<f64>() / nf;
    let mut lambda = 0.0;
    for l in 1..=bandwidth.min(n - 1) {
        let w = 1.0 - l as f64 / (bandwidth as f64 + 1.0);
        let gamma: f64 = (l..n).map(|i| u[i] * u[i - l]).sum();
        lambda += w * gamma;
    }
    lambda /= nf;
    let lr = s2 + 2.0 * lambda;
    if !(lr > 0.0) {
        return Err(Error::LongRunVariance(format!("long-run variance estimate {lr:e} is not positive")));
    }
    let scaled_d = dsum / (nf * nf);
    let t_phi = phi / (s2 / dsum).sqrt();
    let sigma = lr.sqrt();
    let z_alpha = nf * phi - lambda / scaled_d;
    let z_tau = (s2.sqrt() / sigma) * t_phi - lambda / (sigma * scaled_d.sqrt());
    Ok((z_alpha, z_tau))
}

/// Statistic of a classical test on step-one residuals.
pub fn classical_statistic(eps: &[f64], kind: TestKind) -> Result<(f64, Option<DfStat>)> {
    let n = eps.len().saturating_sub(1);
    match kind.resolve(n) {
        TestKind::ClassicalDf => {
            let df = df_psi(eps)?;
            Ok((df.psi, Some(df)))
        }
        TestKind::Adf(p) => Ok((adf_statistic(eps, p)?, None)),
        TestKind::PpZAlpha(l) => Ok((pp_statistics(eps, l)?.0, None)),
        TestKind::PpZTau(l) => Ok((pp_statistics(eps, l)?.1, None)),
        other => Err(Error::Argument(format!("{other} is not a classical test"))),
    }
}

pub fn classical_tests(pair: &PairSeries, kind: TestKind, level: f64, cv: &CriticalValueTable) -> Result<TestResult> {
    let kind = kind.resolve(pair.n());
    if !kind.is_classical() {
        return Err(Error::Argument(format!("{kind} is not a classical test")));
    }
    let q = cv.lookup(kind.table_key(), level, false, NO_SIGMA_HASH)?;
    let eps = step_one_residuals(pair.x().values(), pair.y().values())?;
    let (stat, df) = classical_statistic(&eps, kind)?;
    Ok(TestResult::new(kind, stat, q, level, pair, df))
}

/// Dispatches on `kind`; the modified tests use the given preprocessing configs.
pub fn run_test(
    pair: &PairSeries,
    kind: TestKind,
    level: f64,
    cv: &CriticalValueTable,
    cfg_t: &TruncationConfig,
    cfg_d: &DeflationConfig,
    sigma: Option<&SigmaCurve>,
) -> Result<TestResult> {
    match kind {
        TestKind::ModifiedDf => run_modified_df(pair, cfg_t, cfg_d, false, level, cv, None),
        TestKind::ModifiedDfDetrended => run_modified_df(pair, cfg_t, cfg_d, true, level, cv, sigma),
        other => classical_tests(pair, other, level, cv),
    }
}
