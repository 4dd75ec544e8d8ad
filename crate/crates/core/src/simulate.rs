//! Euler simulation of the eight price models.
//!
//! `X^c` and `Z` are Itô processes driven by Brownian motions with correlation
//! `rho_bar`, scaled by a deterministic market volatility `sigma^M(t/T)` and an
//! idiosyncratic volatility (daily U-shape with volatility jumps, times a Heston
//! factor). The residual is built on the observation grid by
//! `eps_i = rho eps_{i-1} + dZ_i`, then `Y^c = c0 + alpha0 X^c + eps`, and
//! compound-Poisson price jumps are added to both observed series.
//!
//! The clock is in trading days. Volatility, Heston and drift parameters are
//! rates per year by default (`SimParams::rates_per_year`); jump intensities are
//! always per year, i.e. `10 T / 252` jumps over a horizon of `T` days.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::timegrid::{pair_align, PairSeries, SampledPath, SamplingGrid, Session, DAYS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketShape {
    Constant,
    /// `1 - 3u/4`.
    Linear,
    /// `1` before `u = 0.2`, `1/3` from `u = 0.2` on.
    Break,
    /// Product of `Linear` and `Break`.
    LinearBreak,
}

impl MarketShape {
    /// Shape factor at scaled time `u` in `[0, 1]`.
    pub fn factor(&self, u: f64) -> f64 {
        let linear = 1.0 - 0.75 * u;
        let brk = if u < 0.2 { 1.0 } else { 1.0 / 3.0 };
        match self {
            MarketShape::Constant => 1.0,
            MarketShape::Linear => linear,
            MarketShape::Break => brk,
            MarketShape::LinearBreak => linear * brk,
        }
    }
}

/// Feature set of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Features {
    pub market: MarketShape,
    pub heston: bool,
    pub ushape: bool,
    pub vol_jumps: bool,
    pub drift: bool,
    pub price_jumps: bool,
}

impl Features {
    pub fn for_model(model_id: u8) -> Result<Self> {
        let base = Features {
            market: MarketShape::Constant,
            heston: false,
            ushape: false,
            vol_jumps: false,
            drift: false,
            price_jumps: false,
        };
        Ok(match model_id {
            1 => base,
            2 => Features { market: MarketShape::Linear, ..base },
            3 => Features { market: MarketShape::Break, ..base },
            4 => Features { heston: true, ..base },
            5 => Features { ushape: true, vol_jumps: true, ..base },
            6 => Features { drift: true, ..base },
            7 => Features { price_jumps: true, ..base },
            8 => Features {
                market: MarketShape::LinearBreak,
                heston: true,
                ushape: true,
                vol_jumps: true,
                drift: true,
                price_jumps: true,
            },
            other => return Err(Error::Spec(format!("model id must be 1..=8, got {other}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoRegime {
    /// `rho = 1`.
    NoCointegration,
    Cointegration(f64),
    /// `rho = 1 - beta / n`.
    Weak(f64),
}

impl RhoRegime {
    pub fn rho(&self, n: usize) -> f64 {
        match *self {
            RhoRegime::NoCointegration => 1.0,
            RhoRegime::Cointegration(r) => r,
            RhoRegime::Weak(beta) => 1.0 - beta / n as f64,
        }
    }

    /// `1.0` maps to no cointegration.
    pub fn from_rho(rho: f64) -> Self {
        if rho == 1.0 {
            RhoRegime::NoCointegration
        } else {
            RhoRegime::Cointegration(rho)
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RhoRegime::Cointegration(r) if !(0.0..1.0).contains(&r) => {
                Err(Error::Spec(format!("cointegration rho must lie in [0, 1), got {r}")))
            }
            RhoRegime::Weak(b) if !(b >= 0.0 && b.is_finite()) => {
                Err(Error::Spec(format!("beta must be >= 0, got {b}")))
            }
            _ => Ok(()),
        }
    }
}

/// How the second parameter of a jump-magnitude normal law is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpScale {
    Variance,
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub sigma_tilde_sq: f64,
    /// Read `sigma_tilde_sq`, Heston and drift parameters per year of 252 days.
    pub rates_per_year: bool,
    pub ushape_c: f64,
    pub ushape_a: f64,
    pub ushape_d: f64,
    pub ushape_decay_open: f64,
    pub ushape_decay_close: f64,
    pub heston_alpha: f64,
    pub heston_mean: f64,
    pub heston_delta: f64,
    pub heston_phi: f64,
    pub jumps_per_year: f64,
    pub vol_jump_mean: f64,
    pub vol_jump_spread: f64,
    pub price_jump_mean: f64,
    pub price_jump_spread: f64,
    pub jump_scale: JumpScale,
    pub drift_x: f64,
    pub drift_z: f64,
    pub x0: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        let sigma_tilde = 0.1f64.sqrt();
        SimParams {
            sigma_tilde_sq: 0.1,
            rates_per_year: true,
            ushape_c: 0.75,
            ushape_a: 0.25,
            ushape_d: 0.89,
            ushape_decay_open: 10.0,
            ushape_decay_close: 10.0,
            heston_alpha: 5.0,
            heston_mean: 1.0,
            heston_delta: 0.4,
            heston_phi: -0.75,
            jumps_per_year: 10.0,
            vol_jump_mean: 0.5,
            vol_jump_spread: 0.1,
            price_jump_mean: sigma_tilde / 10f64.sqrt(),
            price_jump_spread: sigma_tilde / 10f64.powf(1.5),
            jump_scale: JumpScale::StdDev,
            drift_x: 0.03,
            drift_z: 0.02,
            x0: 100f64.ln(),
        }
    }
}

impl SimParams {
    /// Length of one model time unit in days.
    pub fn time_unit_days(&self) -> f64 {
        if self.rates_per_year {
            DAYS_PER_YEAR
        } else {
            1.0
        }
    }

    fn spread_sd(&self, spread: f64) -> f64 {
        match self.jump_scale {
            JumpScale::Variance => spread.sqrt(),
            JumpScale::StdDev => spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model_id: u8,
    pub features: Features,
    pub regime: RhoRegime,
    pub c0: f64,
    pub alpha0: f64,
    pub horizon_days: f64,
    pub euler_step_seconds: f64,
    pub sampling_seconds: f64,
    pub rho_bar: f64,
    pub seed: u64,
    pub params: SimParams,
    pub session: Session,
}

impl ModelSpec {
    /// Defaults: `c0 = 1`, `alpha0 = 2`, `T = 504` days, Euler step 10 s,
    /// 10-minute sampling, `rho_bar = 0.2`.
    pub fn new(model_id: u8, regime: RhoRegime, seed: u64) -> Result<Self> {
        Ok(ModelSpec {
            model_id,
            features: Features::for_model(model_id)?,
            regime,
            c0: 1.0,
            alpha0: 2.0,
            horizon_days: 504.0,
            euler_step_seconds: 10.0,
            sampling_seconds: 600.0,
            rho_bar: 0.2,
            seed,
            params: SimParams::default(),
            session: Session::default(),
        })
    }

    pub fn with_horizon(mut self, days: f64) -> Self {
        self.horizon_days = days;
        self
    }

    pub fn with_sampling_seconds(mut self, seconds: f64) -> Self {
        self.sampling_seconds = seconds;
        self
    }

    pub fn grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::from_interval(self.horizon_days, self.sampling_seconds, self.session)
            .map_err(|e| Error::Spec(e.to_string()))
    }

    /// Euler steps per observation interval.
    pub fn steps_per_interval(&self) -> Result<usize> {
        let ratio = self.sampling_seconds / self.euler_step_seconds;
        let r = ratio.round();
        if !(self.euler_step_seconds > 0.0) || r < 1.0 || (ratio - r).abs() > 1e-9 * ratio {
            return Err(Error::Spec(format!(
                "Euler step {} s does not divide the sampling interval {} s",
                self.euler_step_seconds, self.sampling_seconds
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if Features::for_model(self.model_id)? != self.features {
            log::debug!("model {} run with custom features {:?}", self.model_id, self.features);
        }
        self.regime.validate()?;
        if !(self.rho_bar > -1.0 && self.rho_bar < 1.0) {
            return Err(Error::Spec(format!("rho_bar must lie in (-1, 1), got {}", self.rho_bar)));
        }
        if !(self.horizon_days > 0.0) {
            return Err(Error::Spec("horizon must be positive".into()));
        }
        self.steps_per_interval()?;
        self.grid()?;
        Ok(())
    }
}

/// Market volatility `sigma_tilde * shape(u)` of model `model_id`.
pub fn market_vol(model_id: u8, u: f64) -> Result<f64> {
    let f = Features::for_model(model_id)?;
    Ok(SimParams::default().sigma_tilde_sq.sqrt() * f.market.factor(u))
}

/// Deterministic part of the daily U-shape at intraday fraction `tau`.
pub fn ushape(tau: f64, p: &SimParams) -> f64 {
    p.ushape_c + p.ushape_a * (-p.ushape_decay_open * tau).exp() + p.ushape_d * (-p.ushape_decay_close * (1.0 - tau)).exp()
}

/// State of one idiosyncratic volatility process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdioState {
    /// Heston variance (1 when the Heston factor is off).
    pub variance: f64,
    /// Volatility jumps of the current session added to the U-shape.
    pub ushape_jump: f64,
}

/// Volatility for the step starting in `state` at intraday fraction `tau`, and
/// the state after a full-truncation Euler step of length `dt` (model units)
/// with Brownian increment `dw_bar` of the variance driver.
pub fn idio_vol_step(state: IdioState, tau: f64, dt: f64, dw_bar: f64, features: &Features, p: &SimParams) -> (f64, IdioState) {
    let u_part = if features.ushape {
        ushape(tau, p) + state.ushape_jump
    } else {
        1.0
    };
    if !features.heston {
        return (u_part, state);
    }
    let v_plus = state.variance.max(0.0);
    let sv = v_plus.sqrt();
    let next = state.variance + p.heston_alpha * (p.heston_mean - v_plus) * dt + p.heston_delta * sv * dw_bar;
    (
        u_part * sv,
        IdioState {
            variance: next,
            ushape_jump: state.ushape_jump,
        },
    )
}

/// Jump time (days since start) and signed size.
pub type JumpEvent = (f64, f64);

// Volatility jumps shift the intraday curve until the session closes; a jump
// whose session already ended is skipped.
fn apply_vol_jumps(jumps: &[JumpEvent], next: &mut usize, t: f64, today: f64, level: &mut f64) {
    while *next < jumps.len() && jumps[*next].0 <= t {
        if jumps[*next].0.floor() >= today {
            *level += jumps[*next].1;
        }
        *next += 1;
    }
}

/// Finest-grid simulation shared by all sampling frequencies and all `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub grid: SamplingGrid,
    pub features: Features,
    pub xc: Vec<f64>,
    pub z: Vec<f64>,
    pub x_jumps: Vec<JumpEvent>,
    pub y_jumps: Vec<JumpEvent>,
    pub vol_jumps_x: Vec<JumpEvent>,
    pub vol_jumps_z: Vec<JumpEvent>,
    /// Market volatility at the grid points.
    pub sigma_m: Vec<f64>,
}

fn draw_jumps(rng: &mut ChaCha8Rng, horizon: f64, per_year: f64, mean: f64, sd: f64) -> Vec<JumpEvent> {
    let lambda = per_year * horizon / DAYS_PER_YEAR;
    let count = if lambda > 0.0 {
        Poisson::new(lambda).map(|d| d.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let mut jumps: Vec<JumpEvent> = (0..count)
        .map(|_| {
            let t = horizon * (1.0 - rng.random::<f64>()); // in (0, T]
            let magnitude = (mean + sd * rng.sample::<f64, _>(StandardNormal)).abs();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (t, sign * magnitude)
        })
        .collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    jumps
}

fn stationary_variance(rng: &mut ChaCha8Rng, p: &SimParams) -> Result<f64> {
    let shape = 2.0 * p.heston_alpha * p.heston_mean / (p.heston_delta * p.heston_delta);
    let scale = p.heston_delta * p.heston_delta / (2.0 * p.heston_alpha);
    let g = Gamma::new(shape, scale).map_err(|e| Error::Spec(format!("Heston initial law: {e}")))?;
    Ok(g.sample(rng))
}

/// Index of the first grid point at or after time `t`.
pub fn grid_index_at_or_after(t: f64, delta: f64) -> usize {
    let mut i = (t / delta).ceil().max(0.0) as usize;
    while (i as f64) * delta < t {
        i += 1;
    }
    while i > 0 && ((i - 1) as f64) * delta >= t {
        i -= 1;
    }
    i
}

/// Cumulative jump process sampled at the grid points.
pub fn cumulative_jumps(jumps: &[JumpEvent], grid: &SamplingGrid) -> Vec<f64> {
    let n = grid.n();
    let mut inc = vec![0.0; n + 1];
    for &(t, size) in jumps {
        let i = grid_index_at_or_after(t, grid.delta()).min(n);
        inc[i] += size;
    }
    let mut acc = 0.0;
    inc.iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect()
}

/// Simulates `X^c`, `Z` and the jump events on the grid of `spec`.
pub fn simulate_latent(spec: &ModelSpec) -> Result<LatentPath> {
    spec.validate()?;
    let grid = spec.grid()?;
    let f = spec.features;
    let p = &spec.params;
    let n = grid.n();
    let horizon = spec.horizon_days;
    let steps = spec.steps_per_interval()?;
    let dt_days = grid.delta() / steps as f64;
    let unit = p.time_unit_days();
    let dt = dt_days / unit;
    let sqrt_dt = dt.sqrt();
    let sigma_tilde = p.sigma_tilde_sq.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (x_jumps, y_jumps) = if f.price_jumps {
        let sd = p.spread_sd(p.price_jump_spread);
        let a = draw_jumps(&mut rng, horizon, p.jumps_per_year, p.price_jump_mean, sd);
        let b = draw_jumps(&mut rng, horizon, p.jumps_per_year, p.price_jump_mean, sd);
        (a, b)
    } else {
        (Vec::new(), Vec::new())
    };
    let (vol_jumps_x, vol_jumps_z) = if f.vol_jumps {
        let sd = p.spread_sd(p.vol_jump_spread);
        let a = draw_jumps(&mut rng, horizon, p.jumps_per_year, p.vol_jump_mean, sd);
        let b = draw_jumps(&mut rng, horizon, p.jumps_per_year, p.vol_jump_mean, sd);
        (a, b)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut state_x = IdioState { variance: 1.0, ushape_jump: 0.0 };
    let mut state_z = state_x;
    if f.heston {
        state_x.variance = stationary_variance(&mut rng, p)?;
        state_z.variance = stationary_variance(&mut rng, p)?;
    }

    let rho_bar = spec.rho_bar;
    let rho_perp = (1.0 - rho_bar * rho_bar).sqrt();
    let phi = p.heston_phi;
    let phi_perp = (1.0 - phi * phi).sqrt();
    let seconds_per_day = spec.session.seconds_per_day;

    let mut xc = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut sigma_m = Vec::with_capacity(n + 1);
    let (mut x, mut zz) = (p.x0, 0.0);
    let (mut wb_x, mut wb_z) = (0.0, 0.0);
    let (mut next_vx, mut next_vz) = (0usize, 0usize);
    xc.push(x);
    z.push(zz);
    sigma_m.push(sigma_tilde * f.market.factor(0.0));

    let step_seconds = spec.euler_step_seconds;
    let steps_per_day = (seconds_per_day / step_seconds).round().max(1.0) as u64;
    let mut j: u64 = 0;
    for i in 1..=n {
        for _ in 0..steps {
            let t = j as f64 * dt_days;
            let u = t / horizon;
            let sm = sigma_tilde * f.market.factor(u);
            let today = (j / steps_per_day) as f64;
            if j % steps_per_day == 0 {
                state_x.ushape_jump = 0.0;
                state_z.ushape_jump = 0.0;
            }
            apply_vol_jumps(&vol_jumps_x, &mut next_vx, t, today, &mut state_x.ushape_jump);
            apply_vol_jumps(&vol_jumps_z, &mut next_vz, t, today, &mut state_z.ushape_jump);
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            let nz = rho_bar * n1 + rho_perp * n2;
            let (sx, sz) = if f.heston || f.ushape {
                let tau = ((j as f64 * step_seconds) % seconds_per_day) / seconds_per_day;
                let (bx, bz) = if f.heston {
                    let n3: f64 = rng.sample(StandardNormal);
                    let n4: f64 = rng.sample(StandardNormal);
                    (
                        sqrt_dt * (phi * n1 + phi_perp * n3),
                        sqrt_dt * (phi * nz + phi_perp * n4),
                    )
                } else {
                    (0.0, 0.0)
                };
                let (sx, nx) = idio_vol_step(state_x, tau, dt, bx, &f, p);
                let (sz, nzs) = idio_vol_step(state_z, tau, dt, bz, &f, p);
                state_x = nx;
                state_z = nzs;
                (sx, sz)
            } else {
                (1.0, 1.0)
            };
            let (drift_x, drift_z) = if f.drift {
                let dx = p.drift_x * (1.0 + wb_x) * dt;
                let dz = p.drift_z * (1.0 + wb_z) * dt;
                wb_x += sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                wb_z += sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                (dx, dz)
            } else {
                (0.0, 0.0)
            };
            x += drift_x + sm * sx * sqrt_dt * n1;
            zz += drift_z + sm * sz * sqrt_dt * nz;
            j += 1;
        }
        xc.push(x);
        z.push(zz);
        sigma_m.push(sigma_tilde * f.market.factor(grid.time(i) / horizon));
    }

    Ok(LatentPath {
        grid,
        features: f,
        xc,
        z,
        x_jumps,
        y_jumps,
        vol_jumps_x,
        vol_jumps_z,
        sigma_m,
    })
}

/// Observed pair and the latent truth behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub pair: PairSeries,
    pub rho: f64,
    pub eps: Vec<f64>,
    pub xc: Vec<f64>,
    pub yc: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub sigma_m: Vec<f64>,
    pub x_jumps: Vec<JumpEvent>,
    pub y_jumps: Vec<JumpEvent>,
    pub vol_jumps_x: Vec<JumpEvent>,
    pub vol_jumps_z: Vec<JumpEvent>,
    pub features: Features,
}

/// Observed pair at every `m`-th latent grid point with residual parameter `rho`.
pub fn assemble(latent: &LatentPath, m: usize, rho: f64, c0: f64, alpha0: f64) -> Result<SimOutput> {
    let n_base = latent.grid.n();
    if m == 0 || n_base % m != 0 {
        return Err(Error::Argument(format!("factor {m} does not divide n = {n_base}")));
    }
    let n = n_base / m;
    let grid = SamplingGrid::new(latent.grid.horizon(), n, latent.grid.session())?;
    let pick = |v: &[f64]| -> Vec<f64> { (0..=n).map(|i| v[i * m]).collect() };
    let xc = pick(&latent.xc);
    let z = pick(&latent.z);
    let sigma_m = pick(&latent.sigma_m);
    let jx = cumulative_jumps(&latent.x_jumps, &grid);
    let jy = cumulative_jumps(&latent.y_jumps, &grid);
    let mut eps = Vec::with_capacity(n + 1);
    eps.push(0.0);
    for i in 1..=n {
        let e = rho * eps[i - 1] + (z[i] - z[i - 1]);
        eps.push(e);
    }
    let yc: Vec<f64> = xc.iter().zip(&eps).map(|(x, e)| c0 + alpha0 * x + e).collect();
    let xo: Vec<f64> = xc.iter().zip(&jx).map(|(a, b)| a + b).collect();
    let yo: Vec<f64> = yc.iter().zip(&jy).map(|(a, b)| a + b).collect();
    let pair = pair_align(SampledPath::new(grid, xo)?, SampledPath::new(grid, yo)?)?;
    Ok(SimOutput {
        pair,
        rho,
        eps,
        xc,
        yc,
        jx,
        jy,
        sigma_m,
        x_jumps: latent.x_jumps.clone(),
        y_jumps: latent.y_jumps.clone(),
        vol_jumps_x: latent.vol_jumps_x.clone(),
        vol_jumps_z: latent.vol_jumps_z.clone(),
        features: latent.features,
    })
}

pub fn simulate_model(spec: &ModelSpec) -> Result<SimOutput> {
    let latent = simulate_latent(spec)?;
    let rho = spec.regime.rho(latent.grid.n());
    assemble(&latent, 1, rho, spec.c0, spec.alpha0)
}

/// Residual variance against the stationary variance of the Ornstein-Uhlenbeck
/// limit at `rho = 1 - theta * delta` (`theta` per day), pooled over `paths`
/// replications seeded from `spec.seed`.
pub fn ou_weak_limit_check(theta: f64, spec: &ModelSpec, paths: usize) -> Result<(f64, f64)> {
    let f = spec.features;
    if f != Features::for_model(1)? {
        return Err(Error::Spec(
            "the Ornstein-Uhlenbeck check needs constant volatilities without jumps or drift".into(),
        ));
    }
    if !(theta > 0.0) || paths == 0 {
        return Err(Error::Spec("theta must be positive and paths >= 1".into()));
    }
    let grid = spec.grid()?;
    let rho = 1.0 - theta * grid.delta();
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..paths {
        let s = ModelSpec {
            seed: crate::rng::split_seed(spec.seed, 0x0E, r as u64),
            ..spec.clone()
        };
        let latent = simulate_latent(&s)?;
        let out = assemble(&latent, 1, rho, spec.c0, spec.alpha0)?;
        sum += out.eps[1..].iter().map(|e| e * e).sum::<f64>();
        count += out.eps.len() - 1;
    }
    let rate_per_day = spec.params.sigma_tilde_sq / spec.params.time_unit_days();
    Ok((sum / count as f64, rate_per_day / (2.0 * theta)))
}
