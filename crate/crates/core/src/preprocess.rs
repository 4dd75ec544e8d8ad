//! Jump truncation, local realized-volatility deflation and drift-robust detrending.
//!
//! Increments whose absolute size exceeds `a * delta^omega_bar` in either
//! series are discarded jointly; by default `a` is `a0` times each series' own
//! constant-volatility MLE. The surviving increments are divided by
//! `sqrt(C_i)`, where `C_i` is a strictly lagged local realized variance of the
//! truncated `X` returns. A deflator equal to `f64::INFINITY` marks indices where
//! no estimate is available; the corresponding deflated increment is zero.

use crate::error::{Error, Result};
use crate::timegrid::{PairSeries, SampledPath};

/// Scale entering the truncation threshold `a = a0 * sigma_scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaScale {
    /// Constant-volatility MLE of `X`, per square-root day.
    Auto,
    Fixed(f64),
    /// Threshold of `+inf`: nothing is truncated.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    pub a0: f64,
    pub omega_bar: f64,
    pub sigma_scale: SigmaScale,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            a0: 4.0,
            omega_bar: 0.48,
            sigma_scale: SigmaScale::Auto,
        }
    }
}

impl TruncationConfig {
    pub fn disabled() -> Self {
        Self {
            sigma_scale: SigmaScale::Disabled,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_bar > 0.0 && self.omega_bar < 0.5) {
            return Err(Error::Config(format!(
                "truncation exponent must lie in (0, 1/2), got {}",
                self.omega_bar
            )));
        }
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return Err(Error::Config(format!("a0 must be positive, got {}", self.a0)));
        }
        if let SigmaScale::Fixed(s) = self.sigma_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma scale must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Thresholds `a0 * sigma_U * delta^omega_bar` for `U = X, Y`. With
    /// [`SigmaScale::Auto`] each series uses its own MLE scale; otherwise both
    /// share one threshold.
    pub fn thresholds(&self, pair: &PairSeries) -> Result<(f64, f64)> {
        self.validate()?;
        let (sx, sy) = match self.sigma_scale {
            SigmaScale::Disabled => return Ok((f64::INFINITY, f64::INFINITY)),
            SigmaScale::Fixed(s) => (s, s),
            SigmaScale::Auto => (estimate_sigma_mle(pair.x())?, estimate_sigma_mle(pair.y())?),
        };
        let scale = self.a0 * pair.grid().delta().powf(self.omega_bar);
        let (tx, ty) = (scale * sx, scale * sy);
        for t in [tx, ty] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("truncation threshold {t} is not positive")));
            }
        }
        Ok((tx, ty))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflationConfig {
    pub gamma: f64,
    pub gamma_prime: f64,
}

impl Default for DeflationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            gamma_prime: 0.01,
        }
    }
}

impl DeflationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.gamma_prime && self.gamma_prime < self.gamma && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < gamma' < gamma < 1, got gamma = {}, gamma' = {}",
                self.gamma, self.gamma_prime
            )));
        }
        Ok(())
    }

    /// Window sizes `(k, l) = (floor(T^gamma / delta), floor(T^gamma' / delta))`.
    pub fn windows(&self, horizon: f64, delta: f64) -> (usize, usize) {
        let floor = |x: f64| (x + 1e-9).floor().max(0.0) as usize;
        (
            floor(horizon.powf(self.gamma) / delta),
            floor(horizon.powf(self.gamma_prime) / delta),
        )
    }
}

/// Joint keep/discard flag per increment; `keep()[j - 1]` refers to increment `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationMask {
    keep: Vec<bool>,
    threshold_x: f64,
    threshold_y: f64,
}

impl TruncationMask {
    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    /// Thresholds applied to `|dX|` and `|dY|`.
    pub fn thresholds(&self) -> (f64, f64) {
        (self.threshold_x, self.threshold_y)
    }

    pub fn discarded(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }
}

/// Truncated, deflated (and possibly detrended) versions of both series.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflatedPair {
    pub tx_def: Vec<f64>,
    pub ty_def: Vec<f64>,
    /// `C_1..C_n`; entry `j - 1` is `C_j`, `f64::INFINITY` when undefined.
    pub deflators: Vec<f64>,
    pub mask: TruncationMask,
    pub k: usize,
    pub l: usize,
    pub detrended: bool,
    pub horizon: f64,
    pub delta: f64,
}

impl DeflatedPair {
    pub fn n(&self) -> usize {
        self.deflators.len()
    }

    pub fn tx_increments(&self) -> Vec<f64> {
        self.tx_def.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn ty_increments(&self) -> Vec<f64> {
        self.ty_def.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Square roots of the finite deflators, a proxy for the market volatility
    /// curve up to a constant factor. Leading undefined entries take the first
    /// finite value.
    pub fn volatility_proxy(&self) -> Vec<f64> {
        let first = self
            .deflators
            .iter()
            .copied()
            .find(|c| c.is_finite())
            .unwrap_or(1.0);
        let mut last = first;
        self.deflators
            .iter()
            .map(|&c| {
                if c.is_finite() {
                    last = c;
                }
                last.sqrt()
            })
            .collect()
    }
}

/// `sqrt(sum (dX_i)^2 / T)` with `T` in days.
pub fn estimate_sigma_mle(x: &SampledPath) -> Result<f64> {
    if x.n() < 2 {
        return Err(Error::Argument("sigma MLE needs at least two increments".into()));
    }
    let qv: f64 = x.increments().iter().map(|d| d * d).sum();
    if qv <= 0.0 {
        return Err(Error::DegenerateScale("all increments are zero".into()));
    }
    Ok((qv / x.grid().horizon()).sqrt())
}

/// Marks increments where both `|dX|` and `|dY|` are at most `threshold`.
pub fn mask_with_threshold(pair: &PairSeries, threshold: f64) -> TruncationMask {
    mask_with_thresholds(pair, threshold, threshold)
}

/// Marks increments with `|dX| <= threshold_x` and `|dY| <= threshold_y`.
pub fn mask_with_thresholds(pair: &PairSeries, threshold_x: f64, threshold_y: f64) -> TruncationMask {
    let keep = pair
        .x()
        .increments()
        .iter()
        .zip(pair.y().increments())
        .map(|(dx, dy)| dx.abs() <= threshold_x && dy.abs() <= threshold_y)
        .collect();
    TruncationMask { keep, threshold_x, threshold_y }
}

pub fn truncation_mask(pair: &PairSeries, cfg: &TruncationConfig) -> Result<TruncationMask> {
    let (tx, ty) = cfg.thresholds(pair)?;
    Ok(mask_with_thresholds(pair, tx, ty))
}

/// `C_i = T^{-gamma} RV_{i,k,l}` for `i > 2k` with positive `RV`, else infinite.
///
/// `RV_{i,k,l}` sums `dX_j^2 1{|dX_j| <= threshold}` over
/// `j = max(i - k, 1) ..= max(i - l - 1, 1)`.
pub fn compute_deflators(x: &SampledPath, threshold: f64, cfg: &DeflationConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let grid = x.grid();
    let n = grid.n();
    let (k, l) = cfg.windows(grid.horizon(), grid.delta());
    if 2 * k >= n {
        return Err(Error::Window(format!(
            "k = {k} is not below n/2 = {} at T = {}, delta = {}",
            n as f64 / 2.0,
            grid.horizon(),
            grid.delta()
        )));
    }
    if k < l + 2 {
        return Err(Error::Window(format!("need k >= l + 2, got k = {k}, l = {l}")));
    }

    let increments = x.increments();
    // prefix[j] = sum of truncated squares of increments 1..=j
    let mut prefix = vec![0.0; n + 1];
    for j in 1..=n {
        let d = increments[j - 1];
        let sq = if d.abs() <= threshold { d * d } else { 0.0 };
        prefix[j] = prefix[j - 1] + sq;
    }
    let scale = grid.horizon().powf(-cfg.gamma);
    let deflators = (1..=n)
        .map(|i| {
            if i <= 2 * k {
                return f64::INFINITY;
            }
            let lo = i.saturating_sub(k).max(1);
            let hi = i.saturating_sub(l + 1).max(1);
            let rv = prefix[hi] - prefix[lo - 1];
            if rv > 0.0 {
                scale * rv
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(deflators)
}

fn accumulate(start: f64, increments: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![start];
    let mut level = start;
    for d in increments {
        level += d;
        out.push(level);
    }
    out
}

fn deflate_series(
    path: &SampledPath,
    keep: &[bool],
    deflators: &[f64],
    drift: Option<f64>,
) -> Vec<f64> {
    let incs = path.increments();
    let steps = incs.iter().zip(keep).zip(deflators).map(|((&d, &kept), &c)| {
        if !c.is_finite() {
            return 0.0;
        }
        let truncated = if kept { d } else { 0.0 };
        (truncated - drift.unwrap_or(0.0)) / c.sqrt()
    });
    accumulate(path.values()[0], steps)
}

fn prepare(
    pair: &PairSeries,
    cfg_t: &TruncationConfig,
    cfg_d: &DeflationConfig,
) -> Result<(TruncationMask, Vec<f64>, usize, usize)> {
    let mask = truncation_mask(pair, cfg_t)?;
    let deflators = compute_deflators(pair.x(), mask.threshold_x, cfg_d)?;
    let (k, l) = cfg_d.windows(pair.grid().horizon(), pair.grid().delta());
    Ok((mask, deflators, k, l))
}

/// Truncated and deflated pair.
pub fn deflate(pair: &PairSeries, cfg_t: &TruncationConfig, cfg_d: &DeflationConfig) -> Result<DeflatedPair> {
    let (mask, deflators, k, l) = prepare(pair, cfg_t, cfg_d)?;
    let tx_def = deflate_series(pair.x(), &mask.keep, &deflators, None);
    let ty_def = deflate_series(pair.y(), &mask.keep, &deflators, None);
    Ok(DeflatedPair {
        tx_def,
        ty_def,
        deflators,
        mask,
        k,
        l,
        detrended: false,
        horizon: pair.grid().horizon(),
        delta: pair.grid().delta(),
    })
}

/// Drift estimate `n^{-1} (T(U)_n - T(U)_0)` of the truncated series.
pub fn truncated_drift(path: &SampledPath, keep: &[bool]) -> f64 {
    let total: f64 = path
        .increments()
        .iter()
        .zip(keep)
        .map(|(d, &k)| if k { *d } else { 0.0 })
        .sum();
    total / path.n() as f64
}

/// Truncated, detrended and deflated pair. Where the deflator is infinite the
/// whole detrended increment is zero.
pub fn detrend_deflate(
    pair: &PairSeries,
    cfg_t: &TruncationConfig,
    cfg_d: &DeflationConfig,
) -> Result<DeflatedPair> {
    let (mask, deflators, k, l) = prepare(pair, cfg_t, cfg_d)?;
    let dx = truncated_drift(pair.x(), &mask.keep);
    let dy = truncated_drift(pair.y(), &mask.keep);
    let tx_def = deflate_series(pair.x(), &mask.keep, &deflators, Some(dx));
    let ty_def = deflate_series(pair.y(), &mask.keep, &deflators, Some(dy));
    Ok(DeflatedPair {
        tx_def,
        ty_def,
        deflators,
        mask,
        k,
        l,
        detrended: true,
        horizon: pair.grid().horizon(),
        delta: pair.grid().delta(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::{pair_align, SamplingGrid, Session};
    use proptest::prelude::*;

    fn path_from_increments(horizon: f64, start: f64, incs: &[f64]) -> SampledPath {
        let grid = SamplingGrid::new(horizon, incs.len(), Session::default()).unwrap();
        SampledPath::new(grid, accumulate(start, incs.iter().copied())).unwrap()
    }

    fn pair(horizon: f64, x0: f64, dx: &[f64], y0: f64, dy: &[f64]) -> PairSeries {
        pair_align(
            path_from_increments(horizon, x0, dx),
            path_from_increments(horizon, y0, dy),
        )
        .unwrap()
    }

    fn wiggle(n: usize, seed: u64) -> Vec<f64> {
        // deterministic pseudo-random increments, never zero
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = ((s >> 11) as f64) / ((1u64 << 53) as f64);
                (u - 0.5) * 0.02 + 1e-4
            })
            .collect()
    }

    #[test]
    fn sigma_mle_closed_form() {
        let h = 0.01;
        let p = path_from_increments(10.0, 0.0, &vec![h; 200]);
        let s = estimate_sigma_mle(&p).unwrap();
        assert!((s - (200.0 * h * h / 10.0).sqrt()).abs() < 1e-15);

        let zero = path_from_increments(10.0, 1.0, &[0.0; 50]);
        assert!(matches!(estimate_sigma_mle(&zero), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn auto_thresholds_follow_each_series() {
        let dx = wiggle(1000, 4);
        let dy: Vec<f64> = wiggle(1000, 5).iter().map(|d| 3.0 * d).collect();
        let p = pair(100.0, 0.0, &dx, 0.0, &dy);
        let (tx, ty) = TruncationConfig::default().thresholds(&p).unwrap();
        let sx = estimate_sigma_mle(p.x()).unwrap();
        let sy = estimate_sigma_mle(p.y()).unwrap();
        assert!((ty / tx - sy / sx).abs() < 1e-12);
        let fixed = TruncationConfig {
            sigma_scale: SigmaScale::Fixed(0.5),
            ..TruncationConfig::default()
        };
        let (a, b) = fixed.thresholds(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(TruncationConfig::disabled().thresholds(&p).unwrap(), (f64::INFINITY, f64::INFINITY));
    }

    #[test]
    fn loose_threshold_keeps_everything() {
        let dx = wiggle(100, 1);
        let dy = wiggle(100, 2);
        let p = pair(10.0, 0.0, &dx, 0.0, &dy);
        let mask = mask_with_threshold(&p, 1.0);
        assert!(mask.keep().iter().all(|k| *k));
    }

    #[test]
    fn single_y_jump_masks_one_increment() {
        let dx = wiggle(100, 3);
        let mut dy = wiggle(100, 4);
        dy[41] = 5.0;
        let p = pair(10.0, 0.0, &dx, 0.0, &dy);
        let mask = mask_with_threshold(&p, 0.5);
        for (j, k) in mask.keep().iter().enumerate() {
            assert_eq!(*k, j != 41);
        }
    }

    #[test]
    fn constant_increments_give_closed_form_deflators() {
        // T = 100 days, n = 1000: k = floor(10/0.1) = 100, l = floor(100^0.01/0.1) = 10
        let h = 0.03;
        let x = path_from_increments(100.0, 0.0, &vec![h; 1000]);
        let cfg = DeflationConfig::default();
        assert_eq!(cfg.windows(100.0, 0.1), (100, 10));
        let c = compute_deflators(&x, 1.0, &cfg).unwrap();
        let expected = 100f64.powf(-0.5) * (100 - 10) as f64 * h * h;
        for i in 1..=1000 {
            let ci = c[i - 1];
            if i <= 200 {
                assert!(ci.is_infinite(), "i = {i}");
            } else {
                assert!((ci - expected).abs() < 1e-14, "i = {i}: {ci}");
            }
        }
    }

    #[test]
    fn window_error_when_k_too_large() {
        // T = 1, n = 10: k = 10 >= n / 2
        let x = path_from_increments(1.0, 0.0, &vec![0.01; 10]);
        assert!(matches!(
            compute_deflators(&x, 1.0, &DeflationConfig::default()),
            Err(Error::Window(_))
        ));
    }

    #[test]
    fn deflate_with_constant_deflator_rescales() {
        let dx = wiggle(1000, 5);
        let dy = wiggle(1000, 6);
        let p = pair(100.0, 1.0, &dx, 2.0, &dy);
        let d = deflate(&p, &TruncationConfig::disabled(), &DeflationConfig::default()).unwrap();
        assert_eq!(d.tx_def[0], 1.0);
        assert_eq!(d.ty_def[0], 2.0);
        for i in 1..=d.k * 2 {
            assert_eq!(d.tx_def[i], 1.0);
        }
        // one step: dU / sqrt(C)
        let i = 2 * d.k + 5;
        let step = d.tx_def[i] - d.tx_def[i - 1];
        let expected = dx[i - 1] / d.deflators[i - 1].sqrt();
        assert!((step - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn affine_relation_preserved() {
        let dx = wiggle(1000, 7);
        let mut dxj = dx.clone();
        dxj[600] = 3.0; // a jump, masked jointly
        let x = path_from_increments(100.0, 4.6, &dxj);
        let y = x.affine(2.0, 1.0);
        let p = pair_align(x, y).unwrap();
        let cfg_t = TruncationConfig {
            sigma_scale: SigmaScale::Fixed(0.05),
            ..TruncationConfig::default()
        };
        let d = deflate(&p, &cfg_t, &DeflationConfig::default()).unwrap();
        assert!(!d.mask.keep()[600]);
        assert_eq!(d.mask.discarded(), 1);
        for i in 0..=1000 {
            let lhs = d.ty_def[i];
            let rhs = (p.y().values()[0] - 2.0 * p.x().values()[0]) + 2.0 * d.tx_def[i];
            assert!((lhs - rhs).abs() < 1e-12, "i = {i}");
        }
        assert_eq!(d.tx_def[601], d.tx_def[600]);
        assert_eq!(d.ty_def[601], d.ty_def[600]);
    }

    #[test]
    fn linear_trend_detrends_to_constant() {
        let p = pair(100.0, 0.5, &vec![0.002; 1000], -0.5, &vec![0.004; 1000]);
        let d = detrend_deflate(&p, &TruncationConfig::disabled(), &DeflationConfig::default()).unwrap();
        assert!(d.detrended);
        let drift = truncated_drift(p.x(), d.mask.keep());
        assert!(p.x().increments().iter().all(|dx| (dx - drift).abs() < 1e-15));
        assert!(d.tx_def.iter().all(|v| (v - 0.5).abs() < 1e-10));
        assert!(d.ty_def.iter().all(|v| (v + 0.5).abs() < 1e-10));
    }

    #[test]
    fn detrended_differs_by_deterministic_staircase() {
        let dx = wiggle(1000, 8);
        let dy = wiggle(1000, 9);
        let p = pair(100.0, 0.0, &dx, 0.0, &dy);
        let cfg_t = TruncationConfig::disabled();
        let cfg_d = DeflationConfig::default();
        let plain = deflate(&p, &cfg_t, &cfg_d).unwrap();
        let det = detrend_deflate(&p, &cfg_t, &cfg_d).unwrap();
        let drift = truncated_drift(p.x(), plain.mask.keep());
        let mut stair = 0.0;
        for i in 1..=1000 {
            let c = plain.deflators[i - 1];
            if c.is_finite() {
                stair += drift / c.sqrt();
            }
            assert!((plain.tx_def[i] - det.tx_def[i] - stair).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn mask_is_symmetric(seed in 0u64..1000, thr in 0.001f64..0.02) {
            let p = pair(10.0, 0.0, &wiggle(200, seed), 0.0, &wiggle(200, seed + 17));
            let a = mask_with_threshold(&p, thr);
            let b = mask_with_threshold(&p.swapped(), thr);
            prop_assert_eq!(a.keep(), b.keep());
        }

        #[test]
        fn deflators_are_strictly_lagged(seed in 0u64..500, pos in 300usize..999, bump in 0.001f64..0.5) {
            let base = wiggle(1000, seed);
            let x = path_from_increments(100.0, 0.0, &base);
            let cfg = DeflationConfig::default();
            let c0 = compute_deflators(&x, 1.0, &cfg).unwrap();
            let mut bumped = base.clone();
            bumped[pos - 1] += bump;
            let c1 = compute_deflators(&path_from_increments(100.0, 0.0, &bumped), 1.0, &cfg).unwrap();
            let (_, l) = cfg.windows(100.0, 0.1);
            // C_i may only change when increment `pos` lies in its window, i.e. pos <= i - l - 1
            for i in 1..=1000usize {
                if pos + l + 1 > i {
                    prop_assert_eq!(c0[i - 1].to_bits(), c1[i - 1].to_bits(), "i = {}", i);
                }
            }
        }

        #[test]
        fn sentinel_zeroes_increments(seed in 0u64..500) {
            let p = pair(100.0, 0.3, &wiggle(1000, seed), 0.7, &wiggle(1000, seed + 1));
            let d = deflate(&p, &TruncationConfig::default(), &DeflationConfig::default()).unwrap();
            for i in 1..=1000usize {
                if i <= 2 * d.k {
                    prop_assert!(d.deflators[i - 1].is_infinite());
                }
                if d.deflators[i - 1].is_infinite() {
                    prop_assert_eq!(d.tx_def[i], d.tx_def[i - 1]);
                    prop_assert_eq!(d.ty_def[i], d.ty_def[i - 1]);
                }
            }
        }

        #[test]
        fn detrended_increments_telescope(seed in 0u64..500) {
            let p = pair(100.0, 0.0, &wiggle(1000, seed), 0.0, &wiggle(1000, seed + 3));
            let mask = truncation_mask(&p, &TruncationConfig::default()).unwrap();
            for path in [p.x(), p.y()] {
                let drift = truncated_drift(path, mask.keep());
                let total: f64 = path
                    .increments()
                    .iter()
                    .zip(mask.keep())
                    .map(|(d, &k)| if k { *d } else { 0.0 } - drift)
                    .sum();
                prop_assert!(total.abs() < 1e-12);
            }
        }

        #[test]
        fn auto_mask_ignores_series_scale(seed in 0u64..300, lambda in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0]) {
            let dx = wiggle(1000, seed);
            let mut dy = wiggle(1000, seed + 9);
            dy[100] = 0.3;
            let p = pair(100.0, 0.0, &dx, 0.0, &dy);
            let scaled: Vec<f64> = dy.iter().map(|d| lambda * d).collect();
            let q = pair(100.0, 0.0, &dx, 0.0, &scaled);
            let cfg = TruncationConfig::default();
            let a = truncation_mask(&p, &cfg).unwrap();
            let b = truncation_mask(&q, &cfg).unwrap();
            prop_assert!(!a.keep()[100]);
            prop_assert_eq!(a.keep(), b.keep());
        }

        #[test]
        fn deflation_is_scale_equivariant(seed in 0u64..300, lambda in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
            let dx = wiggle(1000, seed);
            let dy = wiggle(1000, seed + 5);
            let p = pair(100.0, 0.0, &dx, 0.0, &dy);
            let scaled_x: Vec<f64> = dx.iter().map(|d| lambda * d).collect();
            let q = pair(100.0, 0.0, &scaled_x, 0.0, &dy);
            let cfg_t = TruncationConfig::disabled();
            let cfg_d = DeflationConfig::default();
            let a = deflate(&p, &cfg_t, &cfg_d).unwrap();
            let b = deflate(&q, &cfg_t, &cfg_d).unwrap();
            for (ca, cb) in a.deflators.iter().zip(&b.deflators) {
                if ca.is_finite() {
                    prop_assert!((cb / ca - lambda * lambda).abs() < 1e-9);
                } else {
                    prop_assert!(cb.is_infinite());
                }
            }
            for (ia, ib) in a.tx_increments().iter().zip(b.tx_increments()) {
                prop_assert!((ib - lambda.signum() * ia).abs() < 1e-9 * ia.abs().max(1e-12));
            }
        }
    }
}
