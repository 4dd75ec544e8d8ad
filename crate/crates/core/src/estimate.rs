//! OLS on deflated series, residual diagnostics and studentized inference.

use crate::error::{Error, PartialDiagnostics, Result};
use crate::preprocess::DeflatedPair;

/// Fitted line `b = intercept + slope * a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsLine {
    pub slope: f64,
    pub intercept: f64,
    /// Centered sum of squares of the regressor.
    pub sxx: f64,
}

/// Least-squares line of `b` on `a` with intercept. Every element enters the
/// sums; callers pass the `1..=n` slice when index 0 must be excluded.
pub fn ols(a: &[f64], b: &[f64]) -> Result<OlsLine> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "ols: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Argument("ols needs at least two points".into()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut raw = 0.0;
    for (&ai, &bi) in a.iter().zip(b) {
        let da = ai - mean_a;
        sxx += da * da;
        sxy += da * (bi - mean_b);
        raw += ai * ai;
    }
    if !(sxx > 1e-26 * raw) || !sxx.is_finite() {
        return Err(Error::DegenerateRegressor(format!(
            "regressor is numerically constant (centered sum of squares {sxx:e})"
        )));
    }
    let slope = sxy / sxx;
    Ok(OlsLine {
        slope,
        intercept: mean_b - slope * mean_a,
        sxx,
    })
}

/// `(v_eps_hat, rho_hat, r_inf_hat)` plus a flag for clamping of `r_inf_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub v_eps_hat: f64,
    pub rho_hat: f64,
    pub r_inf_hat: f64,
    pub r_inf_clamped: bool,
}

/// Plug-in functionals of the deflated regressor and the resulting bias,
/// variance and confidence-interval estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Studentized {
    pub mean_bar: f64,
    pub i_f: f64,
    pub j_f: f64,
    pub k_f: f64,
    pub bias_alpha: f64,
    pub bias_c: f64,
    pub var_alpha: f64,
    pub var_c: f64,
    pub confidence: f64,
    pub ci_alpha: (f64, f64),
    pub ci_c: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CointFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    /// `eps_0..=eps_n`.
    pub residuals: Vec<f64>,
    pub n: usize,
    pub horizon: f64,
    pub delta: f64,
    pub diagnostics: Option<Diagnostics>,
    pub studentized: Option<Studentized>,
}

/// Regresses `ty_def` on `tx_def` over indices `1..=n`; residuals cover `0..=n`.
pub fn fit_cointegration(dp: &DeflatedPair) -> Result<CointFit> {
    let line = ols(&dp.tx_def[1..], &dp.ty_def[1..])?;
    let residuals = dp
        .tx_def
        .iter()
        .zip(&dp.ty_def)
        .map(|(x, y)| y - line.intercept - line.slope * x)
        .collect();
    Ok(CointFit {
        alpha_hat: line.slope,
        c_hat: line.intercept,
        residuals,
        n: dp.n(),
        horizon: dp.horizon,
        delta: dp.delta,
        diagnostics: None,
        studentized: None,
    })
}

/// `sum_{i>=2} d(eps_i) eps_{i-2} / sum_{i>=1} d(eps_i) eps_{i-1}`, or `None`
/// when the denominator vanishes.
pub fn rho_hat(eps: &[f64]) -> Option<f64> {
    let n = eps.len().checked_sub(1)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 1..=n {
        let d = eps[i] - eps[i - 1];
        den += d * eps[i - 1];
        if i >= 2 {
            num += d * eps[i - 2];
        }
    }
    if den == 0.0 || !den.is_finite() {
        None
    } else {
        Some(num / den)
    }
}

/// First-order autocorrelation `sum eps_i eps_{i-1} / sum eps_i^2` over `i = 1..=n`.
pub fn rho_tilde(eps: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 1..eps.len() {
        num += eps[i] * eps[i - 1];
        den += eps[i] * eps[i];
    }
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

/// Residual variance rate, `rho_hat` and the correlation `r_inf_hat` between
/// deflated `X` returns and the AR(1) innovations of the residuals.
pub fn residual_diagnostics(fit: &CointFit, dp: &DeflatedPair) -> Result<Diagnostics> {
    let eps = &fit.residuals;
    let n = fit.n;
    if n < 3 || eps.len() != n + 1 || dp.tx_def.len() != n + 1 {
        return Err(Error::Argument(format!(
            "diagnostics need n >= 3 and matching lengths (n = {n})"
        )));
    }
    let v_eps_hat = eps[1..].iter().map(|e| e * e).sum::<f64>() / fit.horizon;
    let rho = rho_hat(eps).ok_or_else(|| Error::DiagnosticsDegenerate {
        message: "sum of d(eps_i) eps_(i-1) is zero".into(),
        partial: PartialDiagnostics {
            v_eps_hat,
            rho_hat: None,
        },
    })?;

    let mut cross = 0.0;
    let mut innov_sq = 0.0;
    let mut dx_sq = 0.0;
    for i in 2..=n {
        let u = eps[i] - rho * eps[i - 1];
        let dx = dp.tx_def[i] - dp.tx_def[i - 1];
        cross += dx * u;
        innov_sq += u * u;
        dx_sq += dx * dx;
    }
    if !(innov_sq > 0.0 && dx_sq > 0.0) {
        return Err(Error::DiagnosticsDegenerate {
            message: "zero innovation or zero deflated X variation".into(),
            partial: PartialDiagnostics {
                v_eps_hat,
                rho_hat: Some(rho),
            },
        });
    }
    let raw = cross / (innov_sq.sqrt() * dx_sq.sqrt());
    let clamped = raw.abs() > 1.0;
    if clamped {
        log::warn!("r_inf_hat = {raw} clamped to [-1, 1]");
    }
    Ok(Diagnostics {
        v_eps_hat,
        rho_hat: rho,
        r_inf_hat: raw.clamp(-1.0, 1.0),
        r_inf_clamped: clamped,
    })
}

/// Functionals of the deflated regressor. The stochastic-integral term uses the
/// path started at zero; the level enters through `mean_bar` only.
pub fn regressor_functionals(tx_def: &[f64], horizon: f64) -> (f64, f64, f64, f64) {
    let n = tx_def.len() - 1;
    let nf = n as f64;
    let sqrt_t = horizon.sqrt();
    let x0 = tx_def[0];
    let mean_bar = tx_def[1..].iter().sum::<f64>() / (nf * sqrt_t);
    let mean_bar0 = mean_bar - x0 / sqrt_t;
    let xn0 = tx_def[n] - x0;
    let i_f = (xn0 * xn0 - horizon) / (2.0 * horizon) - mean_bar0 * xn0 / sqrt_t;
    let j_f = tx_def[1..]
        .iter()
        .map(|x| {
            let d = x / sqrt_t - mean_bar;
            d * d
        })
        .sum::<f64>()
        / nf;
    (mean_bar, i_f, j_f, j_f + mean_bar * mean_bar)
}

/// Bias, variance and `confidence`-level two-sided intervals for `alpha` and `c`.
pub fn studentize(fit: &CointFit, dp: &DeflatedPair, confidence: f64) -> Result<CointFit> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Argument(format!("confidence {confidence} not in (0, 1)")));
    }
    let diag = match fit.diagnostics {
        Some(d) => d,
        None => residual_diagnostics(fit, dp)?,
    };
    let t = fit.horizon;
    let nf = fit.n as f64;
    let (mean_bar, i_f, j_f, k_f) = regressor_functionals(&dp.tx_def, t);
    if !(j_f > 0.0) {
        return Err(Error::DegenerateRegressor("J functional is zero".into()));
    }
    let sv = diag.v_eps_hat.sqrt();
    let r = diag.r_inf_hat;
    let ratio = (1.0 + i_f) / j_f;
    let xn0 = (dp.tx_def[fit.n] - dp.tx_def[0]) / t.sqrt();
    let bias_alpha = sv * r * ratio / nf;
    let bias_c = t.sqrt() * sv * r * (xn0 - ratio * mean_bar) / nf;
    let var_alpha = diag.v_eps_hat * (1.0 - r * r) / j_f;
    let var_c = diag.v_eps_hat * (1.0 - r * r) * k_f / j_f;
    let z = normal_quantile(0.5 + confidence / 2.0);
    let half_alpha = z * var_alpha.sqrt() / nf;
    let half_c = z * (t * var_c).sqrt() / nf;
    let ca = fit.alpha_hat - bias_alpha;
    let cc = fit.c_hat - bias_c;
    let mut out = fit.clone();
    out.diagnostics = Some(diag);
    out.studentized = Some(Studentized {
        mean_bar,
        i_f,
        j_f,
        k_f,
        bias_alpha,
        bias_c,
        var_alpha,
        var_c,
        confidence,
        ci_alpha: (ca - half_alpha, ca + half_alpha),
        ci_c: (cc - half_c, cc + half_c),
    });
    Ok(out)
}

/// Fit, diagnostics and studentization in one call.
pub fn estimate(dp: &DeflatedPair, confidence: f64) -> Result<CointFit> {
    let mut fit = fit_cointegration(dp)?;
    fit.diagnostics = Some(residual_diagnostics(&fit, dp)?);
    studentize(&fit, dp, confidence)
}

/// Inverse standard normal CDF (Wichura, AS241, double precision).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{deflate, DeflationConfig, SigmaScale, TruncationConfig};
    use crate::timegrid::{pair_align, SampledPath, SamplingGrid, Session};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ols_exact_line() {
        let a: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 1.0).collect();
        let l = ols(&a, &b).unwrap();
        assert!(close(l.slope, 2.0, 1e-14));
        assert!(close(l.intercept, 1.0, 1e-14));
    }

    #[test]
    fn ols_hand_arithmetic() {
        let l = ols(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!(close(l.slope, 1.5, 1e-15));
        assert!(close(l.intercept, -2.0 / 3.0, 1e-15));
    }

    #[test]
    fn ols_constant_regressor() {
        assert!(matches!(
            ols(&[4.6; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(Error::DegenerateRegressor(_))
        ));
    }

    #[test]
    fn rho_hat_on_geometric_residuals() {
        for &rho in &[0.3, 0.8, 0.95, -0.5] {
            let n = 40;
            let eps: Vec<f64> = (0..=n).map(|i| 1.7 * f64::powi(rho, i)).collect();
            let expected = rho * (1.0 - rho.powi(2 * (n - 1))) / (1.0 - rho.powi(2 * n));
            let got = rho_hat(&eps).unwrap();
            assert!((got - expected).abs() < 1e-10, "rho = {rho}: {got} vs {expected}");
        }
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!((normal_quantile(0.995) - 2.575_829_303_548_900_4).abs() < 1e-12);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
        assert!((normal_quantile(0.025) + normal_quantile(0.975)).abs() < 1e-15);
    }

    fn grid_path(horizon: f64, values: Vec<f64>) -> SampledPath {
        let n = values.len() - 1;
        SampledPath::new(SamplingGrid::new(horizon, n, Session::default()).unwrap(), values).unwrap()
    }

    fn noisy(n: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        let mut level = 4.6;
        let mut out = vec![level];
        for _ in 0..n {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            let u = (s >> 11) as f64 / (1u64 << 53) as f64;
            level += (u - 0.5) * scale;
            out.push(level);
        }
        out
    }

    #[test]
    fn affine_pair_fits_exactly() {
        let xv = noisy(1000, 3, 0.05);
        let mut xj = xv.clone();
        for v in xj.iter_mut().skip(400) {
            *v += 0.8;
        }
        let x = grid_path(100.0, xj);
        let y = x.affine(2.0, 1.0);
        let pair = pair_align(x, y).unwrap();
        let dp = deflate(
            &pair,
            &TruncationConfig {
                sigma_scale: SigmaScale::Fixed(0.2),
                ..Default::default()
            },
            &DeflationConfig::default(),
        )
        .unwrap();
        let fit = fit_cointegration(&dp).unwrap();
        assert!((fit.alpha_hat - 2.0).abs() < 1e-12);
        assert!((fit.c_hat - 1.0).abs() < 1e-10);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
    }

    #[test]
    fn zero_correlation_removes_bias() {
        let x = grid_path(100.0, noisy(1000, 5, 0.05));
        let y = grid_path(100.0, noisy(1000, 6, 0.05));
        let dp = deflate(
            &pair_align(x, y).unwrap(),
            &TruncationConfig::disabled(),
            &DeflationConfig::default(),
        )
        .unwrap();
        let mut fit = fit_cointegration(&dp).unwrap();
        let mut d = residual_diagnostics(&fit, &dp).unwrap();
        d.r_inf_hat = 0.0;
        fit.diagnostics = Some(d);
        let s = studentize(&fit, &dp, 0.95).unwrap().studentized.unwrap();
        assert_eq!(s.bias_alpha, 0.0);
        assert_eq!(s.bias_c, 0.0);
        assert_eq!(s.k_f - s.j_f, s.mean_bar * s.mean_bar);
        assert!(s.var_alpha >= 0.0 && s.var_c >= 0.0);
        assert!(s.ci_alpha.0 < fit.alpha_hat && fit.alpha_hat < s.ci_alpha.1);
    }

    #[test]
    fn functionals_by_hand() {
        // T = 4, n = 4, x = (0, 1, -1, 2, 0)
        let (m, i, j, k) = regressor_functionals(&[0.0, 1.0, -1.0, 2.0, 0.0], 4.0);
        assert!((m - 0.25).abs() < 1e-15);
        assert!((i - (-0.5)).abs() < 1e-15);
        let expected_j = [0.5, -0.5, 1.0, 0.0]
            .iter()
            .map(|x: &f64| (x - 0.25).powi(2))
            .sum::<f64>()
            / 4.0;
        assert!((j - expected_j).abs() < 1e-15);
        assert_eq!(k, j + m * m);
    }

    proptest! {
        #[test]
        fn residuals_are_orthogonal(seed in 0u64..400) {
            let x = grid_path(100.0, noisy(1000, seed, 0.05));
            let y = grid_path(100.0, noisy(1000, seed + 1000, 0.05));
            let dp = deflate(&pair_align(x, y).unwrap(), &TruncationConfig::disabled(), &DeflationConfig::default()).unwrap();
            let fit = fit_cointegration(&dp).unwrap();
            let eps = &fit.residuals[1..];
            let scale: f64 = eps.iter().map(|e| e.abs()).sum::<f64>();
            let s0: f64 = eps.iter().sum();
            let s1: f64 = eps.iter().zip(&dp.tx_def[1..]).map(|(e, x)| e * x).sum();
            let sx: f64 = dp.tx_def[1..].iter().map(|x| x.abs()).sum();
            prop_assert!(s0.abs() <= 1e-8 * scale);
            prop_assert!(s1.abs() <= 1e-8 * scale * sx / 1000.0 + 1e-8 * scale);
            for i in 0..=1000 {
                let e = dp.ty_def[i] - fit.c_hat - fit.alpha_hat * dp.tx_def[i];
                prop_assert!((e - fit.residuals[i]).abs() <= 1e-10 * (1.0 + e.abs()));
            }
        }

        #[test]
        fn rho_hat_scale_invariant(seed in 0u64..400, lambda in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0]) {
            let eps = noisy(300, seed, 1.0);
            let scaled: Vec<f64> = eps.iter().map(|e| lambda * e).collect();
            let a = rho_hat(&eps).unwrap();
            let b = rho_hat(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn v_eps_scales_quadratically(seed in 0u64..200, lambda in 0.1f64..5.0) {
            let x = grid_path(100.0, noisy(1000, seed, 0.05));
            let y = grid_path(100.0, noisy(1000, seed + 7, 0.05));
            let pair = pair_align(x.clone(), y.clone()).unwrap();
            let pair_scaled = pair_align(x, y.affine(lambda, 0.0)).unwrap();
            let cfg_t = TruncationConfig::disabled();
            let cfg_d = DeflationConfig::default();
            let a = estimate(&deflate(&pair, &cfg_t, &cfg_d).unwrap(), 0.95).unwrap();
            let b = estimate(&deflate(&pair_scaled, &cfg_t, &cfg_d).unwrap(), 0.95).unwrap();
            let (da, db) = (a.diagnostics.unwrap(), b.diagnostics.unwrap());
            prop_assert!((db.v_eps_hat / da.v_eps_hat - lambda * lambda).abs() < 1e-8);
            prop_assert!((db.rho_hat - da.rho_hat).abs() < 1e-9);
        }
    }
}
