//! Quadrature over the transition law.

use super::density::{transition_pdf, TransitionQuery};
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::quad::{integrate_pieces, QuadConfig, Quadrature};
use crate::special::logistic;

/// Half-width of each component window in standard deviations.
const WINDOW_SDS: f64 = 12.0;

/// Integration windows covering the law of `X_t` from `x0`: twelve standard
/// deviations around each component mean, merged when they overlap. Each
/// window is returned as breakpoints (interval ends plus component means).
pub fn law_intervals(x0: f64, t: f64, params: &ProcessParams) -> Vec<Vec<f64>> {
    let s = params.sigma() * t.sqrt();
    let lo_mean = x0 - params.v_d() * t;
    let hi_mean = x0 + params.v_d() * t;
    let half = WINDOW_SDS * s;
    if hi_mean - lo_mean > 2.0 * half {
        vec![
            vec![lo_mean - half, lo_mean, lo_mean + half],
            vec![hi_mean - half, hi_mean, hi_mean + half],
        ]
    } else {
        let mut b = vec![lo_mean - half, lo_mean, hi_mean, hi_mean + half];
        b.dedup();
        vec![b]
    }
}

/// `E[phi(X_t) | x0]` by adaptive quadrature of `phi * p`.
pub fn law_expectation<F: Fn(f64) -> f64>(
    phi: F,
    x0: f64,
    t: f64,
    params: &ProcessParams,
    cfg: QuadConfig,
) -> Result<Quadrature> {
    TransitionQuery::new(x0, x0, t)?;
    let integrand = |x: f64| {
        let p = transition_pdf(&TransitionQuery { x0, x, t }, params).unwrap_or(0.0);
        if p == 0.0 {
            0.0
        } else {
            phi(x) * p
        }
    };
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
        intervals: 0,
    };
    for breaks in law_intervals(x0, t, params) {
        let q = integrate_pieces(integrand, &breaks, cfg)?;
        total.value += q.value;
        total.error += q.error;
        total.intervals += q.intervals;
    }
    Ok(total)
}

/// `int p(x, t; x0) dx`.
pub fn normalization(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    law_expectation(|_| 1.0, x0, t, params, QuadConfig::default()).map(|q| q.value)
}

/// `int tanh(kappa x) p(x, t; x0) dx`, which equals `tanh(kappa x0)`.
pub fn martingale_closure(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    let kappa = params.kappa();
    law_expectation(|x| (kappa * x).tanh(), x0, t, params, QuadConfig::default()).map(|q| q.value)
}

/// `Var[tanh(kappa X_t)]`, integrating `(tanh(kappa x) - tanh(kappa x0))^2`
/// with the difference formed without cancellation near `|tanh| = 1`.
pub fn martingale_variance(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    let kappa = params.kappa();
    let b = kappa * x0;
    let cfg = QuadConfig {
        abs_tol: 1e-300,
        ..QuadConfig::default()
    };
    let q = law_expectation(
        |x| tanh_difference(kappa * x, b).powi(2),
        x0,
        t,
        params,
        cfg,
    )?;
    Ok(q.value)
}

/// `tanh(a) - tanh(b)`; for same-sign arguments beyond one it uses
/// `1 - tanh|u| = 2 logistic(-2|u|)`.
fn tanh_difference(a: f64, b: f64) -> f64 {
    if a * b > 0.0 && a.abs() > 1.0 && b.abs() > 1.0 {
        let tail = |u: f64| 2.0 * logistic(-2.0 * u.abs());
        a.signum() * (tail(b) - tail(a))
    } else {
        a.tanh() - b.tanh()
    }
}

/// `|p(x,t;x0) - int p(x, t - t_mid; y) p(y, t_mid; x0) dy|`.
///
/// The integral runs over the windows of the intermediate law widened to
/// `12 sigma sqrt(t)` around both drifted means.
pub fn chapman_kolmogorov_residual(
    x: f64,
    t: f64,
    t_mid: f64,
    x0: f64,
    params: &ProcessParams,
) -> Result<f64> {
    if !(t_mid > 0.0 && t_mid < t) {
        return Err(Error::domain(format!(
            "need 0 < t_mid < t, got t_mid={t_mid}, t={t}"
        )));
    }
    let direct = transition_pdf(&TransitionQuery::new(x0, x, t)?, params)?;
    let rest = t - t_mid;
    let integrand = |y: f64| {
        let a = transition_pdf(&TransitionQuery { x0: y, x, t: rest }, params).unwrap_or(0.0);
        let b = transition_pdf(&TransitionQuery { x0, x: y, t: t_mid }, params).unwrap_or(0.0);
        a * b
    };
    let half = 12.0 * params.sigma() * t.sqrt();
    let lo_mean = x0 - params.v_d() * t_mid;
    let hi_mean = x0 + params.v_d() * t_mid;
    let mut breaks = vec![lo_mean - half, lo_mean, x, hi_mean, hi_mean + half];
    breaks.retain(|&b| b >= lo_mean - half && b <= hi_mean + half);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let cfg = QuadConfig {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_intervals: 20_000,
    };
    let q = integrate_pieces(integrand, &breaks, cfg)?;
    Ok((direct - q.value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(v: f64, s: f64) -> ProcessParams {
        ProcessParams::new(v, s).unwrap()
    }

    #[test]
    fn windows_split_when_far_apart() {
        let p = pp(3.0, 0.5);
        assert_eq!(law_intervals(0.0, 10.0, &p).len(), 2);
        assert_eq!(law_intervals(0.0, 0.1, &p).len(), 1);
    }

    #[test]
    fn density_is_normalized() {
        for &(v, s, x0, t) in &[
            (1.0, 1.0, 0.0, 1.0),
            (3.0, 0.5, 5.0, 10.0),
            (0.5, 2.0, -2.0, 0.1),
        ] {
            let n = normalization(x0, t, &pp(v, s)).unwrap();
            assert!((n - 1.0).abs() < 1e-10, "{n}");
        }
    }

    #[test]
    fn martingale_holds_under_quadrature() {
        let p = pp(1.0, 1.0);
        for &x0 in &[-2.0, 0.0, 0.7] {
            let m = martingale_closure(x0, 1.0, &p).unwrap();
            assert!((m - x0.tanh()).abs() < 1e-8);
        }
    }

    #[test]
    fn martingale_variance_values() {
        // 50-digit quadrature references.
        let v = martingale_variance(0.3, 1.0, &pp(1.0, 1.0)).unwrap();
        assert!((v / 0.492_853_266_210_640_4 - 1.0).abs() < 1e-10, "{v}");
        let v = martingale_variance(5.0, 0.1, &pp(3.0, 1.0)).unwrap();
        assert!((v / 1.246_865_291_995_456_9e-24 - 1.0).abs() < 1e-8, "{v}");
        assert_eq!(martingale_variance(1.0, 1.0, &pp(0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn driftless_semigroup() {
        let r = chapman_kolmogorov_residual(0.3, 1.0, 0.4, -0.2, &pp(0.0, 1.0)).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn reference_point_residual() {
        let r = chapman_kolmogorov_residual(1.0, 1.0, 0.5, 0.0, &pp(1.0, 1.0)).unwrap();
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn rejects_bad_intermediate_time() {
        let p = pp(1.0, 1.0);
        assert!(chapman_kolmogorov_residual(0.0, 1.0, 1.0, 0.0, &p).is_err());
        assert!(chapman_kolmogorov_residual(0.0, 1.0, 0.0, 0.0, &p).is_err());
    }
}
