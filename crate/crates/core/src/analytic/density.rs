use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::special::{logcosh, logistic, norm_cdf, norm_interval};

/// Arguments of `p(x, t; x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionQuery {
    pub x0: f64,
    pub x: f64,
    pub t: f64,
}

impl TransitionQuery {
    pub fn new(x0: f64, x: f64, t: f64) -> Result<Self> {
        let q = Self { x0, x, t };
        q.check()?;
        Ok(q)
    }

    fn check(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::domain(format!(
                "transition density needs t > 0, got {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Sign of the drift of a mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentSign {
    Plus,
    Minus,
}

impl ComponentSign {
    pub fn value(self) -> f64 {
        match self {
            ComponentSign::Plus => 1.0,
            ComponentSign::Minus => -1.0,
        }
    }
}

/// Weight of the `+v_d` component, `(1 + tanh(kappa x0)) / 2`, in logistic form.
#[inline]
pub fn mixture_weight(x0: f64, params: &ProcessParams) -> f64 {
    logistic(2.0 * params.kappa() * x0)
}

/// Density of the biased Brownian motion with drift `sign * v_d`.
pub fn gaussian_component_pdf(
    q: &TransitionQuery,
    sign: ComponentSign,
    params: &ProcessParams,
) -> Result<f64> {
    q.check()?;
    let var = params.sigma2() * q.t;
    let mean = q.x0 + sign.value() * params.v_d() * q.t;
    let d = q.x - mean;
    Ok((-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt())
}

pub fn transition_log_pdf(q: &TransitionQuery, params: &ProcessParams) -> Result<f64> {
    q.check()?;
    let kappa = params.kappa();
    let s2t = params.sigma2() * q.t;
    let d = q.x - q.x0;
    Ok(-0.5 * (2.0 * PI * s2t).ln() + logcosh(kappa * q.x)
        - logcosh(kappa * q.x0)
        - 0.5 * d * d / s2t
        - 0.5 * kappa * kappa * s2t)
}

pub fn transition_pdf(q: &TransitionQuery, params: &ProcessParams) -> Result<f64> {
    transition_log_pdf(q, params).map(f64::exp)
}

/// `P(X_t <= x | X_0 = x0)` as the weighted sum of the two normal CDFs.
pub fn transition_cdf(q: &TransitionQuery, params: &ProcessParams) -> Result<f64> {
    q.check()?;
    let w = mixture_weight(q.x0, params);
    let s = params.sigma() * q.t.sqrt();
    let vt = params.v_d() * q.t;
    let plus = norm_cdf((q.x - q.x0 - vt) / s);
    let minus = norm_cdf((q.x - q.x0 + vt) / s);
    Ok(w * plus + (1.0 - w) * minus)
}

/// Mass of the transition law on `[a, b]`, tail-accurate.
pub fn transition_interval_mass(
    x0: f64,
    t: f64,
    a: f64,
    b: f64,
    params: &ProcessParams,
) -> Result<f64> {
    TransitionQuery::new(x0, a, t)?;
    if b < a {
        return Err(Error::domain(format!("interval [{a}, {b}] is reversed")));
    }
    let w = mixture_weight(x0, params);
    let s = params.sigma() * t.sqrt();
    let vt = params.v_d() * t;
    let mass = |m: f64| norm_interval((a - m) / s, (b - m) / s);
    Ok(w * mass(x0 + vt) + (1.0 - w) * mass(x0 - vt))
}

/// Residual of the closed-form density in the forward equation
/// `p_t = -v_d (tanh(kappa x) p)_x + sigma^2/2 p_xx`, using central
/// differences of width `h` in space and `dt` in time.
pub fn fpe_residual(
    x: f64,
    t: f64,
    x0: f64,
    params: &ProcessParams,
    h: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0 && dt < t) || !(h > 0.0) {
        return Err(Error::domain(format!(
            "need 0 < dt < t and h > 0, got dt={dt}, t={t}, h={h}"
        )));
    }
    let p = |x: f64, t: f64| transition_pdf(&TransitionQuery { x0, x, t }, params);
    let kappa = params.kappa();
    let flux = |x: f64| p(x, t).map(|v| (kappa * x).tanh() * v);
    let dp_dt = (p(x, t + dt)? - p(x, t - dt)?) / (2.0 * dt);
    let drift = (flux(x + h)? - flux(x - h)?) / (2.0 * h);
    let diffusion = (p(x + h, t)? - 2.0 * p(x, t)? + p(x - h, t)?) / (h * h);
    Ok(dp_dt + params.v_d() * drift - 0.5 * params.sigma2() * diffusion)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    fn pp(v: f64, s: f64) -> ProcessParams {
        ProcessParams::new(v, s).unwrap()
    }

    #[test]
    fn weight_values() {
        assert_eq!(mixture_weight(0.0, &pp(1.0, 1.0)), 0.5);
        let p = pp(500.0, 1.0);
        assert_eq!(mixture_weight(1.0, &p), 1.0);
        assert_eq!(mixture_weight(-1.0, &p), 0.0);
        let w = mixture_weight(0.5, &pp(1.0, 1.0));
        assert!((w - 0.731_058_578_6).abs() < 1e-10);
        assert!((w - 0.5 * (1.0 + 0.5f64.tanh())).abs() < 1e-15);
    }

    #[test]
    fn component_peaks() {
        let q = TransitionQuery::new(0.3, 0.3, 1.0).unwrap();
        let v = gaussian_component_pdf(&q, ComponentSign::Plus, &pp(0.0, 1.0)).unwrap();
        assert!((v - INV_SQRT_2PI).abs() < 1e-15);
        let q = TransitionQuery::new(0.3, 1.3, 1.0).unwrap();
        let v = gaussian_component_pdf(&q, ComponentSign::Plus, &pp(1.0, 1.0)).unwrap();
        assert!((v - INV_SQRT_2PI).abs() < 1e-15);
        let q = TransitionQuery::new(0.0, -0.75, 0.25).unwrap();
        let v = gaussian_component_pdf(&q, ComponentSign::Minus, &pp(3.0, 2.0)).unwrap();
        assert!((v - INV_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_time() {
        assert!(TransitionQuery::new(0.0, 0.0, 0.0).is_err());
        let q = TransitionQuery {
            x0: 0.0,
            x: 0.0,
            t: -1.0,
        };
        assert!(transition_log_pdf(&q, &pp(1.0, 1.0)).is_err());
        assert!(gaussian_component_pdf(&q, ComponentSign::Plus, &pp(1.0, 1.0)).is_err());
    }

    #[test]
    fn driftless_reduces_to_normal() {
        let p = pp(0.0, 1.3);
        let q = TransitionQuery::new(0.4, -1.1, 2.0).unwrap();
        let var = 1.3f64 * 1.3 * 2.0;
        let expect = -0.5 * (2.0 * PI * var).ln() - 0.5 * 1.5f64.powi(2) / var;
        assert!((transition_log_pdf(&q, &p).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn mixture_and_closed_form_agree() {
        for &v in &[0.0, 0.5, 1.0, 3.0] {
            for &s in &[0.5, 1.0, 2.0] {
                let p = pp(v, s);
                for &x0 in &[-2.0, 0.0, 0.7, 5.0] {
                    for &t in &[0.1f64, 1.0, 10.0] {
                        let w = mixture_weight(x0, &p);
                        let spread = s * t.sqrt();
                        for k in -4..=4 {
                            let x = x0 + p.v_d() * t * (k as f64 / 4.0) + spread * k as f64 * 0.5;
                            let q = TransitionQuery::new(x0, x, t).unwrap();
                            let mix = w * gaussian_component_pdf(&q, ComponentSign::Plus, &p)
                                .unwrap()
                                + mixture_weight(-x0, &p)
                                    * gaussian_component_pdf(&q, ComponentSign::Minus, &p).unwrap();
                            let closed = transition_pdf(&q, &p).unwrap();
                            if mix > 1e-280 {
                                assert!(
                                    ((closed - mix) / mix).abs() < 1e-12,
                                    "v={v} s={s} x0={x0} t={t} x={x}: {closed} vs {mix}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn far_tail_is_finite() {
        let q = TransitionQuery::new(0.0, 1000.0, 1.0).unwrap();
        let v = transition_log_pdf(&q, &pp(1.0, 1.0)).unwrap();
        // 1000 - ln 2 - 500000 - ln(2 pi)/2 - 1/2, evaluated at 30 digits.
        let expected = -499_002.112_085_713_8;
        assert!(v.is_finite());
        assert!((v - expected).abs() < 1e-9, "{v}");
    }

    #[test]
    fn odd_drift_gives_mirror_symmetry() {
        let p = pp(1.7, 0.8);
        for &(x0, x, t) in &[(0.3, 1.2, 0.5), (-2.0, 0.4, 3.0), (5.0, 9.0, 1.0)] {
            let a = transition_log_pdf(&TransitionQuery::new(x0, x, t).unwrap(), &p).unwrap();
            let b = transition_log_pdf(&TransitionQuery::new(-x0, -x, t).unwrap(), &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cdf_and_interval_mass_agree() {
        let p = pp(1.0, 1.0);
        let q1 = TransitionQuery::new(0.5, -0.2, 1.0).unwrap();
        let q2 = TransitionQuery::new(0.5, 1.9, 1.0).unwrap();
        let diff = transition_cdf(&q2, &p).unwrap() - transition_cdf(&q1, &p).unwrap();
        let mass = transition_interval_mass(0.5, 1.0, -0.2, 1.9, &p).unwrap();
        assert!((diff - mass).abs() < 1e-15);
        assert!(transition_interval_mass(0.5, 1.0, 1.0, 0.0, &p).is_err());
    }

    #[test]
    fn forward_equation_residual_is_second_order() {
        let p = pp(1.0, 1.0);
        let r1 = fpe_residual(0.4, 1.0, 0.2, &p, 1e-2, 1e-2).unwrap().abs();
        let r2 = fpe_residual(0.4, 1.0, 0.2, &p, 5e-3, 5e-3).unwrap().abs();
        let ratio = r1 / r2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}, r1 {r1}");
    }
}
