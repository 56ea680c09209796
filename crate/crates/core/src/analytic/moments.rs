use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::special::sech;

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `E[X_t | x0] = x0 + v_d tanh(kappa x0) t`.
pub fn mean_exact(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    check_time(t)?;
    Ok(x0 + params.v_d() * (params.kappa() * x0).tanh() * t)
}

/// `var[X_t | x0] = sigma^2 t + (v_d t / cosh(kappa x0))^2`.
pub fn variance_exact(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    check_time(t)?;
    let drift = params.v_d() * t * sech(params.kappa() * x0);
    Ok(params.sigma2() * t + drift * drift)
}

/// `E[X_t^2 | x0] = x0^2 + (sigma^2 + 2 x0 v_d tanh(kappa x0)) t + v_d^2 t^2`.
pub fn second_moment_exact(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    check_time(t)?;
    let v = params.v_d();
    let th = (params.kappa() * x0).tanh();
    Ok(x0 * x0 + (params.sigma2() + 2.0 * x0 * v * th) * t + v * v * t * t)
}

/// `cov[X_{t+tau}, X_t | x0] = sigma^2 t + (v_d / cosh(kappa x0))^2 t (t + tau)`.
pub fn covariance_exact(x0: f64, t: f64, tau: f64, params: &ProcessParams) -> Result<f64> {
    check_time(t)?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!(
            "tau must be finite and >= 0, got {tau}"
        )));
    }
    let a = params.v_d() * sech(params.kappa() * x0);
    Ok(params.sigma2() * t + a * a * t * (t + tau))
}

/// Mean squared displacement over a lag `tau`: `sigma^2 tau + v_d^2 tau^2`.
/// It has no dependence on the start time or the start position.
pub fn msd_exact(tau: f64, params: &ProcessParams) -> Result<f64> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!(
            "tau must be finite and >= 0, got {tau}"
        )));
    }
    let v = params.v_d();
    Ok(params.sigma2() * tau + v * v * tau * tau)
}

/// `E[X_t tanh(kappa X_t) | x0] = x0 tanh(kappa x0) + v_d t`.
pub fn cross_moment_exact(x0: f64, t: f64, params: &ProcessParams) -> Result<f64> {
    check_time(t)?;
    Ok(x0 * (params.kappa() * x0).tanh() + params.v_d() * t)
}

/// Moments of the rejected construction that replaces the Bernoulli switch
/// by its mean: drift `v_d f(x0)`, variance `sigma^2 t (1 + f(x0)^2) / 2`,
/// with `f = tanh(kappa .)`. Returns `(mean, variance)`.
pub fn naive_superposition_moments(x0: f64, t: f64, params: &ProcessParams) -> Result<(f64, f64)> {
    check_time(t)?;
    let f = (params.kappa() * x0).tanh();
    let mean = x0 + params.v_d() * f * t;
    let var = params.sigma2() * t * 0.5 * (1.0 + f * f);
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(v: f64, s: f64) -> ProcessParams {
        ProcessParams::new(v, s).unwrap()
    }

    #[test]
    fn mean_values() {
        let p = pp(1.0, 1.0);
        for &t in &[0.0, 1.0, 7.5] {
            assert_eq!(mean_exact(0.0, t, &p).unwrap(), 0.0);
        }
        assert!((mean_exact(50.0, 2.0, &p).unwrap() - 52.0).abs() < 1e-12);
        let m = mean_exact(0.5, 3.0, &p).unwrap();
        assert!((m - (0.5 + 3.0 * 0.5f64.tanh())).abs() < 1e-15);
        assert!((m - 1.886_351).abs() < 1e-6);
        assert!(mean_exact(0.0, -1.0, &p).is_err());
    }

    #[test]
    fn variance_values() {
        let p = pp(2.0, 1.5);
        let v0 = variance_exact(0.0, 1.3, &p).unwrap();
        assert!((v0 - (2.25 * 1.3 + 4.0 * 1.69)).abs() < 1e-13);
        let far = variance_exact(50.0 / p.kappa(), 1.3, &p).unwrap();
        assert!(((far - 2.25 * 1.3) / (2.25 * 1.3)).abs() < 1e-12);
    }

    #[test]
    fn variance_equals_bernoulli_form() {
        for &v in &[0.0, 0.5, 1.0, 3.0] {
            for &s in &[0.5, 1.0, 2.0] {
                let p = pp(v, s);
                for &x0 in &[-2.0, 0.0, 0.7, 5.0] {
                    for &t in &[0.1, 1.0, 10.0] {
                        let th = (p.kappa() * x0).tanh();
                        let alt = s * s * t + (1.0 - th * th) * v * v * t * t;
                        let got = variance_exact(x0, t, &p).unwrap();
                        assert!(((got - alt) / got).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn covariance_values() {
        let p = pp(1.0, 1.0);
        assert_eq!(covariance_exact(0.0, 1.0, 1.0, &p).unwrap(), 3.0);
        assert_eq!(covariance_exact(0.4, 0.0, 2.0, &p).unwrap(), 0.0);
        let c = covariance_exact(0.4, 1.7, 0.0, &p).unwrap();
        assert!((c - variance_exact(0.4, 1.7, &p).unwrap()).abs() < 1e-15);
        assert!(covariance_exact(0.0, 1.0, -0.1, &p).is_err());
    }

    #[test]
    fn msd_values() {
        assert_eq!(msd_exact(0.0, &pp(3.0, 2.0)).unwrap(), 0.0);
        assert_eq!(msd_exact(2.0, &pp(0.0, 1.5)).unwrap(), 2.25 * 2.0);
        assert_eq!(msd_exact(0.5, &pp(2.0, 1.0)).unwrap(), 1.5);
    }

    #[test]
    fn msd_is_consistent_with_moments() {
        // E[(X_{t+tau} - X_t)^2] = E[X_{t+tau}^2] - 2 E[X_t X_{t+tau}] + E[X_t^2]
        // with E[X_t X_{t+tau}] = E[X_t^2] + v_d tau E[X_t tanh(kappa X_t)].
        let p = pp(1.3, 0.7);
        for &x0 in &[-1.0, 0.0, 0.4, 3.0] {
            for &t in &[0.0, 0.5, 2.0] {
                let tau = 0.8;
                let m2_late = second_moment_exact(x0, t + tau, &p).unwrap();
                let m2 = second_moment_exact(x0, t, &p).unwrap();
                let cross = m2 + p.v_d() * tau * cross_moment_exact(x0, t, &p).unwrap();
                let msd = m2_late - 2.0 * cross + m2;
                assert!((msd - msd_exact(tau, &p).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_moment_values() {
        let p = pp(1.0, 1.0);
        assert_eq!(cross_moment_exact(0.0, 2.5, &p).unwrap(), 2.5);
        assert_eq!(
            cross_moment_exact(0.8, 0.0, &p).unwrap(),
            0.8 * 0.8f64.tanh()
        );
        assert!((cross_moment_exact(1.0, 2.0, &p).unwrap() - 2.761_59).abs() < 1e-5);
    }

    #[test]
    fn naive_superposition_has_wrong_variance() {
        let p = pp(1.0, 1.0);
        let (m, v) = naive_superposition_moments(0.0, 1.0, &p).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(v, 0.5);
        assert_eq!(variance_exact(0.0, 1.0, &p).unwrap(), 2.0);
        let (m, v) = naive_superposition_moments(40.0, 2.0, &p).unwrap();
        assert_eq!(m, mean_exact(40.0, 2.0, &p).unwrap());
        assert!((v - variance_exact(40.0, 2.0, &p).unwrap()).abs() < 1e-12);
    }
}
