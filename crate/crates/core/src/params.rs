//! Process parameters and the physical parametrisation.
//!
//! Units are abstract: positions in `length`, times in `time`. The drift
//! speed has units length/time, the noise amplitude length/time^(1/2) and
//! `kappa` is an inverse length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drift speed and noise amplitude of the merged process.
///
/// `kappa` is never stored; it is recomputed from `v_d / sigma^2` so the
/// triple cannot become inconsistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    v_d: f64,
    sigma: f64,
}

impl ProcessParams {
    pub fn new(v_d: f64, sigma: f64) -> Result<Self> {
        if !v_d.is_finite() || v_d < 0.0 {
            return Err(Error::domain(format!(
                "v_d must be finite and non-negative, got {v_d}"
            )));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::domain(format!(
                "sigma must be finite and positive, got {sigma}"
            )));
        }
        Ok(Self { v_d, sigma })
    }

    /// Builds the parameters from `kappa` and `sigma` (`v_d = kappa sigma^2`).
    pub fn from_kappa(kappa: f64, sigma: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::domain(format!(
                "kappa must be finite and non-negative, got {kappa}"
            )));
        }
        Self::new(kappa * sigma * sigma, sigma)
    }

    #[inline]
    pub fn v_d(&self) -> f64 {
        self.v_d
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    #[inline]
    pub fn kappa(&self) -> f64 {
        self.v_d / (self.sigma * self.sigma)
    }
}

/// Charged particles in a field that flips sign at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub q: f64,
    pub e_field: f64,
    pub mu_q: f64,
    pub kbt: f64,
}

impl PhysicalParams {
    /// `kappa = qE / (2 kBT)`, independent of the mobility.
    pub fn kappa(&self) -> f64 {
        self.q * self.e_field / (2.0 * self.kbt)
    }

    fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("q", self.q),
            ("E", self.e_field),
            ("mu_q", self.mu_q),
            ("kBT", self.kbt),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::domain(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Terminal drift `v_d = mu_q E` and Einstein-Smoluchowski noise
/// `sigma^2 = 2 mu_q kBT / q`.
pub fn params_from_physical(phys: &PhysicalParams) -> Result<ProcessParams> {
    phys.validate()?;
    let v_d = phys.mu_q * phys.e_field;
    let sigma = (2.0 * phys.mu_q * phys.kbt / phys.q).sqrt();
    ProcessParams::new(v_d, sigma)
}
