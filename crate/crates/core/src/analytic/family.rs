//! The real, bounded solutions of `f'' + 2 f' f = 0` in the dimensionless
//! variable `u = kappa x`: `f(u) = tanh(u + u_b)` with `b = tanh(u_b)`, and the
//! constant branches `f = +1`, `f = -1` (`b = +1`, `b = -1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::sech;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftBranch {
    Tanh,
    PlusBias,
    MinusBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftFamily {
    branch: DriftBranch,
    b: f64,
}

impl DriftFamily {
    /// Selects the branch from the shift `b`. `|b| > 1` (the unbounded
    /// `coth` branch) is rejected.
    pub fn new(b: f64) -> Result<Self> {
        if !b.is_finite() || b.abs() > 1.0 {
            return Err(Error::domain(format!(
                "drift family shift must satisfy |b| <= 1, got {b}"
            )));
        }
        let branch = if b == 1.0 {
            DriftBranch::PlusBias
        } else if b == -1.0 {
            DriftBranch::MinusBias
        } else {
            DriftBranch::Tanh
        };
        Ok(Self { branch, b })
    }

    /// The canonical member `tanh(u)`.
    pub fn canonical() -> Self {
        Self {
            branch: DriftBranch::Tanh,
            b: 0.0,
        }
    }

    pub fn plus_bias() -> Self {
        Self {
            branch: DriftBranch::PlusBias,
            b: 1.0,
        }
    }

    pub fn minus_bias() -> Self {
        Self {
            branch: DriftBranch::MinusBias,
            b: -1.0,
        }
    }

    pub fn branch(&self) -> DriftBranch {
        self.branch
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `u_b = atanh(b)`; infinite on the pure-bias branches.
    pub fn shift(&self) -> f64 {
        self.b.atanh()
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.branch {
            DriftBranch::Tanh => (u + self.shift()).tanh(),
            DriftBranch::PlusBias => 1.0,
            DriftBranch::MinusBias => -1.0,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self.branch {
            DriftBranch::Tanh => {
                let s = sech(u + self.shift());
                s * s
            }
            _ => 0.0,
        }
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        match self.branch {
            DriftBranch::Tanh => {
                let z = u + self.shift();
                let s = sech(z);
                -2.0 * s * s * z.tanh()
            }
            _ => 0.0,
        }
    }

    /// `g = f' + f^2`.
    pub fn g(&self, u: f64) -> f64 {
        let f = self.eval(u);
        self.derivative(u) + f * f
    }

    /// `g' = f'' + 2 f f'`.
    pub fn g_prime(&self, u: f64) -> f64 {
        self.second_derivative(u) + 2.0 * self.eval(u) * self.derivative(u)
    }
}

pub fn drift_family_eval(fam: &DriftFamily, u: f64) -> f64 {
    fam.eval(u)
}

/// `f''(u) + 2 f'(u) f(u)` from the exact derivatives.
pub fn ode_residual(fam: &DriftFamily, u: f64) -> f64 {
    fam.second_derivative(u) + 2.0 * fam.derivative(u) * fam.eval(u)
}

/// Residuals of the MSD-invariance condition on `g = f' + f^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFamilyResidual {
    /// `u g'(u) + 2 g(u) - 2 c0`.
    pub ode: f64,
    /// `g(u) - c0 - c1 / u^2`.
    pub closed_form: f64,
}

impl GFamilyResidual {
    pub fn max_abs(&self) -> f64 {
        self.ode.abs().max(self.closed_form.abs())
    }
}

pub fn g_family_residual(fam: &DriftFamily, u: f64, c0: f64, c1: f64) -> Result<GFamilyResidual> {
    if u == 0.0 && c1 != 0.0 {
        return Err(Error::domain(
            "g-family closed form is singular at u = 0 when c1 != 0",
        ));
    }
    let g = fam.g(u);
    let ode = u * fam.g_prime(u) + 2.0 * g - 2.0 * c0;
    let tail = if c1 == 0.0 { 0.0 } else { c1 / (u * u) };
    Ok(GFamilyResidual {
        ode,
        closed_form: g - c0 - tail,
    })
}
