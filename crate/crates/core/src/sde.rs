//! Fixed-step integrators for `dX = v_d f(X) dt + sigma dW` with `|f| <= 1`.
//!
//! Euler-Maruyama:
//! ```text
//! x_{n+1} = x_n + a(x_n) dt + sigma sqrt(dt) Z_n
//! ```
//! Stochastic Heun (additive noise, the predictor and corrector share `Z_n`):
//! ```text
//! x~      = x_n + a(x_n) dt + sigma sqrt(dt) Z_n
//! x_{n+1} = x_n + (a(x_n) + a(x~)) dt / 2 + sigma sqrt(dt) Z_n
//! ```

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{mixture_weight, DriftBranch, DriftFamily};
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::path::{Path, Provenance};
use crate::quad::{integrate_pieces, QuadConfig};
use crate::rng::{substream, RngStream};
use crate::stats::mean_and_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    EulerMaruyama,
    Heun,
}

impl Scheme {
    pub fn provenance(self) -> Provenance {
        match self {
            Scheme::EulerMaruyama => Provenance::EulerMaruyama,
            Scheme::Heun => Provenance::Heun,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: usize,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::domain("n_steps must be at least 1"));
        }
        Ok(Self {
            scheme,
            dt,
            n_steps,
        })
    }

    /// Steps of size `dt` covering `[0, horizon]`; `dt` must divide `horizon`.
    pub fn covering(scheme: Scheme, dt: f64, horizon: f64) -> Result<Self> {
        let n = steps_dividing(horizon, dt)?;
        Self::new(scheme, dt, n)
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// `horizon / dt` when it is a positive integer (relative tolerance `1e-9`).
pub fn steps_dividing(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::domain(format!(
            "need dt > 0 and horizon > 0, got dt={dt}, horizon={horizon}"
        )));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::domain(format!(
            "dt={dt} does not divide T={horizon}"
        )));
    }
    Ok(n as usize)
}

/// Drift `v_d f(x)` with a shape function bounded by one in magnitude.
#[derive(Clone)]
pub struct BoundedDrift {
    v_d: f64,
    shape: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for BoundedDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedDrift")
            .field("v_d", &self.v_d)
            .field("label", &self.label)
            .finish()
    }
}

impl BoundedDrift {
    /// Wraps `shape`, spot-checking `|shape(x)| <= 1` on a wide grid.
    pub fn new<F>(v_d: f64, label: impl Into<String>, shape: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(v_d >= 0.0) || !v_d.is_finite() {
            return Err(Error::domain(format!(
                "drift speed must be >= 0, got {v_d}"
            )));
        }
        let probes = (-400..=400)
            .map(|i| i as f64 * 0.05)
            .chain((-30..=30).map(|i| (i as f64 * 0.25).exp()))
            .chain((-30..=30).map(|i| -(i as f64 * 0.25).exp()));
        for x in probes {
            let v = shape(x);
            if !(v.abs() <= 1.0) {
                return Err(Error::domain(format!(
                    "drift shape not bounded by 1: f({x}) = {v}"
                )));
            }
        }
        Ok(Self {
            v_d,
            shape: Arc::new(shape),
            label: label.into(),
        })
    }

    /// `v_d tanh(kappa x)`, the merged process.
    pub fn tanh(params: &ProcessParams) -> Self {
        let kappa = params.kappa();
        Self::new(params.v_d(), "tanh", move |x| (kappa * x).tanh()).expect("tanh is bounded")
    }

    /// Constant drift `+v_d` or `-v_d`.
    pub fn constant(params: &ProcessParams, positive: bool) -> Self {
        let s = if positive { 1.0 } else { -1.0 };
        Self::new(
            params.v_d(),
            if positive { "plus" } else { "minus" },
            move |_| s,
        )
        .expect("constant is bounded")
    }

    /// `v_d f(kappa x)` for a member of the bounded drift family.
    pub fn family(fam: DriftFamily, params: &ProcessParams) -> Self {
        let kappa = params.kappa();
        Self::new(params.v_d(), format!("family(b={})", fam.b()), move |x| {
            fam.eval(kappa * x)
        })
        .expect("family members are bounded")
    }

    /// `-v_d tanh(kappa x)`: the mean-reverting process, used as a negative control.
    pub fn reverting(params: &ProcessParams) -> Self {
        let kappa = params.kappa();
        Self::new(params.v_d(), "reverting", move |x| -(kappa * x).tanh()).expect("tanh is bounded")
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.v_d * (self.shape)(x)
    }

    /// Largest possible drift magnitude.
    pub fn bound(&self) -> f64 {
        self.v_d
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// `v_d tanh(kappa x)`.
#[inline]
pub fn drift_tanh(x: f64, params: &ProcessParams) -> f64 {
    params.v_d() * (params.kappa() * x).tanh()
}

#[inline]
fn step(x: f64, drift: &BoundedDrift, dt: f64, noise: f64, scheme: Scheme) -> f64 {
    let a = drift.eval(x);
    match scheme {
        Scheme::EulerMaruyama => x + a * dt + noise,
        Scheme::Heun => {
            let pred = x + a * dt + noise;
            x + 0.5 * (a + drift.eval(pred)) * dt + noise
        }
    }
}

/// Full trajectory on the grid `k dt`, `k = 0..=n_steps`.
pub fn integrate(
    x0: f64,
    drift: &BoundedDrift,
    cfg: &IntegratorConfig,
    params: &ProcessParams,
    rng: &mut RngStream,
) -> Path {
    let scale = params.sigma() * cfg.dt.sqrt();
    let mut times = Vec::with_capacity(cfg.n_steps + 1);
    let mut positions = Vec::with_capacity(cfg.n_steps + 1);
    let mut x = x0;
    times.push(0.0);
    positions.push(x);
    for k in 1..=cfg.n_steps {
        x = step(x, drift, cfg.dt, scale * rng.normal(), cfg.scheme);
        times.push(k as f64 * cfg.dt);
        positions.push(x);
    }
    Path::new(times, positions, cfg.scheme.provenance()).expect("uniform grid is valid")
}

/// Positions after the listed step counts (ascending), without storing the path.
pub fn integrate_observed(
    x0: f64,
    drift: &BoundedDrift,
    cfg: &IntegratorConfig,
    params: &ProcessParams,
    rng: &mut RngStream,
    observe: &[usize],
) -> Result<Vec<f64>> {
    if observe.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("observation steps must be ascending"));
    }
    if let Some(&last) = observe.last() {
        if last > cfg.n_steps {
            return Err(Error::domain(format!(
                "observation step {last} beyond n_steps {}",
                cfg.n_steps
            )));
        }
    }
    let scale = params.sigma() * cfg.dt.sqrt();
    let mut out = Vec::with_capacity(observe.len());
    let mut obs = observe.iter().peekable();
    let mut x = x0;
    for k in 0..=cfg.n_steps {
        while obs.next_if(|&&s| s == k).is_some() {
            out.push(x);
        }
        if k < cfg.n_steps {
            x = step(x, drift, cfg.dt, scale * rng.normal(), cfg.scheme);
        }
    }
    Ok(out)
}

/// Terminal positions of `n` trajectories; trajectory `i` uses `substream(seed, i)`.
pub fn terminal_ensemble(
    x0: f64,
    drift: &BoundedDrift,
    cfg: &IntegratorConfig,
    params: &ProcessParams,
    seed: u64,
    n: usize,
) -> Vec<f64> {
    observed_ensemble(x0, drift, cfg, params, seed, n, &[cfg.n_steps])
        .expect("terminal step is valid")
        .into_iter()
        .map(|v| v[0])
        .collect()
}

/// Positions at the listed steps for `n` trajectories.
pub fn observed_ensemble(
    x0: f64,
    drift: &BoundedDrift,
    cfg: &IntegratorConfig,
    params: &ProcessParams,
    seed: u64,
    n: usize,
    observe: &[usize],
) -> Result<Vec<Vec<f64>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| integrate_observed(x0, drift, cfg, params, &mut substream(seed, i), observe))
        .collect()
}

/// Test functions for weak-error measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    /// `phi(x) = x`
    Position,
    /// `phi(x) = x^2`
    Square,
    /// `phi(x) = tanh(kappa x)`
    Tanh,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::Position, Observable::Square, Observable::Tanh];

    pub fn eval(self, x: f64, kappa: f64) -> f64 {
        match self {
            Observable::Position => x,
            Observable::Square => x * x,
            Observable::Tanh => (kappa * x).tanh(),
        }
    }
}

/// One row of a weak-error curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorPoint {
    pub dt: f64,
    pub observable: Observable,
    /// Scheme estimate of `E[phi(X_T)]` (control-variate corrected).
    pub scheme_mean: f64,
    pub scheme_se: f64,
    /// Exact-sampler ensemble estimate of `E[phi(X_T)]`.
    pub exact_mean: f64,
    pub exact_se: f64,
    /// `E[phi(X_T)]` by quadrature of the exact law.
    pub exact_value: f64,
    /// `|scheme_mean - exact_mean|`
    pub error: f64,
    pub error_se: f64,
    /// `|scheme_mean - exact_value|`, whose noise is `scheme_se` alone.
    pub error_vs_law: f64,
}

/// Exact law of `X_T` for a bounded family member: a two-point mixture of
/// normals `N(x0 +- v_d T, sigma^2 T)`. Tanh members with shift `u_b` are the
/// canonical process translated by `-u_b / kappa`.
#[derive(Debug, Clone, Copy)]
struct FamilyLaw {
    weight_plus: f64,
    mean_plus: f64,
    mean_minus: f64,
    sd: f64,
}

impl FamilyLaw {
    fn new(fam: &DriftFamily, x0: f64, horizon: f64, params: &ProcessParams) -> Self {
        let weight_plus = match fam.branch() {
            DriftBranch::PlusBias => 1.0,
            DriftBranch::MinusBias => 0.0,
            DriftBranch::Tanh => {
                let kappa = params.kappa();
                if kappa == 0.0 {
                    0.5
                } else {
                    mixture_weight(x0 + fam.shift() / kappa, params)
                }
            }
        };
        let shift = params.v_d() * horizon;
        Self {
            weight_plus,
            mean_plus: x0 + shift,
            mean_minus: x0 - shift,
            sd: params.sigma() * horizon.sqrt(),
        }
    }

    fn sample(&self, rng: &mut RngStream) -> f64 {
        let up = rng.bernoulli(self.weight_plus);
        let z = rng.normal();
        (if up { self.mean_plus } else { self.mean_minus }) + self.sd * z
    }

    fn expectation<F: Fn(f64) -> f64>(&self, phi: F) -> Result<f64> {
        let cfg = QuadConfig::default();
        let component = |m: f64| -> Result<f64> {
            let s = self.sd;
            let g = |x: f64| {
                let z = (x - m) / s;
                phi(x) * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            };
            integrate_pieces(g, &[m - 12.0 * s, m, m + 12.0 * s], cfg).map(|q| q.value)
        };
        let mut total = 0.0;
        if self.weight_plus > 0.0 {
            total += self.weight_plus * component(self.mean_plus)?;
        }
        if self.weight_plus < 1.0 {
            total += (1.0 - self.weight_plus) * component(self.mean_minus)?;
        }
        Ok(total)
    }
}

/// Spatial derivatives `(u_x, u_xx)` of `u(x, s) = E[phi(X_T) | X_s = x]`
/// for the family process, used as a martingale control variate. `tau = T - s`.
fn backward_gradient(
    obs: Observable,
    fam: &DriftFamily,
    params: &ProcessParams,
    x: f64,
    tau: f64,
) -> (f64, f64) {
    let kappa = params.kappa();
    let v = params.v_d();
    let u = kappa * x;
    let f = fam.eval(u);
    let fx = kappa * fam.derivative(u);
    let fxx = kappa * kappa * fam.second_derivative(u);
    match obs {
        Observable::Position => (1.0 + v * tau * fx, v * tau * fxx),
        Observable::Square => (
            2.0 * x + 2.0 * v * tau * (f + x * fx),
            2.0 + 2.0 * v * tau * (2.0 * fx + x * fxx),
        ),
        // tanh(kappa x) itself is the martingale of the canonical member;
        // for other members this remains a valid zero-mean control.
        Observable::Tanh => {
            let s = crate::special::sech(u);
            let th = u.tanh();
            (kappa * s * s, -2.0 * kappa * kappa * s * s * th)
        }
    }
}

/// Weak error of `scheme` for `E[phi(X_T)]`, `phi` in [`Observable::ALL`],
/// against an exact-sampler ensemble of the same size.
///
/// Every ensemble uses `master_seed` with per-trajectory substreams; the
/// exact ensemble uses `master_seed + 1`. Scheme estimates subtract the
/// zero-mean martingale
/// `sum_k u_x sigma dW_k + u_xx sigma^2 (dW_k^2 - dt) / 2`
/// built from the exact backward function, which leaves the expectation of
/// the scheme unchanged and removes most of its sampling noise.
#[allow(clippy::too_many_arguments)]
pub fn weak_error_curve(
    x0: f64,
    horizon: f64,
    dts: &[f64],
    n_paths: usize,
    fam: &DriftFamily,
    scheme: Scheme,
    params: &ProcessParams,
    master_seed: u64,
) -> Result<Vec<WeakErrorPoint>> {
    if n_paths < 10_000 {
        return Err(Error::domain(format!(
            "weak-error curves need at least 10^4 paths, got {n_paths}"
        )));
    }
    let steps: Vec<usize> = dts
        .iter()
        .map(|&dt| steps_dividing(horizon, dt))
        .collect::<Result<_>>()?;
    let kappa = params.kappa();
    let law = FamilyLaw::new(fam, x0, horizon, params);
    let exact: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| law.sample(&mut substream(master_seed.wrapping_add(1), i)))
        .collect();
    let drift = BoundedDrift::family(*fam, params);
    let mut out = Vec::new();
    for (&dt, &n_steps) in dts.iter().zip(&steps) {
        let corrected: Vec<[f64; 3]> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(master_seed, i);
                controlled_terminal(x0, &drift, fam, scheme, dt, n_steps, params, &mut rng)
            })
            .collect();
        for (j, obs) in Observable::ALL.iter().copied().enumerate() {
            let scheme_vals: Vec<f64> = corrected.iter().map(|v| v[j]).collect();
            let exact_vals: Vec<f64> = exact.iter().map(|&x| obs.eval(x, kappa)).collect();
            let (sm, sse) = mean_and_se(&scheme_vals);
            let (em, ese) = mean_and_se(&exact_vals);
            let exact_value = law.expectation(|x| obs.eval(x, kappa))?;
            out.push(WeakErrorPoint {
                dt,
                observable: obs,
                scheme_mean: sm,
                scheme_se: sse,
                exact_mean: em,
                exact_se: ese,
                exact_value,
                error: (sm - em).abs(),
                error_se: (sse * sse + ese * ese).sqrt(),
                error_vs_law: (sm - exact_value).abs(),
            });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn controlled_terminal(
    x0: f64,
    drift: &BoundedDrift,
    fam: &DriftFamily,
    scheme: Scheme,
    dt: f64,
    n_steps: usize,
    params: &ProcessParams,
    rng: &mut RngStream,
) -> [f64; 3] {
    let sigma = params.sigma();
    let sqrt_dt = dt.sqrt();
    let horizon = n_steps as f64 * dt;
    let mut control = [0.0f64; 3];
    let mut x = x0;
    for k in 0..n_steps {
        let z = rng.normal();
        let dw = sqrt_dt * z;
        let tau = horizon - k as f64 * dt;
        for (j, obs) in Observable::ALL.iter().copied().enumerate() {
            let (ux, uxx) = backward_gradient(obs, fam, params, x, tau);
            control[j] += ux * sigma * dw + 0.5 * uxx * sigma * sigma * (dw * dw - dt);
        }
        x = step(x, drift, dt, sigma * dw, scheme);
    }
    let kappa = params.kappa();
    let mut out = [0.0; 3];
    for (j, obs) in Observable::ALL.iter().copied().enumerate() {
        out[j] = obs.eval(x, kappa) - control[j];
    }
    out
}
