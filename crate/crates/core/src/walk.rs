//! Nearest-neighbour walk whose one-step probabilities depend on the site.
//!
//! From site `x` the walker moves to `x ± dx` with probability
//! `cosh((x ± dx) xi / dx) / (2 cosh(xi) cosh(xi x / dx))`. Sites are kept as
//! integer offsets from the start so parity is exact; lengths appear only at
//! the interface.

use rayon::prelude::*;

use crate::analytic::transition_interval_mass;
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::path::{Path, Provenance};
use crate::rng::{substream, RngStream};
use crate::special::{ln_binomial, logcosh, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    dx: f64,
    dt: f64,
    xi: f64,
}

impl WalkParams {
    pub fn new(dx: f64, dt: f64, xi: f64) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::domain(format!("dx must be > 0, got {dx}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("dt must be > 0, got {dt}")));
        }
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::domain(format!("xi must be >= 0, got {xi}")));
        }
        Ok(Self { dx, dt, xi })
    }

    /// Walk with spacing `dx` whose continuum image is `params`:
    /// `dt = dx^2 / sigma^2`, `xi = kappa dx`.
    pub fn from_continuum(params: &ProcessParams, dx: f64) -> Result<Self> {
        Self::new(dx, dx * dx / params.sigma2(), params.kappa() * dx)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// A site reached after `n` steps, stored as an offset from the start site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeState {
    offset: i64,
    steps: u64,
}

impl LatticeState {
    pub fn new(offset: i64, steps: u64) -> Result<Self> {
        if offset.unsigned_abs() > steps || !(steps - offset.unsigned_abs()).is_multiple_of(2) {
            return Err(Error::domain(format!(
                "offset {offset} is not reachable in {steps} steps"
            )));
        }
        Ok(Self { offset, steps })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn position(&self, x0: f64, wp: &WalkParams) -> f64 {
        x0 + self.offset as f64 * wp.dx
    }
}

/// `(p_up, p_down)` at site `x`.
///
/// The smaller probability is `cosh(a ∓ xi) / (2 cosh a cosh xi)` with
/// `a = xi x / dx`, evaluated in log space; the other one is its complement.
pub fn step_probabilities(x: f64, wp: &WalkParams) -> (f64, f64) {
    site_probabilities(wp.xi * x / wp.dx, wp.xi)
}

fn site_probabilities(a: f64, xi: f64) -> (f64, f64) {
    // log cosh(a - xi) - log cosh(a) - log cosh(xi) for a, xi >= 0 with the
    // linear parts of the three terms cancelled by hand.
    let tail = |y: f64| (-2.0 * y.abs()).exp().ln_1p();
    let minor = |a: f64| {
        let log_ratio =
            -2.0 * a.min(xi) + std::f64::consts::LN_2 + tail(a - xi) - tail(a) - tail(xi);
        0.5 * log_ratio.exp()
    };
    if a >= 0.0 {
        let down = minor(a);
        (1.0 - down, down)
    } else {
        let up = minor(-a);
        (up, 1.0 - up)
    }
}

/// `p(x -> x + dx) * p(x + dx -> x)`.
pub fn loop_product(x: f64, wp: &WalkParams) -> f64 {
    step_probabilities(x, wp).0 * step_probabilities(x + wp.dx, wp).1
}

fn start_site(x0: f64, wp: &WalkParams) -> f64 {
    wp.xi * x0 / wp.dx
}

fn walk_offsets(x0: f64, n_steps: usize, wp: &WalkParams, rng: &mut RngStream) -> Vec<i64> {
    let a0 = start_site(x0, wp);
    let mut k = 0i64;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(0);
    for _ in 0..n_steps {
        let (up, _) = site_probabilities(a0 + wp.xi * k as f64, wp.xi);
        k += if rng.uniform() < up { 1 } else { -1 };
        out.push(k);
    }
    out
}

fn terminal_offset(x0: f64, n_steps: usize, wp: &WalkParams, rng: &mut RngStream) -> i64 {
    let a0 = start_site(x0, wp);
    let mut k = 0i64;
    for _ in 0..n_steps {
        let (up, _) = site_probabilities(a0 + wp.xi * k as f64, wp.xi);
        k += if rng.uniform() < up { 1 } else { -1 };
    }
    k
}

pub fn walk_path(x0: f64, n_steps: usize, wp: &WalkParams, rng: &mut RngStream) -> Result<Path> {
    if n_steps == 0 {
        return Err(Error::domain("a walk path needs at least one step"));
    }
    let offsets = walk_offsets(x0, n_steps, wp, rng);
    let times = (0..=n_steps).map(|k| k as f64 * wp.dt).collect();
    let positions = offsets.iter().map(|&k| x0 + k as f64 * wp.dx).collect();
    Path::new(times, positions, Provenance::Walk)
}

/// Terminal offsets of `n_paths` walks; walk `i` uses `substream(seed, i)`.
pub fn walk_terminal_ensemble(
    x0: f64,
    n_steps: usize,
    wp: &WalkParams,
    seed: u64,
    n_paths: usize,
) -> Vec<LatticeState> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let k = terminal_offset(x0, n_steps, wp, &mut substream(seed, i));
            LatticeState {
                offset: k,
                steps: n_steps as u64,
            }
        })
        .collect()
}

pub fn walk_path_ensemble(
    x0: f64,
    n_steps: usize,
    wp: &WalkParams,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<Path>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| walk_path(x0, n_steps, wp, &mut substream(seed, i)))
        .collect()
}

/// Probabilities over the sites reachable in `n_steps`, ordered by offset
/// `-n, -n + 2, ..., n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkDistribution {
    x0: f64,
    dx: f64,
    n_steps: usize,
    probs: Vec<f64>,
}

impl WalkDistribution {
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn offset(&self, j: usize) -> i64 {
        2 * j as i64 - self.n_steps as i64
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of offset `k` (zero off the support).
    pub fn prob_at_offset(&self, k: i64) -> f64 {
        let n = self.n_steps as i64;
        if k.abs() > n || (n - k).rem_euclid(2) != 0 {
            return 0.0;
        }
        self.probs[((k + n) / 2) as usize]
    }

    /// `(position, probability)` pairs in increasing position.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(j, &p)| (self.x0 + self.offset(j) as f64 * self.dx, p))
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.probs)
    }
}

/// Closed-form law after `n_steps`:
/// `C(n, (n+k)/2) cosh(xi (x0/dx + k)) / ((2 cosh xi)^n cosh(xi x0/dx))`.
///
/// For long walks the log binomials are of order `n` and carry an absolute
/// rounding error near `n * 1e-16`, so the exponentiated terms are divided by
/// their sum.
pub fn exact_walk_distribution(x0: f64, n_steps: usize, wp: &WalkParams) -> WalkDistribution {
    let a0 = start_site(x0, wp);
    let n = n_steps as i64;
    let norm = n_steps as f64 * (std::f64::consts::LN_2 + logcosh(wp.xi)) + logcosh(a0);
    let mut probs: Vec<f64> = (0..=n_steps)
        .map(|j| {
            let k = 2 * j as i64 - n;
            (ln_binomial(n_steps as u64, j as u64) + logcosh(a0 + wp.xi * k as f64) - norm).exp()
        })
        .collect();
    let total = pairwise_sum(&probs);
    probs.iter_mut().for_each(|p| *p /= total);
    WalkDistribution {
        x0,
        dx: wp.dx,
        n_steps,
        probs,
    }
}

/// The same law by propagating the one-step kernel `n_steps` times.
pub fn enumerate_walk_distribution(x0: f64, n_steps: usize, wp: &WalkParams) -> WalkDistribution {
    let a0 = start_site(x0, wp);
    let mut probs = vec![1.0];
    for n in 0..n_steps {
        // probs[j] sits at offset 2j - n.
        let mut next = vec![0.0; n + 2];
        for (j, &p) in probs.iter().enumerate() {
            let k = 2 * j as i64 - n as i64;
            let (up, down) = site_probabilities(a0 + wp.xi * k as f64, wp.xi);
            next[j] += p * down;
            next[j + 1] += p * up;
        }
        probs = next;
    }
    WalkDistribution {
        x0,
        dx: wp.dx,
        n_steps,
        probs,
    }
}

/// Histogram of terminal states as a distribution over the reachable sites.
pub fn empirical_walk_distribution(
    x0: f64,
    n_steps: usize,
    wp: &WalkParams,
    states: &[LatticeState],
) -> Result<WalkDistribution> {
    if states.is_empty() {
        return Err(Error::domain("empty walk ensemble"));
    }
    let mut probs = vec![0.0; n_steps + 1];
    for s in states {
        if s.steps != n_steps as u64 {
            return Err(Error::domain(format!(
                "state after {} steps in an ensemble of {n_steps}-step walks",
                s.steps
            )));
        }
        probs[((s.offset + n_steps as i64) / 2) as usize] += 1.0;
    }
    let n = states.len() as f64;
    probs.iter_mut().for_each(|p| *p /= n);
    Ok(WalkDistribution {
        x0,
        dx: wp.dx,
        n_steps,
        probs,
    })
}

/// Total variation distance between two walk laws on the same lattice.
pub fn walk_total_variation(a: &WalkDistribution, b: &WalkDistribution) -> Result<f64> {
    if a.n_steps != b.n_steps || a.dx != b.dx || a.x0 != b.x0 {
        return Err(Error::domain("walk laws live on different lattices"));
    }
    Ok(0.5
        * a.probs
            .iter()
            .zip(&b.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>())
}

/// `sigma = dx / sqrt(dt)`, `kappa = xi / dx`, `v_d = kappa sigma^2`.
pub fn continuum_params(wp: &WalkParams) -> Result<ProcessParams> {
    let sigma = wp.dx / wp.dt.sqrt();
    ProcessParams::from_kappa(wp.xi / wp.dx, sigma)
}

/// Total variation between the walk law after `T / dt` steps and the
/// continuum law integrated over cells of width `2 dx` centred on the
/// reachable sites, for each walk in `wps`. Continuum mass outside the
/// reachable cells counts towards the distance.
pub fn continuum_convergence(
    x0: f64,
    horizon: f64,
    wps: &[WalkParams],
    target: &ProcessParams,
) -> Result<Vec<(f64, f64)>> {
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be > 0, got {horizon}")));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    wps.iter()
        .map(|wp| {
            let image = continuum_params(wp)?;
            if !close(image.sigma(), target.sigma()) || !close(image.kappa(), target.kappa()) {
                return Err(Error::domain(format!(
                    "walk (dx={}, dt={}, xi={}) maps to sigma={}, kappa={}, not the target sigma={}, kappa={}",
                    wp.dx,
                    wp.dt,
                    wp.xi,
                    image.sigma(),
                    image.kappa(),
                    target.sigma(),
                    target.kappa()
                )));
            }
            let steps = horizon / wp.dt;
            let n = steps.round();
            if (steps - n).abs() > 1e-9 * steps.max(1.0) || n < 1.0 {
                return Err(Error::domain(format!(
                    "horizon {horizon} is not a whole number of steps of {}",
                    wp.dt
                )));
            }
            let dist = exact_walk_distribution(x0, n as usize, wp);
            let mut l1 = 0.0;
            let mut covered = 0.0;
            for (x, p) in dist.iter() {
                let m = transition_interval_mass(x0, horizon, x - wp.dx, x + wp.dx, target)?;
                covered += m;
                l1 += (p - m).abs();
            }
            Ok((wp.dx, 0.5 * (l1 + (1.0 - covered).max(0.0))))
        })
        .collect()
}
