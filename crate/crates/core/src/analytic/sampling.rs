use rayon::prelude::*;

use super::density::mixture_weight;
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::path::{validate_time_grid, Path, Provenance};
use crate::rng::{substream, RngStream};

/// One exact draw of `X_t` given `X_0 = x0`.
///
/// A Bernoulli draw with success probability `w(x0)` picks the `+v_d` or
/// `-v_d` component, then one normal draw fixes the position.
pub fn exact_transition_sample(
    x0: f64,
    t: f64,
    params: &ProcessParams,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!(
            "exact sampling needs t > 0, got {t}"
        )));
    }
    Ok(draw(x0, t, params, rng))
}

#[inline]
fn draw(x0: f64, t: f64, params: &ProcessParams, rng: &mut RngStream) -> f64 {
    let up = rng.bernoulli(mixture_weight(x0, params));
    let z = rng.normal();
    let shift = params.v_d() * t;
    let mean = if up { x0 + shift } else { x0 - shift };
    mean + params.sigma() * t.sqrt() * z
}

/// Exact path on a grid by chaining exact transitions; the process is
/// time-homogeneous Markov, so the discrete-time law is exact.
pub fn exact_path_sample(
    x0: f64,
    times: &[f64],
    params: &ProcessParams,
    rng: &mut RngStream,
) -> Result<Path> {
    validate_time_grid(times)?;
    let mut positions = Vec::with_capacity(times.len());
    positions.push(x0);
    let mut x = x0;
    for w in times.windows(2) {
        x = draw(x, w[1] - w[0], params, rng);
        positions.push(x);
    }
    Path::new(times.to_vec(), positions, Provenance::Exact)
}

/// `n` independent exact draws; draw `i` uses `substream(seed, i)`.
pub fn exact_ensemble(
    x0: f64,
    t: f64,
    params: &ProcessParams,
    seed: u64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!(
            "exact sampling needs t > 0, got {t}"
        )));
    }
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| draw(x0, t, params, &mut substream(seed, i)))
        .collect())
}

/// `n` exact paths on a shared grid; path `i` uses `substream(seed, i)`.
pub fn exact_path_ensemble(
    x0: f64,
    times: &[f64],
    params: &ProcessParams,
    seed: u64,
    n: usize,
) -> Result<Vec<Path>> {
    validate_time_grid(times)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| exact_path_sample(x0, times, params, &mut substream(seed, i)))
        .collect()
}
