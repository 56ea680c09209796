//! Numerically stable scalar helpers.

use std::f64::consts::{LN_2, SQRT_2};

use libm::erfc;

/// `ln cosh(z) = |z| + ln(1 + e^{-2|z|}) - ln 2`, finite for every finite `z`.
#[inline]
pub fn logcosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Logistic function `1 / (1 + e^{-z})` without overflow.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `1 / cosh(z)`; underflows to 0 instead of overflowing `cosh`.
#[inline]
pub fn sech(z: f64) -> f64 {
    let a = z.abs();
    let e = (-a).exp();
    2.0 * e / (1.0 + e * e)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal survival function `1 - Phi(z)`, accurate in the upper tail.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated on the side of the mean that
/// avoids cancellation.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

/// Pairwise (tree) summation; deterministic for a given ordering.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise sum of `f(x)` over `xs`.
pub fn pairwise_sum_by<F: Fn(f64) -> f64 + Copy>(xs: &[f64], f: F) -> f64 {
    const BLOCK: usize = 128;
    if xs.len() <= BLOCK {
        xs.iter().map(|&x| f(x)).sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
    }
}

/// `ln C(n, k)` via log-gamma; never forms factorials.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}
