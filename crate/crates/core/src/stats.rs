//! Ensemble estimators with standard errors, distribution distances and
//! order fitting. All reductions use pairwise summation over the sample
//! order, so results do not depend on how the samples were produced.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytic::{transition_cdf, transition_interval_mass, TransitionQuery};
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::path::Path;
use crate::special::{pairwise_sum, pairwise_sum_by};

/// Minimum ensemble size for moment summaries.
pub const MIN_SUMMARY_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|value - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

/// Sample mean and its standard error `s / sqrt(n)`.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss = pairwise_sum_by(xs, |x| (x - mean) * (x - mean));
    (mean, (ss / (n - 1.0) / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_samples: usize,
    pub x0: f64,
    pub t: f64,
    pub mean: Estimate,
    pub variance: Estimate,
    /// `E[tanh(kappa X_t)]`
    pub martingale: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msd: Option<Vec<(f64, Estimate)>>,
}

/// Moments of an ensemble observed at a single time `t`.
///
/// The variance is the unbiased sample variance; its standard error uses
/// the fourth central moment, `se^2 = (m4 - s^4 (n-3)/(n-1)) / n`.
pub fn summarize(
    samples: &[f64],
    params: &ProcessParams,
    t: f64,
    x0: f64,
) -> Result<EnsembleSummary> {
    let n = samples.len();
    if n < MIN_SUMMARY_SAMPLES {
        return Err(Error::domain(format!(
            "summaries need at least {MIN_SUMMARY_SAMPLES} samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = pairwise_sum(samples) / nf;
    let ss = pairwise_sum_by(samples, |x| (x - mean) * (x - mean));
    let m4 = pairwise_sum_by(samples, |x| (x - mean).powi(4)) / nf;
    let s2 = ss / (nf - 1.0);
    let var_se = ((m4 - s2 * s2 * (nf - 3.0) / (nf - 1.0)) / nf)
        .max(0.0)
        .sqrt();
    let kappa = params.kappa();
    let th: Vec<f64> = samples.iter().map(|&x| (kappa * x).tanh()).collect();
    let (mart, mart_se) = mean_and_se(&th);
    Ok(EnsembleSummary {
        n_samples: n,
        x0,
        t,
        mean: Estimate {
            value: mean,
            se: (s2 / nf).sqrt(),
        },
        variance: Estimate {
            value: s2,
            se: var_se,
        },
        martingale: Estimate {
            value: mart,
            se: mart_se,
        },
        covariance: None,
        msd: None,
    })
}

fn positions_at(paths: &[Path], t: f64) -> Result<Vec<f64>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.position_at(t)
                .ok_or_else(|| Error::domain(format!("path {i} has no grid point at t={t}")))
        })
        .collect()
}

fn check_pair_inputs(n: usize, tau: f64) -> Result<()> {
    if n < MIN_SUMMARY_SAMPLES {
        return Err(Error::domain(format!(
            "need at least {MIN_SUMMARY_SAMPLES} paths, got {n}"
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("tau must be >= 0, got {tau}")));
    }
    Ok(())
}

/// Mean of `(X_{t+tau} - X_t)^2` over the ensemble.
pub fn msd_estimate(paths: &[Path], t: f64, tau: f64) -> Result<Estimate> {
    check_pair_inputs(paths.len(), tau)?;
    let early = positions_at(paths, t)?;
    let late = positions_at(paths, t + tau)?;
    Ok(msd_from_pairs(&early, &late))
}

pub fn msd_from_pairs(early: &[f64], late: &[f64]) -> Estimate {
    let sq: Vec<f64> = early
        .iter()
        .zip(late)
        .map(|(a, b)| (b - a) * (b - a))
        .collect();
    let (value, se) = mean_and_se(&sq);
    Estimate { value, se }
}

/// Sample covariance of `(X_t, X_{t+tau})` with a delete-one jackknife error.
pub fn covariance_estimate(paths: &[Path], t: f64, tau: f64) -> Result<Estimate> {
    check_pair_inputs(paths.len(), tau)?;
    let early = positions_at(paths, t)?;
    let late = positions_at(paths, t + tau)?;
    Ok(covariance_from_pairs(&early, &late))
}

/// Leave-one-out covariances are `(S - c_i n/(n-1)) / (n-2)` with
/// `c_i = (x_i - xbar)(y_i - ybar)`, so the jackknife variance reduces to
/// `n / ((n-1)(n-2)^2) * sum (c_i - cbar)^2` and costs O(n).
pub fn covariance_from_pairs(xs: &[f64], ys: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let c: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    let s = pairwise_sum(&c);
    let cbar = s / n;
    let dev = pairwise_sum_by(&c, |v| (v - cbar) * (v - cbar));
    Estimate {
        value: s / (n - 1.0),
        se: (n / ((n - 1.0) * (n - 2.0) * (n - 2.0)) * dev).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "ks")]
    Ks,
    #[serde(rename = "tv")]
    TotalVariation,
    #[serde(rename = "l1")]
    L1Histogram,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ks" => Ok(Metric::Ks),
            "tv" | "total_variation" => Ok(Metric::TotalVariation),
            "l1" | "l1_histogram" => Ok(Metric::L1Histogram),
            other => Err(Error::domain(format!("unknown distance metric '{other}'"))),
        }
    }
}

/// Law that samples are compared with.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceLaw {
    /// Transition law of the merged process from `x0` after time `t`.
    Analytic {
        params: ProcessParams,
        x0: f64,
        t: f64,
    },
    Empirical(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceConfig {
    /// KS significance level.
    pub alpha: f64,
    /// Pass threshold for the histogram metrics.
    pub threshold: f64,
    /// Number of shared bins for the histogram metrics.
    pub bins: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            threshold: 0.05,
            bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub metric: Metric,
    pub value: f64,
    pub n_samples: usize,
    pub n_reference: Option<usize>,
    /// KS only.
    pub p_value: Option<f64>,
    /// `alpha` for KS, the distance threshold otherwise.
    pub threshold: f64,
    pub passed: bool,
}

/// Minimum sample size for distribution distances.
pub const MIN_DISTANCE_SAMPLES: usize = 1000;

pub fn distribution_distance(
    samples: &[f64],
    reference: &ReferenceLaw,
    metric: Metric,
    cfg: &DistanceConfig,
) -> Result<DistanceReport> {
    if samples.len() < MIN_DISTANCE_SAMPLES {
        return Err(Error::domain(format!(
            "distances need at least {MIN_DISTANCE_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let ReferenceLaw::Empirical(r) = reference {
        if r.len() < MIN_DISTANCE_SAMPLES {
            return Err(Error::domain(format!(
                "empirical reference needs at least {MIN_DISTANCE_SAMPLES} samples, got {}",
                r.len()
            )));
        }
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n_reference = match reference {
        ReferenceLaw::Empirical(r) => Some(r.len()),
        ReferenceLaw::Analytic { .. } => None,
    };
    match metric {
        Metric::Ks => {
            let (d, n_eff) = match reference {
                ReferenceLaw::Analytic { params, x0, t } => {
                    TransitionQuery::new(*x0, *x0, *t)?;
                    let cdf = |x: f64| {
                        transition_cdf(&TransitionQuery { x0: *x0, x, t: *t }, params)
                            .expect("t checked above")
                    };
                    (ks_statistic_one_sample(&sorted, cdf), sorted.len() as f64)
                }
                ReferenceLaw::Empirical(r) => {
                    let mut rs = r.clone();
                    rs.sort_by(f64::total_cmp);
                    let (n, m) = (sorted.len() as f64, rs.len() as f64);
                    (ks_statistic_two_sample(&sorted, &rs), n * m / (n + m))
                }
            };
            let p = kolmogorov_survival(ks_lambda(d, n_eff));
            Ok(DistanceReport {
                metric,
                value: d,
                n_samples: samples.len(),
                n_reference,
                p_value: Some(p),
                threshold: cfg.alpha,
                passed: p >= cfg.alpha,
            })
        }
        Metric::TotalVariation | Metric::L1Histogram => {
            let tv = histogram_tv(&sorted, reference, cfg.bins)?;
            let value = if metric == Metric::L1Histogram {
                2.0 * tv
            } else {
                tv
            };
            Ok(DistanceReport {
                metric,
                value,
                n_samples: samples.len(),
                n_reference,
                p_value: None,
                threshold: cfg.threshold,
                passed: value <= cfg.threshold,
            })
        }
    }
}

/// `sup |F_n - F|` for sorted samples.
pub fn ks_statistic_one_sample<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_statistic_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Stephens' finite-sample scaling of the KS statistic.
fn ks_lambda(d: f64, n_eff: f64) -> f64 {
    let rn = n_eff.sqrt();
    (rn + 0.12 + 0.11 / rn) * d
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small lambda.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = (0..6).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        let s: f64 = (1..=6)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * x.powi(k * k)
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn histogram_tv(sorted: &[f64], reference: &ReferenceLaw, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::domain("histogram metrics need at least one bin"));
    }
    let mut lo = sorted[0];
    let mut hi = *sorted.last().unwrap();
    if let ReferenceLaw::Empirical(r) = reference {
        for &x in r {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let counts = |xs: &[f64]| {
        let mut c = vec![0.0f64; bins];
        for &x in xs {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            c[k] += 1.0;
        }
        let n = xs.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    };
    let p = counts(sorted);
    let (q, outside) = match reference {
        ReferenceLaw::Empirical(r) => (counts(r), 0.0),
        ReferenceLaw::Analytic { params, x0, t } => {
            let q: Vec<f64> = (0..bins)
                .map(|k| {
                    let a = lo + k as f64 * width;
                    let b = if k + 1 == bins { hi } else { a + width };
                    transition_interval_mass(*x0, *t, a, b, params)
                })
                .collect::<Result<_>>()?;
            let inside: f64 = q.iter().sum();
            (q, (1.0 - inside).max(0.0))
        }
    };
    let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * (l1 + outside))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares line through `(ln x, ln y)`.
pub fn fit_order(xs: &[f64], ys: &[f64]) -> Result<OrderFit> {
    if xs.len() != ys.len() {
        return Err(Error::domain("fit_order needs equally many x and y values"));
    }
    if xs.len() < 3 {
        return Err(Error::domain(format!(
            "fit_order needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::domain(
            "fit_order needs strictly positive finite values",
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::domain(
            "fit_order needs at least two distinct x values",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(OrderFit {
        slope,
        intercept,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    /// Inverse-variance weighted common value.
    pub common: f64,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test that all estimates share one value.
pub fn chi_square_compatibility(estimates: &[Estimate]) -> Result<Compatibility> {
    if estimates.len() < 2 {
        return Err(Error::domain("compatibility needs at least two estimates"));
    }
    if estimates.iter().any(|e| !(e.se > 0.0)) {
        return Err(Error::domain(
            "compatibility needs positive standard errors",
        ));
    }
    let wsum: f64 = estimates.iter().map(|e| 1.0 / (e.se * e.se)).sum();
    let common = estimates
        .iter()
        .map(|e| e.value / (e.se * e.se))
        .sum::<f64>()
        / wsum;
    let statistic: f64 = estimates
        .iter()
        .map(|e| ((e.value - common) / e.se).powi(2))
        .sum();
    let dof = estimates.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::domain(e.to_string()))?;
    Ok(Compatibility {
        common,
        statistic,
        dof,
        p_value: chi.sf(statistic),
    })
}
