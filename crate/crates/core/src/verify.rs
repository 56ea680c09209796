//! Self-check battery behind the command-line `verify` command.
//!
//! Each check compares a computed quantity with its closed form and records
//! the value, the threshold and the verdict. Sampling checks draw from the
//! exact sampler, or from an Euler-Maruyama integrator with the drift sign
//! flipped when [`VerifyConfig::flip_drift`] is set; the flipped run is a
//! negative control and is expected to fail.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{
    chapman_kolmogorov_residual, exact_ensemble, exact_path_ensemble, martingale_closure,
    martingale_variance, mean_exact, msd_exact, normalization, variance_exact,
};
use crate::error::{Error, Result};
use crate::fpe::{fpe_reference, l1_gap, solve_fpe, FpeGrid};
use crate::params::ProcessParams;
use crate::sde::{observed_ensemble, terminal_ensemble, BoundedDrift, IntegratorConfig, Scheme};
use crate::stats::{chi_square_compatibility, msd_from_pairs, summarize, Estimate};
use crate::walk::{
    enumerate_walk_distribution, exact_walk_distribution, loop_product, step_probabilities,
    WalkParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckGroup {
    Analytic,
    Sampler,
    Msd,
    Ck,
    Walk,
    Fpe,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 6] = [
        CheckGroup::Analytic,
        CheckGroup::Sampler,
        CheckGroup::Msd,
        CheckGroup::Ck,
        CheckGroup::Walk,
        CheckGroup::Fpe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckGroup::Analytic => "analytic",
            CheckGroup::Sampler => "sampler",
            CheckGroup::Msd => "msd",
            CheckGroup::Ck => "ck",
            CheckGroup::Walk => "walk",
            CheckGroup::Fpe => "fpe",
        }
    }
}

impl fmt::Display for CheckGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s.trim())
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown check group '{s}' (expected one of analytic, sampler, msd, ck, walk, fpe)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub params: ProcessParams,
    /// Start point of the sampling checks.
    pub x0: f64,
    /// Observation time of the sampling checks.
    pub t: f64,
    /// Ensemble size of the sampling and MSD checks.
    pub n: usize,
    pub seed: u64,
    /// Groups to run; empty means all.
    pub only: Vec<CheckGroup>,
    /// Sample from the mean-reverting process instead of the merged one.
    pub flip_drift: bool,
}

impl VerifyConfig {
    pub fn new(params: ProcessParams) -> Self {
        Self {
            params,
            x0: 0.5,
            t: 1.0,
            n: 100_000,
            seed: 20_240_101,
            only: Vec::new(),
            flip_drift: false,
        }
    }

    fn runs(&self, g: CheckGroup) -> bool {
        self.only.is_empty() || self.only.contains(&g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub group: CheckGroup,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Recorder {
    checks: Vec<CheckResult>,
    group: CheckGroup,
}

impl Recorder {
    /// Passes when `value <= threshold`.
    fn bound(&mut self, name: &str, value: f64, threshold: f64, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            group: self.group,
            value,
            threshold,
            passed: value <= threshold,
            detail,
        });
    }

    /// Passes when `p >= alpha`.
    fn p_value(&mut self, name: &str, p: f64, alpha: f64, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            group: self.group,
            value: p,
            threshold: alpha,
            passed: p >= alpha,
            detail,
        });
    }

    fn z(&mut self, name: &str, est: Estimate, target: f64, k: f64) {
        self.bound(
            name,
            est.z_score(target),
            k,
            format!("estimate {} +- {} vs exact {}", est.value, est.se, target),
        );
    }
}

pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.n < 1000 {
        return Err(Error::domain(format!(
            "verification needs an ensemble of at least 1000, got {}",
            cfg.n
        )));
    }
    if !(cfg.t > 0.0) {
        return Err(Error::domain(format!(
            "verification time must be > 0, got {}",
            cfg.t
        )));
    }
    let mut checks = Vec::new();
    for group in CheckGroup::ALL {
        if !cfg.runs(group) {
            continue;
        }
        let mut rec = Recorder {
            checks: Vec::new(),
            group,
        };
        match group {
            CheckGroup::Analytic => analytic_checks(cfg, &mut rec)?,
            CheckGroup::Sampler => sampler_checks(cfg, &mut rec)?,
            CheckGroup::Msd => msd_checks(cfg, &mut rec)?,
            CheckGroup::Ck => ck_checks(cfg, &mut rec)?,
            CheckGroup::Walk => walk_checks(&mut rec),
            CheckGroup::Fpe => fpe_checks(cfg, &mut rec)?,
        }
        checks.extend(rec.checks);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}

const X0_GRID: [f64; 3] = [-1.0, 0.0, 2.0];
const T_GRID: [f64; 3] = [0.5, 1.0, 2.0];

fn analytic_checks(cfg: &VerifyConfig, rec: &mut Recorder) -> Result<()> {
    let p = &cfg.params;
    let mut norm: f64 = 0.0;
    let mut mart: f64 = 0.0;
    for &x0 in &X0_GRID {
        for &t in &T_GRID {
            norm = norm.max((normalization(x0, t, p)? - 1.0).abs());
            mart = mart.max((martingale_closure(x0, t, p)? - (p.kappa() * x0).tanh()).abs());
        }
    }
    rec.bound(
        "normalization",
        norm,
        1e-10,
        "max |int p dx - 1| over a 3x3 (x0, t) grid".into(),
    );
    rec.bound(
        "martingale_closure",
        mart,
        1e-10,
        "max |E[tanh(kappa X_t)] - tanh(kappa x0)| by quadrature".into(),
    );
    Ok(())
}

/// Terminal samples at `t` from the configured generator.
fn sample(cfg: &VerifyConfig, x0: f64, t: f64, seed: u64) -> Result<Vec<f64>> {
    if cfg.flip_drift {
        let drift = BoundedDrift::reverting(&cfg.params);
        let ic = IntegratorConfig::covering(Scheme::EulerMaruyama, 0.01, t)?;
        Ok(terminal_ensemble(x0, &drift, &ic, &cfg.params, seed, cfg.n))
    } else {
        exact_ensemble(x0, t, &cfg.params, seed, cfg.n)
    }
}

fn sampler_checks(cfg: &VerifyConfig, rec: &mut Recorder) -> Result<()> {
    let p = &cfg.params;
    let xs = sample(cfg, cfg.x0, cfg.t, cfg.seed)?;
    let s = summarize(&xs, p, cfg.t, cfg.x0)?;
    rec.z("mean", s.mean, mean_exact(cfg.x0, cfg.t, p)?, 4.0);
    rec.z(
        "variance",
        s.variance,
        variance_exact(cfg.x0, cfg.t, p)?,
        5.0,
    );
    // The sample error of tanh(kappa X) is blind to mixture components
    // lighter than 1/n; score against the population error instead.
    let mart = Estimate {
        se: (martingale_variance(cfg.x0, cfg.t, p)? / cfg.n as f64).sqrt(),
        ..s.martingale
    };
    rec.z("martingale", mart, (p.kappa() * cfg.x0).tanh(), 4.0);
    Ok(())
}

fn msd_checks(cfg: &VerifyConfig, rec: &mut Recorder) -> Result<()> {
    let p = &cfg.params;
    let tau = 1.0;
    let target = msd_exact(tau, p)?;
    let mut estimates = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &x0) in X0_GRID.iter().enumerate() {
        for (j, &t) in T_GRID.iter().enumerate() {
            let seed = cfg.seed.wrapping_add(1 + (3 * i + j) as u64);
            let pairs: Vec<(f64, f64)> = if cfg.flip_drift {
                let drift = BoundedDrift::reverting(p);
                let dt = 0.01;
                let ic = IntegratorConfig::covering(Scheme::EulerMaruyama, dt, t + tau)?;
                let k = (t / dt).round() as usize;
                observed_ensemble(x0, &drift, &ic, p, seed, cfg.n, &[k, ic.n_steps])?
                    .into_iter()
                    .map(|v| (v[0], v[1]))
                    .collect()
            } else {
                exact_path_ensemble(x0, &[0.0, t, t + tau], p, seed, cfg.n)?
                    .into_iter()
                    .map(|path| (path.positions()[1], path.positions()[2]))
                    .collect()
            };
            let (early, late): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let e = msd_from_pairs(&early, &late);
            worst = worst.max(e.z_score(target));
            estimates.push(e);
        }
    }
    rec.bound(
        "msd_level",
        worst,
        5.0,
        format!("largest |msd - (sigma^2 tau + v_d^2 tau^2)| / se over 9 (t, x0) points, target {target}"),
    );
    let c = chi_square_compatibility(&estimates)?;
    rec.p_value(
        "msd_flatness",
        c.p_value,
        0.01,
        format!(
            "chi-square {} on {} dof, common value {}",
            c.statistic, c.dof, c.common
        ),
    );
    Ok(())
}

fn ck_checks(cfg: &VerifyConfig, rec: &mut Recorder) -> Result<()> {
    let p = &cfg.params;
    let mut worst: f64 = 0.0;
    for &(x0, x, t, t_mid) in &[
        (0.0, 0.3, 1.0, 0.5),
        (0.5, -1.0, 2.0, 0.7),
        (-1.0, 1.5, 1.5, 1.0),
        (2.0, 2.5, 0.8, 0.2),
        (0.1, 0.0, 3.0, 1.5),
    ] {
        worst = worst.max(chapman_kolmogorov_residual(x, t, t_mid, x0, p)?);
    }
    rec.bound(
        "ck_residual",
        worst,
        1e-8,
        "largest residual over 5 points".into(),
    );
    Ok(())
}

fn walk_checks(rec: &mut Recorder) {
    let xis = [0.0, 0.1, 0.5, 1.0, 2.0];
    let mut conservation: f64 = 0.0;
    let mut loops: f64 = 0.0;
    for &xi in &xis {
        let wp = WalkParams::new(1.0, 1.0, xi).expect("valid walk");
        let target = 1.0 / (4.0 * xi.cosh().powi(2));
        for k in -500..=500 {
            let x = k as f64;
            let (up, down) = step_probabilities(x, &wp);
            conservation = conservation.max((up + down - 1.0).abs());
            loops = loops.max((loop_product(x, &wp) - target).abs());
        }
    }
    rec.bound(
        "walk_conservation",
        conservation,
        1e-15,
        "max |p_up + p_down - 1|".into(),
    );
    rec.bound(
        "walk_loop",
        loops,
        1e-14,
        "max |loop product - 1/(4 cosh^2 xi)|".into(),
    );

    let mut matrix: f64 = 0.0;
    let mut mart: f64 = 0.0;
    for &xi in &[0.0, 0.1, 0.5, 1.0] {
        let wp = WalkParams::new(1.0, 1.0, xi).expect("valid walk");
        for &x0 in &[0.0, 3.0, -2.0] {
            for n in 0..=20 {
                let exact = exact_walk_distribution(x0, n, &wp);
                let enumerated = enumerate_walk_distribution(x0, n, &wp);
                for (a, b) in exact.probabilities().iter().zip(enumerated.probabilities()) {
                    matrix = matrix.max((a - b).abs());
                }
                let m: f64 = exact.iter().map(|(x, p)| p * (xi * x).tanh()).sum();
                mart = mart.max((m - (xi * x0).tanh()).abs());
            }
        }
    }
    rec.bound(
        "walk_exact_law",
        matrix,
        1e-12,
        "closed form vs one-step propagation, n <= 20".into(),
    );
    rec.bound(
        "walk_martingale",
        mart,
        1e-12,
        "max |sum tanh(xi x) P(x, n) - tanh(xi x0)|".into(),
    );
}

fn fpe_checks(cfg: &VerifyConfig, rec: &mut Recorder) -> Result<()> {
    let p = &cfg.params;
    let grid = FpeGrid::covering(0.0, p, 0.01, 1e-4, 1.0)?;
    let sol = solve_fpe(0.0, p, &grid)?;
    let reference = fpe_reference(0.0, p, &grid, 1.0)?;
    let gap = l1_gap(&sol.last().density, &reference, grid.h());
    rec.bound(
        "fpe_l1",
        gap,
        1e-3,
        format!("h = {}, dt = 1e-4, t = 1, x0 = 0", grid.h()),
    );
    rec.bound("fpe_mass", sol.mass_defect, 1e-8, "max |1 - mass|".into());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_names() {
        assert_eq!("walk".parse::<CheckGroup>().unwrap(), CheckGroup::Walk);
        assert!("everything".parse::<CheckGroup>().is_err());
    }

    #[test]
    fn walk_only_runs_walk_checks() {
        let mut cfg = VerifyConfig::new(ProcessParams::new(1.0, 1.0).unwrap());
        cfg.only = vec![CheckGroup::Walk];
        let r = run_verification(&cfg).unwrap();
        assert!(r.passed, "{:?}", r.failures().collect::<Vec<_>>());
        assert!(r.checks.iter().all(|c| c.group == CheckGroup::Walk));
        assert_eq!(r.checks.len(), 4);
    }

    #[test]
    fn flipped_drift_fails_sampling_checks() {
        let mut cfg = VerifyConfig::new(ProcessParams::new(1.0, 1.0).unwrap());
        cfg.only = vec![CheckGroup::Sampler, CheckGroup::Msd];
        cfg.n = 20_000;
        assert!(run_verification(&cfg).unwrap().passed);
        cfg.flip_drift = true;
        let r = run_verification(&cfg).unwrap();
        assert!(!r.passed);
        let failed: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
        assert!(
            failed.contains(&"mean") && failed.contains(&"msd_level"),
            "{failed:?}"
        );
    }
}
