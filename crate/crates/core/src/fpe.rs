//! Crank-Nicolson solver for the forward equation
//! `dp/dt = -d/dx [a(x) p] + (sigma^2 / 2) d2p/dx2`.
//!
//! Densities live at cell centres. The flux through each interior face is
//! `a (p_L + p_R) / 2 - (sigma^2 / 2)(p_R - p_L) / h` and the two outer faces
//! carry no flux, so the discrete mass is conserved by every step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{transition_pdf, TransitionQuery};
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::quad::{integrate, QuadConfig};
use crate::special::pairwise_sum;
use crate::stats::{fit_order, OrderFit};

/// Smallest accepted number of cells.
pub const MIN_CELLS: usize = 16;

/// Mass defect tolerated by the solver before it reports a numerical error.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub dt_pde: f64,
    pub t_final: f64,
}

impl FpeGrid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize, dt_pde: f64, t_final: f64) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            n_cells,
            dt_pde,
            t_final,
        };
        g.check()?;
        Ok(g)
    }

    /// Grid with spacing close to `h` whose domain satisfies the width
    /// requirement of [`solve_fpe`] with two extra standard deviations.
    pub fn covering(
        x0: f64,
        params: &ProcessParams,
        h: f64,
        dt_pde: f64,
        t_final: f64,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::domain(format!("cell width must be > 0, got {h}")));
        }
        let half = params.v_d() * t_final + 10.0 * params.sigma() * t_final.sqrt();
        let n_cells = ((2.0 * half / h).ceil() as usize).max(MIN_CELLS);
        let width = n_cells as f64 * h;
        Self::new(x0 - width / 2.0, x0 + width / 2.0, n_cells, dt_pde, t_final)
    }

    fn check(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::domain(format!(
                "need x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_cells < MIN_CELLS {
            return Err(Error::domain(format!(
                "need at least {MIN_CELLS} cells, got {}",
                self.n_cells
            )));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::domain(format!(
                "t_final must be > 0, got {}",
                self.t_final
            )));
        }
        if !(self.dt_pde > 0.0) || self.dt_pde > self.t_final {
            return Err(Error::domain(format!(
                "dt_pde must lie in (0, t_final], got {}",
                self.dt_pde
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n_cells)
            .map(|i| self.x_min + (i as f64 + 0.5) * h)
            .collect()
    }

    /// Number of time steps; the step actually used is `t_final / n_steps`.
    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt_pde) * (1.0 - 1e-12))
            .ceil()
            .max(1.0) as usize
    }

    /// Same domain with half the cell width and a quarter of the time step.
    pub fn refined(&self) -> Self {
        Self {
            n_cells: 2 * self.n_cells,
            dt_pde: self.dt_pde / 4.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeSolution {
    pub grid: FpeGrid,
    /// Densities at the requested times, negatives clamped to zero.
    pub snapshots: Vec<Snapshot>,
    /// `sum p_i h` per snapshot, before clamping.
    pub mass_history: Vec<f64>,
    /// Largest `|1 - mass|` over the snapshots.
    pub mass_defect: f64,
    /// Smallest density value before clamping.
    pub min_density: f64,
    /// `v_d dt / h > 1`: stable, but the drift is poorly resolved in time.
    pub courant_warning: bool,
}

impl FpeSolution {
    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("a solution has at least one snapshot")
    }
}

fn check_domain(x0: f64, params: &ProcessParams, grid: &FpeGrid) -> Result<()> {
    grid.check()?;
    if !(x0 > grid.x_min && x0 < grid.x_max) {
        return Err(Error::domain(format!(
            "x0 = {x0} lies outside the domain [{}, {}]",
            grid.x_min, grid.x_max
        )));
    }
    let reach = params.v_d() * grid.t_final + 8.0 * params.sigma() * grid.t_final.sqrt();
    if grid.x_min > x0 - reach || grid.x_max < x0 + reach {
        return Err(Error::domain(format!(
            "domain [{}, {}] too narrow: need at least [{}, {}] (x0 -/+ (v_d t + 8 sigma sqrt(t)))",
            grid.x_min,
            grid.x_max,
            x0 - reach,
            x0 + reach
        )));
    }
    Ok(())
}

/// Solves the forward equation of the merged process and returns the
/// density at `t_final` (and at `t = 0`).
pub fn solve_fpe(x0: f64, params: &ProcessParams, grid: &FpeGrid) -> Result<FpeSolution> {
    solve_fpe_at(x0, params, grid, &[0.0, grid.t_final])
}

/// As [`solve_fpe`], with snapshots at `times` (rounded to the nearest step).
pub fn solve_fpe_at(
    x0: f64,
    params: &ProcessParams,
    grid: &FpeGrid,
    times: &[f64],
) -> Result<FpeSolution> {
    check_domain(x0, params, grid)?;
    let v = params.v_d();
    let kappa = params.kappa();
    solve_with_drift(
        x0,
        |x| v * (kappa * x).tanh(),
        v,
        params.sigma(),
        grid,
        times,
    )
}

/// Forward equation with an arbitrary drift `a(x)` bounded by `bound`.
pub fn solve_with_drift<A: Fn(f64) -> f64>(
    x0: f64,
    drift: A,
    bound: f64,
    sigma: f64,
    grid: &FpeGrid,
    times: &[f64],
) -> Result<FpeSolution> {
    grid.check()?;
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    if !(x0 > grid.x_min && x0 < grid.x_max) {
        return Err(Error::domain(format!(
            "x0 = {x0} lies outside the domain [{}, {}]",
            grid.x_min, grid.x_max
        )));
    }
    if times.is_empty()
        || times
            .iter()
            .any(|&t| !(t >= 0.0) || t > grid.t_final * (1.0 + 1e-12))
    {
        return Err(Error::domain("snapshot times must lie in [0, t_final]"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("snapshot times must be non-decreasing"));
    }

    let n = grid.n_cells;
    let h = grid.h();
    let n_steps = grid.n_steps();
    let dt = grid.t_final / n_steps as f64;
    let courant_warning = bound * dt / h > 1.0;
    if courant_warning {
        log::warn!(
            "drift Courant number {:.3} exceeds 1; the solution is stable but the drift is under-resolved in time",
            bound * dt / h
        );
    }

    // (L p)_i = lower_i p_{i-1} + diag_i p_i + upper_i p_{i+1}
    let d = 0.5 * sigma * sigma;
    let faces: Vec<f64> = (1..n).map(|i| drift(grid.x_min + i as f64 * h)).collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for (f, &a) in faces.iter().enumerate() {
        // face between cells f and f + 1
        let left = (a / 2.0 + d / h) / h;
        let right = (-a / 2.0 + d / h) / h;
        diag[f] -= left;
        upper[f] += right;
        lower[f + 1] += left;
        diag[f + 1] -= right;
    }

    let centers = grid.centers();
    let width = 2.0 * h;
    let mut p: Vec<f64> = centers
        .iter()
        .map(|x| (-0.5 * ((x - x0) / width).powi(2)).exp())
        .collect();
    let mass0 = pairwise_sum(&p) * h;
    p.iter_mut().for_each(|v| *v /= mass0);

    let half = 0.5 * dt;
    let a_sub: Vec<f64> = lower.iter().map(|l| -half * l).collect();
    let a_diag: Vec<f64> = diag.iter().map(|c| 1.0 - half * c).collect();
    let a_sup: Vec<f64> = upper.iter().map(|u| -half * u).collect();
    let solver = Tridiagonal::factor(&a_sub, &a_diag, &a_sup)?;

    let targets: Vec<usize> = times
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(n_steps))
        .collect();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut mass_history = Vec::with_capacity(times.len());
    let mut min_density = f64::INFINITY;
    let mut rhs = vec![0.0; n];
    let mut next_target = 0;
    for step in 0..=n_steps {
        while next_target < targets.len() && targets[next_target] == step {
            let mass = pairwise_sum(&p) * h;
            min_density = p.iter().copied().fold(min_density, f64::min);
            mass_history.push(mass);
            snapshots.push(Snapshot {
                t: step as f64 * dt,
                density: p.iter().map(|&v| v.max(0.0)).collect(),
            });
            next_target += 1;
        }
        if step == n_steps || next_target == targets.len() {
            break;
        }
        for i in 0..n {
            let mut lp = diag[i] * p[i];
            if i > 0 {
                lp += lower[i] * p[i - 1];
            }
            if i + 1 < n {
                lp += upper[i] * p[i + 1];
            }
            rhs[i] = p[i] + half * lp;
        }
        solver.solve(&rhs, &mut p);
    }

    let mass_defect = mass_history
        .iter()
        .map(|m| (1.0 - m).abs())
        .fold(0.0, f64::max);
    if mass_defect > MASS_TOLERANCE {
        return Err(Error::Numerical {
            message: "forward solver lost probability mass".into(),
            estimate: 1.0 - mass_defect,
            error: mass_defect,
        });
    }
    Ok(FpeSolution {
        grid: *grid,
        snapshots,
        mass_history,
        mass_defect,
        min_density,
        courant_warning,
    })
}

/// LU factors of a tridiagonal matrix for repeated solves
/// (forward sweep then back substitution).
struct Tridiagonal {
    sub: Vec<f64>,
    inv_pivot: Vec<f64>,
    sup_scaled: Vec<f64>,
}

impl Tridiagonal {
    fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut inv_pivot = vec![0.0; n];
        let mut sup_scaled = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = diag[i] - if i > 0 { sub[i] * prev } else { 0.0 };
            if pivot.abs() < 1e-300 {
                return Err(Error::Numerical {
                    message: "singular tridiagonal system".into(),
                    estimate: pivot,
                    error: 0.0,
                });
            }
            inv_pivot[i] = 1.0 / pivot;
            sup_scaled[i] = sup[i] * inv_pivot[i];
            prev = sup_scaled[i];
        }
        Ok(Self {
            sub: sub.to_vec(),
            inv_pivot,
            sup_scaled,
        })
    }

    fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        let mut prev = 0.0;
        for i in 0..n {
            let r = rhs[i] - if i > 0 { self.sub[i] * prev } else { 0.0 };
            out[i] = r * self.inv_pivot[i];
            prev = out[i];
        }
        for i in (0..n - 1).rev() {
            out[i] -= self.sup_scaled[i] * out[i + 1];
        }
    }
}

/// Analytic density at time `t` started from the solver's initial profile,
/// `int N(y; x0, (2h)^2) p(x, t; y) dy`, at every cell centre.
pub fn fpe_reference(x0: f64, params: &ProcessParams, grid: &FpeGrid, t: f64) -> Result<Vec<f64>> {
    TransitionQuery::new(x0, x0, t)?;
    let width = 2.0 * grid.h();
    let cfg = QuadConfig {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_intervals: 2000,
    };
    grid.centers()
        .par_iter()
        .map(|&x| {
            let f = |z: f64| {
                let y = x0 + width * z;
                let k = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                k * transition_pdf(&TransitionQuery { x0: y, x, t }, params).unwrap_or(0.0)
            };
            integrate(f, -12.0, 12.0, cfg).map(|q| q.value)
        })
        .collect()
}

/// `sum |p_i - q_i| h`.
pub fn l1_gap(p: &[f64], q: &[f64], h: f64) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeConvergence {
    pub cell_widths: Vec<f64>,
    pub l1_gaps: Vec<f64>,
    pub fit: OrderFit,
}

impl FpeConvergence {
    pub fn order(&self) -> f64 {
        self.fit.slope
    }
}

/// L1 gap to [`fpe_reference`] at `t_final` on `base` and on `refinements`
/// successively refined grids, with the fitted order of the gap in `h`.
pub fn fpe_convergence_order(
    x0: f64,
    params: &ProcessParams,
    base: &FpeGrid,
    refinements: usize,
) -> Result<FpeConvergence> {
    if refinements < 2 {
        return Err(Error::domain(format!(
            "order fitting needs at least 2 refinements, got {refinements}"
        )));
    }
    let mut grid = *base;
    let mut cell_widths = Vec::new();
    let mut l1_gaps = Vec::new();
    for _ in 0..=refinements {
        let sol = solve_fpe(x0, params, &grid)?;
        let reference = fpe_reference(x0, params, &grid, grid.t_final)?;
        l1_gaps.push(l1_gap(&sol.last().density, &reference, grid.h()));
        cell_widths.push(grid.h());
        grid = grid.refined();
    }
    let fit = fit_order(&cell_widths, &l1_gaps)?;
    Ok(FpeConvergence {
        cell_widths,
        l1_gaps,
        fit,
    })
}
