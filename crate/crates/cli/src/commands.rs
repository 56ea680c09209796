use std::path::PathBuf;
use std::str::FromStr;

use merged_diffusion::analytic::{exact_ensemble, exact_path_ensemble, msd_exact};
use merged_diffusion::fpe::{fpe_reference, l1_gap, solve_fpe_at, FpeGrid};
use merged_diffusion::sde::{
    observed_ensemble, terminal_ensemble, BoundedDrift, IntegratorConfig, Scheme,
};
use merged_diffusion::stats::{
    chi_square_compatibility, msd_from_pairs, summarize, MIN_SUMMARY_SAMPLES,
};
use merged_diffusion::verify::{run_verification, CheckGroup, VerifyConfig};
use merged_diffusion::walk::{
    continuum_params, empirical_walk_distribution, exact_walk_distribution, walk_path_ensemble,
    walk_terminal_ensemble, walk_total_variation, WalkParams,
};
use merged_diffusion::{substream, Provenance};
use rand::RngCore;
use serde_json::{json, Map, Value};

use crate::config::{
    ascending, at_least, finite, positive, resolve_params, steps_for, Generator, ResolvedParams,
    Settings,
};
use crate::error::{CliError, KeyContext};
use crate::output::{document, num, sidecar, write_json, Table};

/// Maximum z-score accepted by the MSD flatness summary.
const MSD_Z_LIMIT: f64 = 5.0;
const MSD_ALPHA: f64 = 0.01;

fn out_path(s: &Settings, default: &str) -> PathBuf {
    s.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn scheme(g: Generator) -> Option<Scheme> {
    match g {
        Generator::Em => Some(Scheme::EulerMaruyama),
        Generator::Heun => Some(Scheme::Heun),
        _ => None,
    }
}

fn provenance(g: Generator) -> Provenance {
    match g {
        Generator::Exact => Provenance::Exact,
        Generator::Em => Provenance::EulerMaruyama,
        Generator::Heun => Provenance::Heun,
        Generator::Walk => Provenance::Walk,
    }
}

/// Lattice matching the process at spacing `dx`; its time step is `dx^2 / sigma^2`.
fn walk_lattice(
    s: &Settings,
    rp: &ResolvedParams,
    cfg: &mut Map<String, Value>,
) -> Result<WalkParams, CliError> {
    let dx = positive("dx", s.dx.unwrap_or(0.05))?;
    let wp = WalkParams::from_continuum(&rp.process, dx).key("dx")?;
    cfg.insert("dx".into(), json!(dx));
    cfg.insert("walk_dt".into(), json!(wp.dt()));
    cfg.insert("xi".into(), json!(wp.xi()));
    Ok(wp)
}

fn integrator_dt(s: &Settings, cfg: &mut Map<String, Value>) -> Result<f64, CliError> {
    let dt = positive("dt", s.dt.unwrap_or(1e-3))?;
    cfg.insert("dt".into(), json!(dt));
    Ok(dt)
}

pub fn sample(s: &Settings) -> Result<(), CliError> {
    let rp = resolve_params(s)?;
    let p = rp.process;
    let x0 = finite("x0", s.x0.unwrap_or(0.0))?;
    let t = positive("t", s.t.unwrap_or(1.0))?;
    let n = at_least("n", s.n.unwrap_or(1000), 1)?;
    let seed = s.seed();
    let generator = s.generator.unwrap_or(Generator::Exact);
    let out = out_path(s, "samples.csv");
    let meta = sidecar(&out)?;

    let mut cfg = Map::new();
    rp.echo(&mut cfg);
    cfg.insert("x0".into(), json!(x0));
    cfg.insert("t".into(), json!(t));
    cfg.insert("n".into(), json!(n));
    cfg.insert("generator".into(), json!(generator.as_str()));
    let samples = match generator {
        Generator::Exact => exact_ensemble(x0, t, &p, seed, n).key("t")?,
        Generator::Em | Generator::Heun => {
            let dt = integrator_dt(s, &mut cfg)?;
            let steps = steps_for("dt", t, dt)?;
            let ic = IntegratorConfig::new(scheme(generator).unwrap(), dt, steps).key("dt")?;
            terminal_ensemble(x0, &BoundedDrift::tanh(&p), &ic, &p, seed, n)
        }
        Generator::Walk => {
            let wp = walk_lattice(s, &rp, &mut cfg)?;
            let steps = steps_for("dx", t, wp.dt())?;
            walk_terminal_ensemble(x0, steps, &wp, seed, n)
                .iter()
                .map(|st| st.position(x0, &wp))
                .collect()
        }
    };
    cfg.insert("out".into(), json!(out));

    let mut table = Table::create(&out, &["x"])?;
    for &x in &samples {
        table.row([num(x)])?;
    }
    table.finish()?;

    let mut doc = document("sample", Some(seed), cfg);
    doc.insert("provenance".into(), json!(provenance(generator).as_str()));
    let summary = if n >= MIN_SUMMARY_SAMPLES {
        json!(summarize(&samples, &p, t, x0).key("n")?)
    } else {
        Value::Null
    };
    doc.insert("summary".into(), summary);
    write_json(&meta, &doc)
}

/// Observation grid: `--t-grid` with 0 prepended, or multiples of `step` up to `--t`.
fn observation_times(s: &Settings, step: f64) -> Result<Vec<f64>, CliError> {
    if let Some(grid) = &s.t_grid {
        ascending("t_grid", grid)?;
        if grid[0] < 0.0 {
            return Err(CliError::config("t_grid", "times must be >= 0"));
        }
        let mut times = Vec::with_capacity(grid.len() + 1);
        if grid[0] > 0.0 {
            times.push(0.0);
        }
        times.extend_from_slice(grid);
        return Ok(times);
    }
    let t = positive("t", s.t.unwrap_or(1.0))?;
    let k = steps_for("t", t, step)?;
    Ok((0..=k).map(|i| i as f64 * step).collect())
}

pub fn paths(s: &Settings) -> Result<(), CliError> {
    let rp = resolve_params(s)?;
    let p = rp.process;
    let x0 = finite("x0", s.x0.unwrap_or(0.0))?;
    let n = at_least("n", s.n.unwrap_or(10), 1)?;
    let seed = s.seed();
    let generator = s.generator.unwrap_or(Generator::Exact);
    let out = out_path(s, "paths.csv");
    let meta = sidecar(&out)?;

    let mut cfg = Map::new();
    rp.echo(&mut cfg);
    cfg.insert("x0".into(), json!(x0));
    cfg.insert("n".into(), json!(n));
    cfg.insert("generator".into(), json!(generator.as_str()));
    let (times, positions): (Vec<f64>, Vec<Vec<f64>>) = match generator {
        Generator::Exact => {
            let dt = positive("dt", s.dt.unwrap_or(0.01))?;
            let times = observation_times(s, dt)?;
            if s.t_grid.is_none() {
                cfg.insert("dt".into(), json!(dt));
            }
            let ens = exact_path_ensemble(x0, &times, &p, seed, n).key("t_grid")?;
            let pos = ens.iter().map(|path| path.positions().to_vec()).collect();
            (times, pos)
        }
        Generator::Em | Generator::Heun => {
            let dt = integrator_dt(s, &mut cfg)?;
            let times = observation_times(s, dt)?;
            let steps = times
                .iter()
                .map(|&ti| steps_for("t_grid", ti, dt))
                .collect::<Result<Vec<_>, _>>()?;
            let last = *steps.last().unwrap();
            let ic =
                IntegratorConfig::new(scheme(generator).unwrap(), dt, last.max(1)).key("dt")?;
            let pos = observed_ensemble(x0, &BoundedDrift::tanh(&p), &ic, &p, seed, n, &steps)
                .key("t_grid")?;
            (times, pos)
        }
        Generator::Walk => {
            let wp = walk_lattice(s, &rp, &mut cfg)?;
            let times = observation_times(s, wp.dt())?;
            let steps = times
                .iter()
                .map(|&ti| steps_for("t_grid", ti, wp.dt()))
                .collect::<Result<Vec<_>, _>>()?;
            let last = (*steps.last().unwrap()).max(1);
            let ens = walk_path_ensemble(x0, last, &wp, seed, n).key("t_grid")?;
            let pos = ens
                .iter()
                .map(|path| steps.iter().map(|&k| path.positions()[k]).collect())
                .collect();
            (times, pos)
        }
    };
    if let Some(grid) = &s.t_grid {
        cfg.insert("t_grid".into(), json!(grid));
    } else {
        cfg.insert("t".into(), json!(times.last()));
    }
    cfg.insert("out".into(), json!(out));

    let mut table = Table::create(&out, &["trajectory_id", "t", "x"])?;
    for (id, xs) in positions.iter().enumerate() {
        let id = id.to_string();
        for (&t, &x) in times.iter().zip(xs) {
            table.row([id.clone(), num(t), num(x)])?;
        }
    }
    table.finish()?;

    let mut doc = document("paths", Some(seed), cfg);
    doc.insert("provenance".into(), json!(provenance(generator).as_str()));
    doc.insert("n_times".into(), json!(times.len()));
    write_json(&meta, &doc)
}

pub fn walk(s: &Settings) -> Result<(), CliError> {
    let steps = at_least("steps", s.steps.unwrap_or(10), 1)?;
    let x0 = finite("x0", s.x0.unwrap_or(0.0))?;
    let dx = positive("dx", s.dx.unwrap_or(1.0))?;
    let wp = match s.xi {
        Some(xi) => {
            if s.has_process_keys() {
                return Err(CliError::config(
                    "xi",
                    "give either --xi or process parameters, not both",
                ));
            }
            if !(xi.is_finite() && xi >= 0.0) {
                return Err(CliError::config(
                    "xi",
                    format!("must be finite and >= 0, got {xi}"),
                ));
            }
            let dt = positive("dt", s.dt.unwrap_or(1.0))?;
            WalkParams::new(dx, dt, xi).key("xi")?
        }
        None => {
            if s.dt.is_some() {
                return Err(CliError::config(
                    "dt",
                    "without --xi the step is dx^2 / sigma^2",
                ));
            }
            WalkParams::from_continuum(&resolve_params(s)?.process, dx).key("dx")?
        }
    };
    let limit = ResolvedParams::from_process(continuum_params(&wp).key("xi")?);
    let rp = if s.xi.is_none() {
        resolve_params(s)?
    } else {
        limit
    };
    let out = out_path(s, "walk_dist.csv");
    let meta = sidecar(&out)?;

    let mut cfg = Map::new();
    rp.echo(&mut cfg);
    cfg.insert("x0".into(), json!(x0));
    cfg.insert("xi".into(), json!(wp.xi()));
    cfg.insert("dx".into(), json!(wp.dx()));
    cfg.insert("dt".into(), json!(wp.dt()));
    cfg.insert("steps".into(), json!(steps));
    cfg.insert("exact".into(), json!(s.exact));

    let exact = exact_walk_distribution(x0, steps, &wp);
    let mut seed = None;
    let dist = if s.exact {
        exact.clone()
    } else {
        let n = at_least("n", s.n.unwrap_or(10_000), 1)?;
        cfg.insert("n".into(), json!(n));
        seed = Some(s.seed());
        let states = walk_terminal_ensemble(x0, steps, &wp, s.seed(), n);
        empirical_walk_distribution(x0, steps, &wp, &states).key("n")?
    };
    cfg.insert("out".into(), json!(out));

    let mut table = Table::create(&out, &["x", "prob"])?;
    for (x, prob) in dist.iter() {
        table.row([num(x), num(prob)])?;
    }
    table.finish()?;

    let mut doc = document("walk", seed, cfg);
    doc.insert("provenance".into(), json!(Provenance::Walk.as_str()));
    doc.insert("support_points".into(), json!(dist.len()));
    doc.insert("total".into(), json!(dist.total()));
    doc.insert(
        "loop_invariant".into(),
        json!(1.0 / (4.0 * wp.xi().cosh().powi(2))),
    );
    if !s.exact {
        doc.insert(
            "tv_to_exact".into(),
            json!(walk_total_variation(&dist, &exact).key("steps")?),
        );
    }
    write_json(&meta, &doc)
}

pub fn fpe(s: &Settings) -> Result<(), CliError> {
    let rp = resolve_params(s)?;
    let p = rp.process;
    let x0 = finite("x0", s.x0.unwrap_or(0.0))?;
    let h = positive("dx", s.dx.unwrap_or(0.05))?;
    let dt = positive("dt", s.dt.unwrap_or(1e-3))?;
    let times = match &s.t_grid {
        Some(grid) => {
            ascending("t_grid", grid)?;
            if grid[0] < 0.0 {
                return Err(CliError::config("t_grid", "times must be >= 0"));
            }
            grid.clone()
        }
        None => vec![0.0, positive("t", s.t.unwrap_or(1.0))?],
    };
    let t_final = *times.last().unwrap();
    positive(if s.t_grid.is_some() { "t_grid" } else { "t" }, t_final)?;
    let grid = FpeGrid::covering(x0, &p, h, dt.min(t_final), t_final).key("dx")?;
    let sol = solve_fpe_at(x0, &p, &grid, &times).key("dx")?;
    let reference = fpe_reference(x0, &p, &grid, t_final).key("dx")?;
    let out = out_path(s, "fpe.csv");
    let meta = sidecar(&out)?;

    let mut cfg = Map::new();
    rp.echo(&mut cfg);
    cfg.insert("x0".into(), json!(x0));
    cfg.insert("dx".into(), json!(h));
    cfg.insert("dt".into(), json!(dt));
    cfg.insert("t_grid".into(), json!(times));
    cfg.insert("out".into(), json!(out));

    let centers = grid.centers();
    let mut table = Table::create(&out, &["t", "x", "p"])?;
    for snap in &sol.snapshots {
        let t = num(snap.t);
        for (&x, &d) in centers.iter().zip(&snap.density) {
            table.row([t.clone(), num(x), num(d)])?;
        }
    }
    table.finish()?;

    let mut doc = document("fpe", None, cfg);
    doc.insert("grid".into(), json!(grid));
    doc.insert("cell_width".into(), json!(grid.h()));
    doc.insert("time_steps".into(), json!(grid.n_steps()));
    doc.insert("mass_history".into(), json!(sol.mass_history));
    doc.insert("mass_defect".into(), json!(sol.mass_defect));
    doc.insert("min_density".into(), json!(sol.min_density));
    doc.insert("courant_warning".into(), json!(sol.courant_warning));
    doc.insert(
        "l1_gap_final".into(),
        json!(l1_gap(&sol.last().density, &reference, grid.h())),
    );
    write_json(&meta, &doc)
}

pub fn msd(s: &Settings) -> Result<(), CliError> {
    let rp = resolve_params(s)?;
    let p = rp.process;
    let t_grid = s.t_grid.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let x0_grid = s.x0_grid.clone().unwrap_or_else(|| vec![0.0, 1.0, 3.0]);
    ascending("t_grid", &t_grid)?;
    if t_grid[0] <= 0.0 {
        return Err(CliError::config("t_grid", "times must be > 0"));
    }
    if x0_grid.is_empty() || x0_grid.iter().any(|x| !x.is_finite()) {
        return Err(CliError::config(
            "x0_grid",
            "needs at least one finite value",
        ));
    }
    let tau = positive("tau", s.tau.unwrap_or(1.0))?;
    let n = at_least("n", s.n.unwrap_or(100_000), 2)?;
    let seed = s.seed();
    let generator = s.generator.unwrap_or(Generator::Exact);
    let out = out_path(s, "msd.csv");
    let meta = sidecar(&out)?;

    let mut cfg = Map::new();
    rp.echo(&mut cfg);
    cfg.insert("t_grid".into(), json!(t_grid));
    cfg.insert("x0_grid".into(), json!(x0_grid));
    cfg.insert("tau".into(), json!(tau));
    cfg.insert("n".into(), json!(n));
    cfg.insert("generator".into(), json!(generator.as_str()));
    let dt = match generator {
        Generator::Exact => None,
        Generator::Em | Generator::Heun => Some(integrator_dt(s, &mut cfg)?),
        Generator::Walk => {
            return Err(CliError::config(
                "generator",
                "msd supports exact, em and heun",
            ));
        }
    };
    cfg.insert("out".into(), json!(out));

    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &t in &t_grid {
        for &x0 in &x0_grid {
            // Each cell gets its own master seed so the estimates are independent.
            let cell_seed = substream(seed, cell).next_u64();
            cell += 1;
            let (early, late): (Vec<f64>, Vec<f64>) = match dt {
                None => exact_path_ensemble(x0, &[0.0, t, t + tau], &p, cell_seed, n)
                    .key("t_grid")?
                    .iter()
                    .map(|path| (path.positions()[1], path.positions()[2]))
                    .unzip(),
                Some(dt) => {
                    let k1 = steps_for("t_grid", t, dt)?;
                    let k2 = steps_for("tau", t + tau, dt)?;
                    let ic = IntegratorConfig::new(scheme(generator).unwrap(), dt, k2).key("dt")?;
                    observed_ensemble(
                        x0,
                        &BoundedDrift::tanh(&p),
                        &ic,
                        &p,
                        cell_seed,
                        n,
                        &[k1, k2],
                    )
                    .key("dt")?
                    .iter()
                    .map(|v| (v[0], v[1]))
                    .unzip()
                }
            };
            rows.push((t, x0, msd_from_pairs(&early, &late)));
        }
    }

    let mut table = Table::create(&out, &["t", "x0", "tau", "msd", "se"])?;
    for (t, x0, est) in &rows {
        table.row([num(*t), num(*x0), num(tau), num(est.value), num(est.se)])?;
    }
    table.finish()?;

    let exact = msd_exact(tau, &p).key("tau")?;
    let estimates: Vec<_> = rows.iter().map(|r| r.2).collect();
    let max_z = estimates
        .iter()
        .map(|e| e.z_score(exact))
        .fold(0.0, f64::max);
    let compat = if estimates.len() >= 2 {
        Some(chi_square_compatibility(&estimates).key("n")?)
    } else {
        None
    };
    let flat = max_z <= MSD_Z_LIMIT && compat.is_none_or(|c| c.p_value >= MSD_ALPHA);
    let mut doc = document("msd", Some(seed), cfg);
    doc.insert("provenance".into(), json!(provenance(generator).as_str()));
    doc.insert("exact_msd".into(), json!(exact));
    doc.insert("max_z".into(), json!(max_z));
    doc.insert("compatibility".into(), json!(compat));
    doc.insert(
        "flatness".into(),
        json!({ "z_limit": MSD_Z_LIMIT, "alpha": MSD_ALPHA, "passed": flat }),
    );
    write_json(&meta, &doc)
}

pub fn verify(s: &Settings) -> Result<(), CliError> {
    let rp = resolve_params(s)?;
    let mut vc = VerifyConfig::new(rp.process);
    if let Some(x0) = s.x0 {
        vc.x0 = finite("x0", x0)?;
    }
    if let Some(t) = s.t {
        vc.t = positive("t", t)?;
    }
    if let Some(n) = s.n {
        vc.n = at_least("n", n, 1000)?;
    }
    vc.seed = s.seed.unwrap_or(vc.seed);
    if let Some(only) = &s.only {
        vc.only = only
            .iter()
            .map(|g| CheckGroup::from_str(g.trim()).map_err(|e| CliError::config("only", e)))
            .collect::<Result<_, _>>()?;
    }
    vc.flip_drift = s.flip_drift;
    let out = out_path(s, "verify.json");

    let mut cfg = Map::new();
    rp.echo(&mut cfg);
    cfg.insert("x0".into(), json!(vc.x0));
    cfg.insert("t".into(), json!(vc.t));
    cfg.insert("n".into(), json!(vc.n));
    cfg.insert("only".into(), json!(vc.only));
    cfg.insert("flip_drift".into(), json!(vc.flip_drift));
    cfg.insert("out".into(), json!(out));

    let report = run_verification(&vc).key("config")?;
    for c in &report.checks {
        println!(
            "{} {:<18} {:>12.4e} (threshold {:.4e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let mut doc = document("verify", Some(vc.seed), cfg);
    doc.insert("passed".into(), json!(report.passed));
    doc.insert("checks".into(), json!(report.checks));
    write_json(&out, &doc)?;
    match report.failures().count() {
        0 => Ok(()),
        k => Err(CliError::Verification(k)),
    }
}
