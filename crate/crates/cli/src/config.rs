//! Run settings from flags and an optional JSON config file.
//!
//! Every flag `--some-name` has a config key `some_name`; flags win over the
//! file. Missing values fall back to per-command defaults.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, ValueEnum};
use merged_diffusion::{params_from_physical, PhysicalParams, ProcessParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, KeyContext};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Exact,
    Em,
    Heun,
    Walk,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Exact => "exact",
            Generator::Em => "em",
            Generator::Heun => "heun",
            Generator::Walk => "walk",
        }
    }
}

#[derive(Debug, Default, Clone, Args)]
pub struct Settings {
    /// Terminal drift speed
    #[arg(long = "v-d", global = true, allow_negative_numbers = true)]
    pub v_d: Option<f64>,
    /// Noise amplitude
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Charge (with --physical)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Field strength (with --physical)
    #[arg(long = "E", global = true, allow_negative_numbers = true)]
    pub e: Option<f64>,
    /// Mobility (with --physical)
    #[arg(long = "mu-q", global = true, allow_negative_numbers = true)]
    pub mu_q: Option<f64>,
    /// Thermal energy (with --physical)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub kbt: Option<f64>,
    /// Read parameters from q, E, mu_q, kbt
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    pub physical: bool,
    /// Start position
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Observation time
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Comma-separated observation times
    #[arg(
        long = "t-grid",
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub t_grid: Option<Vec<f64>>,
    /// Comma-separated start positions (msd)
    #[arg(
        long = "x0-grid",
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub x0_grid: Option<Vec<f64>>,
    /// Lag time (msd)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Ensemble size
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Time step
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Lattice spacing or cell width
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub dx: Option<f64>,
    /// Walk bias parameter
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub xi: Option<f64>,
    /// Number of walk steps
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensemble generation
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file with snake_case keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Comma-separated verification groups
    #[arg(long, global = true, value_delimiter = ',')]
    pub only: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    pub generator: Option<Generator>,
    /// Exact walk distribution instead of Monte Carlo
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    pub exact: bool,
    /// Debug: sample the mean-reverting process (verify negative control)
    #[arg(long = "flip-drift", global = true, action = ArgAction::SetTrue)]
    pub flip_drift: bool,
}

fn parse<T: DeserializeOwned>(key: &str, value: &Value) -> Result<T, CliError> {
    serde_json::from_value(value.clone()).map_err(|e| CliError::config(key, e))
}

impl Settings {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let root: Value = serde_json::from_str(text).map_err(|e| CliError::config("config", e))?;
        let Value::Object(map) = root else {
            return Err(CliError::config(
                "config",
                "top level must be a JSON object",
            ));
        };
        let mut s = Settings::default();
        for (key, v) in &map {
            let k = key.as_str();
            match k {
                "v_d" => s.v_d = parse(k, v)?,
                "sigma" => s.sigma = parse(k, v)?,
                "q" => s.q = parse(k, v)?,
                "E" | "e" => s.e = parse(k, v)?,
                "mu_q" => s.mu_q = parse(k, v)?,
                "kbt" => s.kbt = parse(k, v)?,
                "physical" => s.physical = parse(k, v)?,
                "x0" => s.x0 = parse(k, v)?,
                "t" => s.t = parse(k, v)?,
                "t_grid" => s.t_grid = parse(k, v)?,
                "x0_grid" => s.x0_grid = parse(k, v)?,
                "tau" => s.tau = parse(k, v)?,
                "n" => s.n = parse(k, v)?,
                "dt" => s.dt = parse(k, v)?,
                "dx" => s.dx = parse(k, v)?,
                "xi" => s.xi = parse(k, v)?,
                "steps" => s.steps = parse(k, v)?,
                "seed" => s.seed = parse(k, v)?,
                "threads" => s.threads = parse(k, v)?,
                "out" => s.out = parse(k, v)?,
                "only" => s.only = parse(k, v)?,
                "generator" => s.generator = parse(k, v)?,
                "exact" => s.exact = parse(k, v)?,
                "flip_drift" => s.flip_drift = parse(k, v)?,
                "config" => return Err(CliError::config(k, "config files cannot nest")),
                _ => return Err(CliError::config(k, "unknown key")),
            }
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Values set in `self` win; the rest come from `file`.
    pub fn over(self, file: Settings) -> Settings {
        Settings {
            v_d: self.v_d.or(file.v_d),
            sigma: self.sigma.or(file.sigma),
            q: self.q.or(file.q),
            e: self.e.or(file.e),
            mu_q: self.mu_q.or(file.mu_q),
            kbt: self.kbt.or(file.kbt),
            physical: self.physical || file.physical,
            x0: self.x0.or(file.x0),
            t: self.t.or(file.t),
            t_grid: self.t_grid.or(file.t_grid),
            x0_grid: self.x0_grid.or(file.x0_grid),
            tau: self.tau.or(file.tau),
            n: self.n.or(file.n),
            dt: self.dt.or(file.dt),
            dx: self.dx.or(file.dx),
            xi: self.xi.or(file.xi),
            steps: self.steps.or(file.steps),
            seed: self.seed.or(file.seed),
            threads: self.threads.or(file.threads),
            out: self.out.or(file.out),
            config: self.config,
            only: self.only.or(file.only),
            generator: self.generator.or(file.generator),
            exact: self.exact || file.exact,
            flip_drift: self.flip_drift || file.flip_drift,
        }
    }

    pub fn has_process_keys(&self) -> bool {
        self.v_d.is_some() || self.sigma.is_some() || self.physical || self.has_physical_keys()
    }

    fn has_physical_keys(&self) -> bool {
        self.q.is_some() || self.e.is_some() || self.mu_q.is_some() || self.kbt.is_some()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Process parameters in force, remembering the physical block they came from.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedParams {
    pub process: ProcessParams,
    pub physical: Option<PhysicalParams>,
}

impl ResolvedParams {
    pub fn from_process(process: ProcessParams) -> Self {
        Self {
            process,
            physical: None,
        }
    }

    /// `v_d`, `sigma`, the derived `kappa` and the physical block if any.
    pub fn echo(&self, into: &mut Map<String, Value>) {
        into.insert("v_d".into(), json!(self.process.v_d()));
        into.insert("sigma".into(), json!(self.process.sigma()));
        into.insert("kappa".into(), json!(self.process.kappa()));
        if let Some(ph) = self.physical {
            into.insert(
                "physical".into(),
                json!({ "q": ph.q, "E": ph.e_field, "mu_q": ph.mu_q, "kbt": ph.kbt }),
            );
        }
    }
}

/// Defaults to `v_d = 1`, `sigma = 1` when neither block is given.
pub fn resolve_params(s: &Settings) -> Result<ResolvedParams, CliError> {
    if s.physical {
        if s.v_d.is_some() {
            return Err(CliError::config(
                "v_d",
                "cannot be combined with --physical",
            ));
        }
        if s.sigma.is_some() {
            return Err(CliError::config(
                "sigma",
                "cannot be combined with --physical",
            ));
        }
        let need = |key: &str, v: Option<f64>| {
            let v = v.ok_or_else(|| CliError::config(key, "required by --physical"))?;
            positive(key, v)
        };
        let ph = PhysicalParams {
            q: need("q", s.q)?,
            e_field: need("E", s.e)?,
            mu_q: need("mu_q", s.mu_q)?,
            kbt: need("kbt", s.kbt)?,
        };
        let process = params_from_physical(&ph).key("physical")?;
        return Ok(ResolvedParams {
            process,
            physical: Some(ph),
        });
    }
    if s.has_physical_keys() {
        let key = [("q", s.q), ("E", s.e), ("mu_q", s.mu_q), ("kbt", s.kbt)]
            .into_iter()
            .find(|(_, v)| v.is_some())
            .map(|(k, _)| k)
            .unwrap_or("q");
        return Err(CliError::config(key, "physical parameters need --physical"));
    }
    let v_d = s.v_d.unwrap_or(1.0);
    if !v_d.is_finite() || v_d < 0.0 {
        return Err(CliError::config(
            "v_d",
            format!("must be finite and >= 0, got {v_d}"),
        ));
    }
    let sigma = positive("sigma", s.sigma.unwrap_or(1.0))?;
    Ok(ResolvedParams::from_process(
        ProcessParams::new(v_d, sigma).key("v_d")?,
    ))
}

pub fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(
            key,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

pub fn finite(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be finite, got {v}")))
    }
}

pub fn at_least(key: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be >= {min}, got {v}")))
    }
}

/// Non-empty, finite, strictly increasing.
pub fn ascending(key: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::config(key, "must not be empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::config(key, "values must be finite"));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::config(key, "values must be strictly increasing"));
    }
    Ok(())
}

/// Step count `k` with `k dt = t` up to rounding.
pub fn steps_for(key: &str, t: f64, dt: f64) -> Result<usize, CliError> {
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(CliError::config(
            key,
            format!("time {t} is not a multiple of the step {dt}"),
        ));
    }
    Ok(k as usize)
}
