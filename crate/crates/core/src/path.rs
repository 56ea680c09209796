use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which generator produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Exact,
    EulerMaruyama,
    Heun,
    Walk,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Exact => "Exact",
            Provenance::EulerMaruyama => "EulerMaruyama",
            Provenance::Heun => "Heun",
            Provenance::Walk => "Walk",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trajectory sampled on a strictly increasing time grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    times: Vec<f64>,
    positions: Vec<f64>,
    provenance: Provenance,
}

/// Checks that `times` starts at 0 and is strictly increasing.
pub fn validate_time_grid(times: &[f64]) -> Result<()> {
    match times.first() {
        None => return Err(Error::domain("time grid is empty")),
        Some(&t0) if t0 != 0.0 => {
            return Err(Error::domain(format!(
                "time grid must start at 0, got {t0}"
            )))
        }
        _ => {}
    }
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::domain(format!(
                "time grid not strictly increasing at index {}: {} -> {}",
                i + 1,
                w[0],
                w[1]
            )));
        }
    }
    Ok(())
}

impl Path {
    pub fn new(times: Vec<f64>, positions: Vec<f64>, provenance: Provenance) -> Result<Self> {
        validate_time_grid(&times)?;
        if times.len() != positions.len() {
            return Err(Error::domain(format!(
                "{} times but {} positions",
                times.len(),
                positions.len()
            )));
        }
        Ok(Self {
            times,
            positions,
            provenance,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.positions[0]
    }

    pub fn end(&self) -> f64 {
        *self.positions.last().expect("path is never empty")
    }

    /// Position at a grid time, matched to within a relative `1e-9`.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let tol = 1e-9 * t.abs().max(1.0);
        let idx = self.times.partition_point(|&s| s < t - tol);
        match self.times.get(idx) {
            Some(&s) if (s - t).abs() <= tol => Some(self.positions[idx]),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Path::new(vec![], vec![], Provenance::Exact).is_err());
        assert!(Path::new(vec![0.1, 0.2], vec![0.0, 0.0], Provenance::Exact).is_err());
        assert!(Path::new(vec![0.0, 0.2, 0.2], vec![0.0; 3], Provenance::Exact).is_err());
        assert!(Path::new(vec![0.0, 1.0], vec![0.0], Provenance::Exact).is_err());
    }

    #[test]
    fn lookup_by_time() {
        let p = Path::new(vec![0.0, 0.5, 1.5], vec![1.0, 2.0, 3.0], Provenance::Walk).unwrap();
        assert_eq!(p.position_at(0.5), Some(2.0));
        assert_eq!(p.position_at(1.5 + 1e-12), Some(3.0));
        assert_eq!(p.position_at(1.0), None);
        assert_eq!(p.start(), 1.0);
        assert_eq!(p.end(), 3.0);
        assert_eq!(p.provenance().to_string(), "Walk");
    }
}
