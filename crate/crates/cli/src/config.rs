//! Run configuration read from TOML.

use crate::error::CliError;
use gluing_core::delaunay::DelaunaySettings;
use gluing_core::fracops::{KernelGridSpec, ProblemParams};
use gluing_core::reduced_system::ReducedSettings;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSection,
    #[serde(default)]
    pub grids: GridsSection,
    pub points: PointsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub accept: AcceptSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub n: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsSection {
    /// Lower end of the sampled kernel range; below it the singular law is used.
    pub kernel_xi_min: f64,
    /// Upper end of the sampled kernel range; unset means the default for the parameters.
    pub kernel_xi_max: Option<f64>,
    pub kernel_per_efold: usize,
    /// Grid points per period of the Delaunay profiles.
    pub delaunay_points: usize,
}

impl Default for GridsSection {
    fn default() -> Self {
        GridsSection {
            kernel_xi_min: gluing_core::fracops::XI_FLOOR,
            kernel_xi_max: None,
            kernel_per_efold: 1000,
            delaunay_points: 512,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub coordinates: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Neck length for the single-L stages.
    pub l: f64,
    /// Neck lengths for profile sweeps and the decay fit.
    pub l_sweep: Vec<f64>,
    pub tau: Option<f64>,
    /// Ladder depth J.
    pub depth: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Random points for the positivity check.
    pub positivity_samples: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            l: 12.0,
            l_sweep: vec![8.0, 10.0, 12.0, 14.0],
            tau: None,
            depth: 8,
            tol: 1e-10,
            max_iter: 40,
            positivity_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub cache: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            cache: PathBuf::from("cache"),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptSection {
    pub decay_l: Vec<f64>,
    /// Criteria to run; empty means all.
    pub criteria: Vec<usize>,
}

impl Default for AcceptSection {
    fn default() -> Self {
        AcceptSection {
            decay_l: vec![8.0, 10.0, 12.0, 14.0],
            criteria: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything except the parameter rules, which `problem_params` enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let s = &self.solver;
        if !(s.tol > 0.0) {
            return bad(format!("solver.tol = {} must be positive", s.tol));
        }
        if let Some(t) = s.tau {
            if !(t > 0.0) {
                return bad(format!("solver.tau = {t} must be positive"));
            }
        }
        if s.max_iter == 0 || s.depth == 0 {
            return bad("solver.max_iter and solver.depth must be positive".into());
        }
        if !(s.l > 0.0) || s.l_sweep.iter().any(|l| !(*l > 0.0)) {
            return bad("neck lengths must be positive".into());
        }
        let g = &self.grids;
        if !(g.kernel_xi_min > 0.0) || g.kernel_xi_max.is_some_and(|x| !(x > g.kernel_xi_min)) {
            return bad("grids: kernel range must be positive and increasing".into());
        }
        if g.delaunay_points == 0 || g.delaunay_points % 4 != 0 {
            return bad(format!("grids.delaunay_points = {} must be a positive multiple of 4", g.delaunay_points));
        }
        if g.kernel_per_efold < 10 {
            return bad("grids.kernel_per_efold must be at least 10".into());
        }
        let pts = &self.points;
        if pts.coordinates.len() != pts.q.len() {
            return bad(format!(
                "points: {} coordinates but {} q seeds",
                pts.coordinates.len(),
                pts.q.len()
            ));
        }
        if pts.coordinates.iter().any(|x| x.len() != self.params.n) {
            return bad(format!("points: every coordinate needs n = {} entries", self.params.n));
        }
        if self.accept.criteria.iter().any(|c| !(1..=12).contains(c)) {
            return bad("accept.criteria must lie in 1..=12".into());
        }
        Ok(())
    }

    pub fn problem_params(&self) -> Result<ProblemParams, CliError> {
        Ok(ProblemParams::new(self.params.n, self.params.gamma)?)
    }

    pub fn kernel_spec(&self, p: &ProblemParams) -> KernelGridSpec {
        let d = KernelGridSpec::default_for(p);
        KernelGridSpec {
            xi_min: self.grids.kernel_xi_min,
            xi_max: self.grids.kernel_xi_max.unwrap_or(d.xi_max),
            per_efold: self.grids.kernel_per_efold,
        }
    }

    pub fn delaunay_settings(&self) -> DelaunaySettings {
        DelaunaySettings {
            n_grid: self.grids.delaunay_points,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            ..Default::default()
        }
    }

    pub fn reduced_settings(&self) -> ReducedSettings {
        ReducedSettings {
            tau: self.solver.tau,
            depth: self.solver.depth,
            inner_tol: self.solver.tol,
            outer_tol: self.solver.tol,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[params]\nn = 3\ngamma = 0.5\n[points]\ncoordinates = [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]\nq = [1.0, 1.0]\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.solver.depth, 8);
        assert_eq!(cfg.grids.delaunay_points, 512);
        assert_eq!(cfg.accept.decay_l.len(), 4);
    }

    #[test]
    fn rejects_bad_values() {
        let cfg: RunConfig = toml::from_str(&format!("{MINIMAL}[solver]\ntol = -1.0\n")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str(&MINIMAL.replace("q = [1.0, 1.0]", "q = [1.0]")).unwrap();
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<RunConfig>(&format!("{MINIMAL}[solver]\nbogus = 1\n")).is_err());
    }

    #[test]
    fn gamma_out_of_range_fails_params() {
        let cfg: RunConfig = toml::from_str(&MINIMAL.replace("gamma = 0.5", "gamma = 1.2")).unwrap();
        let e = cfg.problem_params().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
