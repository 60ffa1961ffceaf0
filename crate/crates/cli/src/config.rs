use std::fs;
use std::path::{Path, PathBuf};

use arnold_core::field::SphereBudget;
use arnold_core::hamiltonian::{HamiltonianModel, HamiltonianSpec};
use arnold_core::loop_space::ModeWindow;
use arnold_core::solver::{ClusterTolerance, ProbeBudget, SearchRegion, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Hamiltonian given inline or as a path relative to the config file.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum HamiltonianSource {
    Path(PathBuf),
    Inline(HamiltonianSpec),
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub starts: Option<usize>,
    pub newton_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub r0: Option<f64>,
    pub r_max: Option<f64>,
    pub cluster_lambda: Option<f64>,
    pub cluster_orbit: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSettings {
    #[serde(default = "default_sphere_starts")]
    pub starts: usize,
    #[serde(default = "default_sphere_iterations")]
    pub iterations: usize,
}

fn default_sphere_starts() -> usize {
    8
}

fn default_sphere_iterations() -> usize {
    40
}

impl Default for SphereSettings {
    fn default() -> Self {
        Self {
            starts: default_sphere_starts(),
            iterations: default_sphere_iterations(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    #[serde(default = "default_probe_samples")]
    pub samples: usize,
    #[serde(default = "default_probe_t_max")]
    pub t_max: f64,
}

fn default_probe_samples() -> usize {
    ProbeBudget::default().samples
}

fn default_probe_t_max() -> f64 {
    ProbeBudget::default().t_max
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopySettings {
    #[serde(default = "default_s_points")]
    pub s_points: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Defaults to `window - 1`.
    pub truncation: Option<u32>,
    #[serde(default = "default_lambda_points")]
    pub lambda_points: usize,
    /// Golden-section samples around each local minimum of a path certificate.
    #[serde(default = "default_refine")]
    pub refine: usize,
}

fn default_s_points() -> usize {
    21
}

fn default_tau() -> f64 {
    1e-3
}

fn default_lambda_points() -> usize {
    11
}

fn default_refine() -> usize {
    20
}

impl Default for HomotopySettings {
    fn default() -> Self {
        Self {
            s_points: default_s_points(),
            tau: default_tau(),
            truncation: None,
            lambda_points: default_lambda_points(),
            refine: default_refine(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub hamiltonian: HamiltonianSource,
    pub n: usize,
    /// Symmetric window `[-K, K]`.
    pub window: u32,
    pub samples: usize,
    pub lambda0: f64,
    #[serde(default)]
    pub eps: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub sphere: SphereSettings,
    #[serde(default)]
    pub probe: Option<ProbeSettings>,
    #[serde(default)]
    pub homotopy: HomotopySettings,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub window: Option<u32>,
    pub samples: Option<usize>,
}

/// A validated configuration with its Hamiltonian resolved.
pub struct Loaded {
    pub config: RunConfig,
    pub spec: HamiltonianSpec,
    pub model: Box<dyn HamiltonianModel>,
    pub window: ModeWindow,
    pub out: PathBuf,
}

fn read(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new(format!("cannot read {what} {}: {e}", path.display())))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::new(msg()))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::new(format!("invalid run config: {e}")))
    }

    fn validate(&self) -> Result<(), Failure> {
        check((1..=64).contains(&self.window), || {
            format!("window {} outside [1, 64]", self.window)
        })?;
        check(self.samples <= 1 << 16, || {
            format!("samples {} above 65536", self.samples)
        })?;
        check(self.lambda0.is_finite(), || "lambda0 must be finite".into())?;
        if let Some(e) = self.eps {
            check(e > 0.0 && e <= 0.25, || {
                format!("eps {e} outside (0, 0.25]")
            })?;
        }
        let s = &self.solver;
        check(s.starts.is_none_or(|v| (1..=100_000).contains(&v)), || {
            "solver.starts outside [1, 100000]".into()
        })?;
        check(s.newton_tol.is_none_or(|v| v > 0.0 && v < 1.0), || {
            "solver.newton_tol outside (0, 1)".into()
        })?;
        check(s.max_iter.is_none_or(|v| (1..=10_000).contains(&v)), || {
            "solver.max_iter outside [1, 10000]".into()
        })?;
        check(
            self.sphere.starts >= 1 && self.sphere.iterations >= 1,
            || "sphere budget must be positive".into(),
        )?;
        let h = &self.homotopy;
        check(h.s_points >= 2, || {
            "homotopy.s_points must be at least 2".into()
        })?;
        check(h.lambda_points >= 2, || {
            "homotopy.lambda_points must be at least 2".into()
        })?;
        check(h.tau > 0.0, || "homotopy.tau must be positive".into())?;
        if let Some(p) = &self.probe {
            check(p.samples >= 1 && p.t_max > 0.0, || {
                "probe settings must be positive".into()
            })?;
        }
        Ok(())
    }

    pub fn sphere_budget(&self) -> SphereBudget {
        SphereBudget {
            starts: self.sphere.starts,
            iterations: self.sphere.iterations,
            seed: self.seed,
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, Failure> {
        let mut c = SolverConfig::standard(self.n, self.lambda0, self.seed);
        let s = &self.solver;
        if let Some(v) = s.starts {
            c.starts = v;
        }
        if let Some(v) = s.newton_tol {
            c.newton_tol = v;
        }
        if let Some(v) = s.max_iter {
            c.max_iter = v;
        }
        if s.r0.is_some() || s.r_max.is_some() {
            c.region = SearchRegion::new(
                s.r0.unwrap_or(c.region.r0),
                s.r_max.unwrap_or(c.region.r_max),
                self.lambda0,
            )
            .map_err(Failure::from)?;
        }
        Ok(c)
    }

    pub fn cluster_tolerance(&self) -> ClusterTolerance {
        let d = ClusterTolerance::default();
        ClusterTolerance {
            lambda: self.solver.cluster_lambda.unwrap_or(d.lambda),
            orbit: self.solver.cluster_orbit.unwrap_or(d.orbit),
        }
    }

    pub fn probe_budget(&self) -> Option<ProbeBudget> {
        self.probe.as_ref().map(|p| ProbeBudget {
            samples: p.samples,
            t_max: p.t_max,
            seed: self.seed,
            ..ProbeBudget::default()
        })
    }
}

pub fn load(path: &Path, over: &Overrides) -> Result<Loaded, Failure> {
    let mut config = RunConfig::from_json(&read(path, "config")?)?;
    if let Some(s) = over.seed {
        config.seed = s;
    }
    if let Some(w) = over.window {
        config.window = w;
    }
    if let Some(m) = over.samples {
        config.samples = m;
    }
    config.validate()?;
    let spec = match &config.hamiltonian {
        HamiltonianSource::Inline(s) => s.clone(),
        HamiltonianSource::Path(p) => {
            let p = if p.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p.clone()
            };
            HamiltonianSpec::from_json(&read(&p, "Hamiltonian")?)
                .map_err(|e| Failure::new(format!("invalid Hamiltonian {}: {e}", p.display())))?
        }
    };
    check(spec.n() == config.n, || {
        format!(
            "config n = {} but the Hamiltonian has n = {}",
            config.n,
            spec.n()
        )
    })?;
    let model = spec.build()?;
    let window = ModeWindow::symmetric(config.window, 2 * config.n + 2)?;
    let floor = window.nonlinear_floor();
    check(config.samples >= floor, || {
        format!(
            "samples = {} is below the aliasing floor {floor} of window [-{1}, {1}]",
            config.samples, config.window
        )
    })?;
    let out = over
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("arnold-out"));
    Ok(Loaded {
        config,
        spec,
        model,
        window,
        out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "hamiltonian": {"type": "diagonal_quadratic", "n": 1, "a": [0.6283185307179586, 2.199114857512855]},
        "n": 1, "window": 4, "samples": 33, "lambda0": -0.5, "seed": 7
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.homotopy.s_points, 21);
        assert_eq!(c.solver_config().unwrap().starts, 100);
    }

    #[test]
    fn seed_is_mandatory_and_fields_are_checked() {
        assert!(RunConfig::from_json(&MINIMAL.replace(", \"seed\": 7", "")).is_err());
        assert!(RunConfig::from_json(
            &MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1")
        )
        .is_err());
        let c = RunConfig::from_json(&MINIMAL.replace("\"window\": 4", "\"window\": 0")).unwrap();
        assert!(c.validate().is_err());
    }
}
