//! Run configuration: a TOML file with `[grid]`, `[physics]`, `[solver]` and
//! `[output]` sections, every key optional and every unknown key an error.

use std::path::Path;

use serde::Deserialize;

use crate::density::DensityParams;
use crate::experiments::scenario::ScenarioSpec;
use crate::grid::GridSpec;
use crate::momentum::SimConfig;
use crate::operators::FluxMode;
use crate::{Error, Real, Result};

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub rho_floor: Option<f64>,
    /// Amplitude of a random divergence-free perturbation of the initial velocity.
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub poisson_tol: Option<f64>,
    pub viscous_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub flux_mode: Option<FluxModeName>,
    pub smoothing: Option<bool>,
    pub implicit_diffusion: Option<bool>,
    pub compensation: Option<bool>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FluxModeName {
    Upwind,
    Centered,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Steps between snapshots; 0 writes only the initial and final states.
    pub snapshot_every: Option<usize>,
    pub snapshots: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Scenario defaults overlaid with a configuration file.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub nx: usize,
    pub ny: usize,
    pub nu: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub rho_floor: f64,
    pub noise: f64,
    pub dt: f64,
    pub t_end: f64,
    pub poisson_tol: f64,
    pub viscous_tol: f64,
    pub max_iter: usize,
    pub flux_mode: FluxMode,
    pub smoothing: bool,
    pub implicit_diffusion: bool,
    pub compensation: bool,
    pub seed: u64,
    pub snapshot_every: usize,
    pub snapshots: bool,
}

impl Settings {
    pub fn resolve(spec: &ScenarioSpec, file: &ConfigFile) -> Result<Self> {
        let d = &spec.defaults;
        let nx = file.grid.nx.unwrap_or(d.nx);
        let ny = file.grid.ny.unwrap_or(d.ny);
        let h = (d.lx / nx as f64).min(d.ly / ny as f64);
        let s = Self {
            nx,
            ny,
            nu: file.physics.nu.unwrap_or(d.nu),
            alpha: file.physics.alpha.unwrap_or(d.alpha),
            epsilon: file.physics.epsilon.unwrap_or(d.epsilon),
            rho_floor: file.physics.rho_floor.unwrap_or(d.rho_floor),
            noise: file.physics.noise.unwrap_or(0.0),
            dt: file.solver.dt.unwrap_or_else(|| d.step.dt(h)),
            t_end: file.solver.t_end.unwrap_or(d.t_end),
            poisson_tol: file.solver.poisson_tol.unwrap_or(1e-10),
            viscous_tol: file.solver.viscous_tol.unwrap_or(1e-10),
            max_iter: file.solver.max_iter.unwrap_or(20_000),
            flux_mode: match file.solver.flux_mode {
                Some(FluxModeName::Centered) => FluxMode::Centered,
                _ => FluxMode::Upwind,
            },
            smoothing: file.solver.smoothing.unwrap_or(d.smoothing),
            implicit_diffusion: file.solver.implicit_diffusion.unwrap_or(false),
            compensation: file.solver.compensation.unwrap_or(true),
            seed: file.solver.seed.unwrap_or(0),
            snapshot_every: file.output.snapshot_every.unwrap_or(0),
            snapshots: file.output.snapshots.unwrap_or(true),
        };
        spec.check_parameters(s.nu, s.alpha)?;
        if !(s.noise >= 0.0 && s.noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise must be >= 0, got {}", s.noise)));
        }
        s.grid::<f64>(spec)?;
        s.sim_config::<f64>(spec).validate()?;
        Ok(s)
    }

    pub fn grid<T: Real>(&self, spec: &ScenarioSpec) -> Result<GridSpec<T>> {
        spec.grid(self.nx, self.ny)
    }

    pub fn sim_config<T: Real>(&self, spec: &ScenarioSpec) -> SimConfig<T> {
        let mut c = SimConfig::new(T::lit(self.nu), T::lit(self.alpha), T::lit(self.dt), T::lit(self.t_end));
        c.density = DensityParams {
            epsilon: T::lit(self.epsilon),
            rho_floor: T::lit(self.rho_floor),
            flux_mode: self.flux_mode,
            smoothing: self.smoothing,
            implicit_diffusion: self.implicit_diffusion,
        };
        c.poisson_tol = T::lit(self.poisson_tol);
        c.viscous_tol = T::lit(self.viscous_tol);
        c.max_iter = self.max_iter;
        c.compensation = self.compensation;
        c.forcing = spec.forcing();
        c
    }
}
