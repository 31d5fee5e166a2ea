//! Registry of shipped test problems.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::grid::{FaceField, GridSpec, ScalarField, XBoundary};
use crate::momentum::{Forcing, ForcingFn, InitialVelocity, NoForcing};
use crate::{Error, Real, Result};

const COUETTE_DENSITY: f64 = 2.0;

pub const REGISTRY: [&str; 5] = ["couette_robin", "taylor_green_freeslip", "stratified_shear", "vacuum_floor", "lid_forced"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    CouetteRobin,
    TaylorGreenFreeSlip,
    StratifiedShear,
    VacuumFloor,
    LidForced,
}

/// Time step used when the configuration does not fix one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// `dt = c h`
    Advective(f64),
    /// `dt = c h^2`
    Diffusive(f64),
}

impl StepRule {
    pub fn dt(self, h: f64) -> f64 {
        match self {
            Self::Fixed(dt) => dt,
            Self::Advective(c) => c * h,
            Self::Diffusive(c) => c * h * h,
        }
    }
}

/// Parameter values a scenario runs with unless overridden.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Defaults {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub x_boundary: XBoundary,
    pub nu: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub rho_floor: f64,
    /// Smooth the initial density after clamping it to the floor.
    pub smoothing: bool,
    pub step: StepRule,
    pub t_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: &'static str,
    pub kind: ScenarioKind,
    pub defaults: Defaults,
    /// Admissible `nu` and `alpha` ranges (inclusive).
    pub nu_range: (f64, f64),
    pub alpha_range: (f64, f64),
}

/// Positive root of `k tan(k / 2) = 2 alpha` in `(0, pi)`: the slowest
/// decaying shear mode `cos(k (y - 1/2))` of a unit channel with Navier walls.
pub fn robin_wavenumber(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, PI);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid * (0.5 * mid).tan() < 2.0 * alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sample<T: Real>(f: impl Fn(f64, f64) -> f64) -> impl Fn(T, T) -> T {
    move |x: T, y: T| T::lit(f(x.as_f64(), y.as_f64()))
}

fn tg_stream(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin() / PI
}

fn stratified_density(y: f64) -> f64 {
    1.5 - 0.5 * (PI * y).cos()
}

fn vacuum_density(x: f64, y: f64) -> f64 {
    if (x - 0.5).hypot(y - 0.5) < 0.2 {
        0.0
    } else {
        1.0
    }
}

fn lid_forcing_stream(x: f64, y: f64) -> f64 {
    0.5 * (PI * x).sin().powi(2) * (PI * y).sin().powi(2) * y * y
}

pub fn scenario(name: &str) -> Result<ScenarioSpec> {
    let walls = |nu: f64, alpha: f64, step, t_end| Defaults {
        nx: 64,
        ny: 64,
        lx: 1.0,
        ly: 1.0,
        x_boundary: XBoundary::Walls,
        nu,
        alpha,
        epsilon: 0.0,
        rho_floor: 1e-3,
        smoothing: false,
        step,
        t_end,
    };
    let spec = match name {
        "couette_robin" => ScenarioSpec {
            name: "couette_robin",
            kind: ScenarioKind::CouetteRobin,
            defaults: Defaults { nx: 4, ny: 128, x_boundary: XBoundary::Periodic, ..walls(1e-2, 0.5, StepRule::Fixed(1e-2), 1.0) },
            nu_range: (0.0, f64::INFINITY),
            alpha_range: (0.0, f64::INFINITY),
        },
        "taylor_green_freeslip" => ScenarioSpec {
            name: "taylor_green_freeslip",
            kind: ScenarioKind::TaylorGreenFreeSlip,
            defaults: walls(1e-2, 0.0, StepRule::Diffusive(2.0), 0.1),
            nu_range: (0.0, f64::INFINITY),
            alpha_range: (0.0, 0.0),
        },
        "stratified_shear" => ScenarioSpec {
            name: "stratified_shear",
            kind: ScenarioKind::StratifiedShear,
            defaults: Defaults { x_boundary: XBoundary::Periodic, ..walls(1e-3, 0.5, StepRule::Advective(0.2), 0.5) },
            nu_range: (0.0, f64::INFINITY),
            alpha_range: (0.0, f64::INFINITY),
        },
        "vacuum_floor" => ScenarioSpec {
            name: "vacuum_floor",
            kind: ScenarioKind::VacuumFloor,
            defaults: Defaults { rho_floor: 1e-2, epsilon: 1e-4, smoothing: true, ..walls(1e-2, 0.5, StepRule::Advective(0.2), 0.5) },
            nu_range: (0.0, f64::INFINITY),
            alpha_range: (0.0, f64::INFINITY),
        },
        "lid_forced" => ScenarioSpec {
            name: "lid_forced",
            kind: ScenarioKind::LidForced,
            defaults: walls(1e-2, 1.0, StepRule::Advective(0.2), 1.0),
            nu_range: (0.0, f64::INFINITY),
            alpha_range: (0.0, f64::INFINITY),
        },
        other => {
            return Err(Error::UnknownScenario { name: other.to_string(), registry: REGISTRY.join(", ") });
        }
    };
    Ok(spec)
}

impl ScenarioSpec {
    pub fn grid<T: Real>(&self, nx: usize, ny: usize) -> Result<GridSpec<T>> {
        let d = &self.defaults;
        GridSpec::with_x_boundary(nx, ny, T::lit(d.lx), T::lit(d.ly), d.x_boundary)
    }

    pub fn check_parameters(&self, nu: f64, alpha: f64) -> Result<()> {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !inside(nu, self.nu_range) {
            return Err(Error::InvalidConfig(format!("{}: nu = {nu} outside {:?}", self.name, self.nu_range)));
        }
        if !inside(alpha, self.alpha_range) {
            return Err(Error::InvalidConfig(format!("{}: alpha = {alpha} outside {:?}", self.name, self.alpha_range)));
        }
        Ok(())
    }

    pub fn initial_density<T: Real>(&self, grid: GridSpec<T>) -> ScalarField<T> {
        match self.kind {
            ScenarioKind::CouetteRobin => ScalarField::constant(grid, T::lit(COUETTE_DENSITY)),
            ScenarioKind::TaylorGreenFreeSlip => ScalarField::constant(grid, T::one()),
            ScenarioKind::StratifiedShear => ScalarField::from_fn(grid, sample(|_, y| stratified_density(y))),
            ScenarioKind::VacuumFloor => ScalarField::from_fn(grid, sample(vacuum_density)),
            ScenarioKind::LidForced => ScalarField::from_fn(grid, sample(|_, y| 1.5 + 0.5 * ((y - 0.5) / 0.1).tanh())),
        }
    }

    pub fn initial_velocity<T: Real>(&self, grid: GridSpec<T>, alpha: f64) -> Result<InitialVelocity<T>> {
        Ok(match self.kind {
            ScenarioKind::CouetteRobin => {
                let k = robin_wavenumber(alpha);
                InitialVelocity::Velocity(FaceField::from_fn(grid, sample(move |_, y| (k * (y - 0.5)).cos()), |_, _| T::zero()))
            }
            ScenarioKind::StratifiedShear => {
                InitialVelocity::Velocity(FaceField::from_fn(grid, sample(|_, y| (PI * y).cos()), |_, _| T::zero()))
            }
            ScenarioKind::TaylorGreenFreeSlip => InitialVelocity::Velocity(FaceField::from_stream_function(grid, sample(tg_stream))?),
            ScenarioKind::LidForced => {
                InitialVelocity::Velocity(FaceField::from_stream_function(grid, sample(|x, y| 0.1 * tg_stream(x, y)))?)
            }
            ScenarioKind::VacuumFloor => {
                let u = FaceField::from_stream_function(grid, sample(tg_stream))?;
                let rho = self.initial_density(grid);
                let mut v = FaceField::zeros(grid);
                let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
                for j in 0..ny {
                    for i in 0..=nx {
                        v.set_ux(i, j, rho.at(i - 1, j).min(rho.at(i, j)) * u.ux(i, j));
                    }
                }
                for j in 0..=ny {
                    for i in 0..nx {
                        v.set_uy(i, j, rho.at(i, j - 1).min(rho.at(i, j)) * u.uy(i, j));
                    }
                }
                InitialVelocity::Momentum(v)
            }
        })
    }

    pub fn forcing<T: Real>(&self) -> Arc<dyn Forcing<T>> {
        match self.kind {
            ScenarioKind::LidForced => Arc::new(ForcingFn(|g: &GridSpec<T>, _t: T| {
                FaceField::from_stream_function(*g, sample(lid_forcing_stream)).expect("forcing stream function vanishes on walls")
            })),
            _ => Arc::new(NoForcing),
        }
    }

    /// Exact velocity at time `t`, when known.
    pub fn exact_velocity<T: Real>(&self, grid: GridSpec<T>, nu: f64, alpha: f64, t: f64) -> Result<Option<FaceField<T>>> {
        let decay = match self.kind {
            ScenarioKind::CouetteRobin => {
                let k = robin_wavenumber(alpha);
                (-nu * k * k * t / COUETTE_DENSITY).exp()
            }
            ScenarioKind::TaylorGreenFreeSlip => (-2.0 * PI * PI * nu * t).exp(),
            ScenarioKind::StratifiedShear if nu == 0.0 => 1.0,
            _ => return Ok(None),
        };
        Ok(match self.initial_velocity(grid, alpha)? {
            InitialVelocity::Velocity(u) => Some(u.scaled(T::lit(decay))),
            InitialVelocity::Momentum(_) => None,
        })
    }

    /// Exact density at time `t`, when known.
    pub fn exact_density<T: Real>(&self, grid: GridSpec<T>, nu: f64, alpha: f64, t: f64) -> Result<Option<ScalarField<T>>> {
        Ok(self.exact_velocity::<T>(grid, nu, alpha, t)?.map(|_| self.initial_density(grid)))
    }

    /// Inviscid reference `(rho, u)`: the scenario's exact Euler solution,
    /// which is stationary for every scenario that has one.
    pub fn euler_reference<T: Real>(&self, grid: GridSpec<T>, alpha: f64) -> Result<Option<(ScalarField<T>, FaceField<T>)>> {
        Ok(match self.kind {
            ScenarioKind::StratifiedShear | ScenarioKind::TaylorGreenFreeSlip | ScenarioKind::CouetteRobin => {
                let rho = self.initial_density(grid);
                self.exact_velocity(grid, 0.0, alpha, 0.0)?.map(|u| (rho, u))
            }
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityField;
    use crate::operators::{divergence, laplacian_navier};

    #[test]
    fn unknown_name_lists_registry() {
        match scenario("unknown") {
            Err(Error::UnknownScenario { registry, .. }) => {
                for name in REGISTRY {
                    assert!(registry.contains(name));
                }
            }
            other => panic!("unexpected {other:?}"),
        }
        for name in REGISTRY {
            assert_eq!(scenario(name).unwrap().name, name);
        }
    }

    #[test]
    fn wavenumber_solves_robin_relation() {
        for alpha in [0.0, 0.1, 0.5, 2.0, 50.0] {
            let k = robin_wavenumber(alpha);
            assert!((k * (0.5 * k).tan() - 2.0 * alpha).abs() < 1e-9 * (1.0 + alpha), "alpha = {alpha}");
        }
    }

    #[test]
    fn stratified_shear_oracle_is_initial_data() {
        let s = scenario("stratified_shear").unwrap();
        let g = s.grid::<f64>(8, 8).unwrap();
        let exact = s.exact_velocity::<f64>(g, 0.0, 0.5, 0.3).unwrap().unwrap();
        match s.initial_velocity::<f64>(g, 0.5).unwrap() {
            InitialVelocity::Velocity(u) => assert_eq!(u, exact),
            _ => panic!("velocity data expected"),
        }
        assert!(s.exact_velocity::<f64>(g, 1e-3, 0.5, 0.3).unwrap().is_none());
    }

    #[test]
    fn taylor_green_is_free_slip_eigenmode() {
        let s = scenario("taylor_green_freeslip").unwrap();
        let mut errs = vec![];
        for n in [32, 64] {
            let g = s.grid::<f64>(n, n).unwrap();
            let InitialVelocity::Velocity(faces) = s.initial_velocity(g, 0.0).unwrap() else { panic!() };
            assert!(divergence(&faces).max_abs() < 1e-12);
            let smooth = faces.clone();
            let u = VelocityField::from_faces(faces, 0.0).unwrap();
            let lap = laplacian_navier(&u, 0.0).unwrap();
            errs.push(lap.add_scaled(2.0 * PI * PI, &smooth).max_abs());
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn vacuum_momentum_vanishes_next_to_vacuum() {
        let s = scenario("vacuum_floor").unwrap();
        let g = s.grid::<f64>(32, 32).unwrap();
        let rho = s.initial_density(g);
        let InitialVelocity::Momentum(v) = s.initial_velocity(g, 0.5).unwrap() else { panic!() };
        for j in 0..32 {
            for i in 1..32 {
                if rho.at(i - 1, j).min(rho.at(i, j)) == 0.0 {
                    assert_eq!(v.ux(i, j), 0.0);
                }
            }
        }
    }
}
