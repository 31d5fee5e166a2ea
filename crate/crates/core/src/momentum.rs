//! Regularized momentum equation: density-weighted, linearly implicit
//! predictor with Navier walls, followed by a variable-density projection.

use std::fmt;
use std::sync::Arc;

use crate::density::{advance_density, regularize_initial_density, DensityParams, DensityUpdate};
use crate::grid::{FaceField, GridSpec, ScalarField, VelocityField};
use crate::linsolve::{bicgstab, pcg};
use crate::operators::{divergence, face_average, gradient, laplacian_stored, mass_fluxes, momentum_convection, scalar_laplacian_neumann};
use crate::{Error, Real, Result};

/// Body force per unit mass.
pub trait Forcing<T>: Send + Sync {
    /// Values on every face of `grid` at time `t`.
    fn sample(&self, grid: &GridSpec<T>, t: T) -> FaceField<T>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoForcing;

impl<T: Real> Forcing<T> for NoForcing {
    fn sample(&self, grid: &GridSpec<T>, _t: T) -> FaceField<T> {
        FaceField::zeros(*grid)
    }
}

/// Adapts a closure `(grid, t) -> FaceField` into a [`Forcing`].
pub struct ForcingFn<F>(pub F);

impl<T: Real, F> Forcing<T> for ForcingFn<F>
where
    F: Fn(&GridSpec<T>, T) -> FaceField<T> + Send + Sync,
{
    fn sample(&self, grid: &GridSpec<T>, t: T) -> FaceField<T> {
        (self.0)(grid, t)
    }
}

#[derive(Clone)]
pub struct SimConfig<T> {
    pub nu: T,
    pub alpha: T,
    pub density: DensityParams<T>,
    pub dt: T,
    pub t_end: T,
    /// Projection stops once `|div u|_2 <= poisson_tol |u*|_2`.
    pub poisson_tol: T,
    /// Relative residual of the predictor solve.
    pub viscous_tol: T,
    pub max_iter: usize,
    /// Include the `(eps / 2) (Lap rho) u` term.
    pub compensation: bool,
    pub forcing: Arc<dyn Forcing<T>>,
}

impl<T: Real> fmt::Debug for SimConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimConfig")
            .field("nu", &self.nu)
            .field("alpha", &self.alpha)
            .field("density", &self.density)
            .field("dt", &self.dt)
            .field("t_end", &self.t_end)
            .field("poisson_tol", &self.poisson_tol)
            .field("viscous_tol", &self.viscous_tol)
            .field("max_iter", &self.max_iter)
            .field("compensation", &self.compensation)
            .finish_non_exhaustive()
    }
}

impl<T: Real> SimConfig<T> {
    pub fn new(nu: T, alpha: T, dt: T, t_end: T) -> Self {
        Self {
            nu,
            alpha,
            density: DensityParams::default(),
            dt,
            t_end,
            poisson_tol: T::lit(1e-10),
            viscous_tol: T::lit(1e-10),
            max_iter: 20_000,
            compensation: true,
            forcing: Arc::new(NoForcing),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.nu >= T::zero()) || !self.nu.is_finite() {
            return bad(format!("nu must be >= 0, got {}", self.nu));
        }
        if !(self.alpha >= T::zero()) || !self.alpha.is_finite() {
            return Err(Error::NegativeFriction(self.alpha.as_f64()));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        for (name, tol) in [("poisson_tol", self.poisson_tol), ("viscous_tol", self.viscous_tol)] {
            if !(tol > T::zero() && tol <= T::lit(1e-4)) {
                return bad(format!("{name} must lie in (0, 1e-4], got {tol}"));
            }
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        self.density.validate()
    }

    /// Number of steps of size `dt` needed to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        let n = (self.t_end / self.dt).as_f64();
        (n - 1e-9).ceil().max(0.0) as usize
    }
}

/// `(t, rho, u, pi)` with `rho > 0`, `u` admissible and `pi` mean-free.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidState<T> {
    t: T,
    step: usize,
    rho: ScalarField<T>,
    u: VelocityField<T>,
    pi: ScalarField<T>,
}

impl<T: Real> FluidState<T> {
    pub fn from_parts(t: T, rho: ScalarField<T>, u: VelocityField<T>, pi: ScalarField<T>) -> Result<Self> {
        if !rho.grid().same_mesh(u.grid()) || !rho.grid().same_mesh(pi.grid()) {
            return Err(Error::Mismatch("state fields live on different grids".into()));
        }
        check_positive(&rho)?;
        u.check_impermeable()?;
        Ok(Self { t, step: 0, rho, u, pi: mean_free(&pi) })
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn rho(&self) -> &ScalarField<T> {
        &self.rho
    }

    pub fn u(&self) -> &VelocityField<T> {
        &self.u
    }

    pub fn pi(&self) -> &ScalarField<T> {
        &self.pi
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.rho.grid()
    }

    /// Checks positivity, impermeability, the divergence bound
    /// `|div u|_2 <= 10 poisson_tol |u|_2` and the pressure gauge.
    pub fn check_invariants(&self, config: &SimConfig<T>) -> Result<()> {
        check_positive(&self.rho)?;
        self.u.check_impermeable()?;
        let g = self.grid();
        let div = divergence(self.u.faces());
        let div_l2 = (div.interior().into_iter().map(|d| d * d).sum::<T>() * g.cell_area()).sqrt();
        let bound = T::lit(10.0) * config.poisson_tol * self.u.norm_l2() + T::epsilon() * T::lit(1e3);
        if div_l2 > bound {
            return Err(Error::NotDivergenceFree { max_div: div_l2.as_f64(), tolerance: bound.as_f64() });
        }
        let mean = crate::grid::integrate(&self.pi);
        let scale = T::one().max(self.pi.max_abs());
        if mean.abs() > T::epsilon() * T::lit(1e4) * scale * T::from_usize_lossy(g.num_cells()).sqrt() {
            return Err(Error::Mismatch(format!("pressure is not mean-free: integral {mean}")));
        }
        Ok(())
    }
}

fn check_positive<T: Real>(rho: &ScalarField<T>) -> Result<()> {
    let g = rho.grid();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = rho.get(i, j);
            if !(v > T::zero()) {
                return Err(Error::Density { requirement: "positive", i, j, value: v.as_f64() });
            }
        }
    }
    Ok(())
}

fn mean_free<T: Real>(p: &ScalarField<T>) -> ScalarField<T> {
    let vals = p.interior();
    let mean = vals.iter().copied().sum::<T>() / T::from_usize_lossy(vals.len());
    p.map(|v| v - mean)
}

/// Initial data: either the velocity `u0` or the momentum `v0 = rho0 u0`.
#[derive(Clone, Debug)]
pub enum InitialVelocity<T> {
    Velocity(FaceField<T>),
    Momentum(FaceField<T>),
}

/// `-div(M^{-1} grad .)` on cell vectors, with `M` the face densities and no
/// flux through walls.
struct Poisson<T> {
    nx: usize,
    ny: usize,
    periodic: bool,
    cx: Vec<T>,
    cy: Vec<T>,
    diag: Vec<T>,
}

impl<T: Real> Poisson<T> {
    fn new(mass: &FaceField<T>) -> Self {
        let g = *mass.grid();
        let (nx, ny) = (g.nx(), g.ny());
        let (idx2, idy2) = (T::one() / (g.dx() * g.dx()), T::one() / (g.dy() * g.dy()));
        let mut cx = vec![T::zero(); (nx + 1) * ny];
        let mut cy = vec![T::zero(); nx * (ny + 1)];
        for j in 0..ny {
            for i in g.ux_active() {
                cx[j * (nx + 1) + i] = idx2 / mass.ux(i as isize, j as isize);
            }
        }
        for j in g.uy_active() {
            for i in 0..nx {
                cy[j * nx + i] = idy2 / mass.uy(i as isize, j as isize);
            }
        }
        let mut op = Self { nx, ny, periodic: g.periodic_x(), cx, cy, diag: vec![T::zero(); nx * ny] };
        let mut diag = vec![T::zero(); nx * ny];
        op.for_each_face(|a, b, c| {
            diag[a] += c;
            diag[b] += c;
        });
        op.diag = diag;
        op
    }

    fn for_each_face(&self, mut visit: impl FnMut(usize, usize, T)) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            let first = if self.periodic { 0 } else { 1 };
            for i in first..nx {
                let left = if i == 0 { nx - 1 } else { i - 1 };
                visit(j * nx + left, j * nx + i, self.cx[j * (nx + 1) + i]);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                visit((j - 1) * nx + i, j * nx + i, self.cy[j * nx + i]);
            }
        }
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        self.for_each_face(|a, b, c| {
            let flux = c * (x[a] - x[b]);
            y[a] += flux;
            y[b] -= flux;
        });
    }
}

/// Size of the terms summed when `scale * div(source)` is formed cell by cell.
fn divergence_magnitude<T: Real>(source: &FaceField<T>, scale: T) -> T {
    let g = source.grid();
    let packed: T = source.to_packed().into_iter().map(|v| v.abs()).sum();
    T::lit(2.0) * scale.abs() * packed / g.min_spacing()
}

/// Solves `-div(M^{-1} grad phi) = b` for mean-free `phi`, stopping at
/// `|residual|_2 <= abs_tol`. `magnitude` bounds the terms that formed `b`
/// and sets the roundoff allowed in its sum.
fn solve_pressure<T: Real>(mass: &FaceField<T>, b: &[T], magnitude: T, abs_tol: T, max_iter: usize) -> Result<ScalarField<T>> {
    let g = *mass.grid();
    let sum = b.iter().copied().sum::<T>();
    let bound = T::epsilon() * T::lit(1e4) * (b.iter().map(|v| v.abs()).sum::<T>() + magnitude);
    if sum.abs() > bound {
        return Err(Error::IncompatibleRhs { sum: sum.as_f64(), bound: bound.as_f64() });
    }
    let mut rhs = b.to_vec();
    let mean = sum / T::from_usize_lossy(rhs.len());
    rhs.iter_mut().for_each(|v| *v -= mean);
    let op = Poisson::new(mass);
    let mut x = vec![T::zero(); rhs.len()];
    pcg(|v, out| op.apply(v, out), &op.diag, &rhs, &mut x, abs_tol, max_iter, true)?;
    ScalarField::from_interior(g, &x)
}

/// `M u = M u* - dt grad phi` with `div u = 0`. Returns `(u, phi)`.
fn project_with_mass<T: Real>(u_star: &VelocityField<T>, mass: &FaceField<T>, dt: T, tol: T, max_iter: usize) -> Result<(VelocityField<T>, ScalarField<T>)> {
    let g = *u_star.grid();
    let b: Vec<T> = divergence(u_star.faces()).interior().into_iter().map(|d| -d / dt).collect();
    let abs_tol = tol * u_star.norm_l2() / (dt * g.cell_area().sqrt());
    let phi = solve_pressure(mass, &b, divergence_magnitude(u_star.faces(), T::one() / dt), abs_tol, max_iter)?;
    let grad = gradient(&phi).to_packed();
    let m = mass.to_packed();
    let packed: Vec<T> = u_star.to_packed().into_iter().zip(grad).zip(m).map(|((u, gp), m)| u - dt * gp / m).collect();
    Ok((VelocityField::from_packed(g, u_star.alpha(), &packed)?, phi))
}

/// Variable-density projection: solves `div((dt / rho_face) grad phi) = div u*`
/// and returns `u = u* - (dt / rho_face) grad phi` together with `phi`, the
/// pressure increment of this step (mean-free).
pub fn pressure_project<T: Real>(u_star: &VelocityField<T>, rho: &ScalarField<T>, dt: T, config: &SimConfig<T>) -> Result<(VelocityField<T>, ScalarField<T>)> {
    check_positive(rho)?;
    project_with_mass(u_star, &face_average(rho), dt, config.poisson_tol, config.max_iter)
}

fn norm2<T: Real>(a: &[T]) -> T {
    a.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

/// Pressure consistent with the initial data: the one making the initial
/// acceleration divergence-free.
fn initial_pressure<T: Real>(rho: &ScalarField<T>, u: &VelocityField<T>, config: &SimConfig<T>) -> Result<ScalarField<T>> {
    let g = *rho.grid();
    let mass = face_average(rho).to_packed();
    let fluxes = mass_fluxes(rho, u.faces(), config.density.flux_mode);
    let mass_change = face_average(&divergence(&fluxes)).to_packed();
    let conv = momentum_convection(&fluxes, u.faces()).to_packed();
    let visc = laplacian_stored(u.faces()).to_packed();
    let force = config.forcing.sample(&g, T::zero()).to_packed();
    let eps = config.density.epsilon;
    let diffusion = if eps > T::zero() {
        face_average(&scalar_laplacian_neumann(rho)).to_packed()
    } else {
        vec![T::zero(); mass.len()]
    };
    let half = T::lit(0.5);
    let un = u.to_packed();
    let accel: Vec<T> = (0..mass.len())
        .map(|k| {
            let s = if config.compensation { half * eps * diffusion[k] } else { T::zero() };
            let r = mass_change[k] * un[k] - eps * diffusion[k] * un[k] + s * un[k] - conv[k] + config.nu * visc[k] + mass[k] * force[k];
            r / mass[k]
        })
        .collect();
    let mut a = FaceField::zeros(g);
    a.unpack(&accel);
    let b: Vec<T> = divergence(&a).interior().into_iter().map(|d| -d).collect();
    let abs_tol = config.poisson_tol * norm2(&b);
    solve_pressure(&face_average(rho), &b, divergence_magnitude(&a, T::one()), abs_tol, config.max_iter)
}

/// Regularizes the density, converts momentum data to velocity, projects the
/// velocity onto the discretely divergence-free admissible fields and
/// computes a consistent initial pressure.
pub fn initial_state<T: Real>(rho0: &ScalarField<T>, init: InitialVelocity<T>, config: &SimConfig<T>) -> Result<FluidState<T>> {
    config.validate()?;
    let g = *rho0.grid();
    let rho = regularize_initial_density(rho0, &config.density)?;
    let mass = face_average(&rho);
    let faces = match init {
        InitialVelocity::Velocity(f) => f,
        InitialVelocity::Momentum(v) => {
            let floor = config.density.rho_floor;
            let mut u = FaceField::zeros(g);
            let (nx, ny) = (g.nx() as isize, g.ny() as isize);
            for j in 0..ny {
                for i in 0..=nx {
                    let vacuum = rho0.at(i - 1, j).min(rho0.at(i, j)) <= floor;
                    if vacuum && v.ux(i, j) != T::zero() {
                        return Err(Error::Compatibility { component: "x", i, j });
                    }
                    u.set_ux(i, j, v.ux(i, j) / mass.ux(i, j));
                }
            }
            for j in 0..=ny {
                for i in 0..nx {
                    let vacuum = rho0.at(i, j - 1).min(rho0.at(i, j)) <= floor;
                    if vacuum && v.uy(i, j) != T::zero() {
                        return Err(Error::Compatibility { component: "y", i, j });
                    }
                    u.set_uy(i, j, v.uy(i, j) / mass.uy(i, j));
                }
            }
            if g.periodic_x() {
                u.sync_periodic();
            }
            u
        }
    };
    let u0 = VelocityField::from_faces(faces, config.alpha)?;
    let (u, _) = project_with_mass(&u0, &mass, T::one(), config.poisson_tol, config.max_iter)?;
    let pi = initial_pressure(&rho, &u, config)?;
    Ok(FluidState { t: T::zero(), step: 0, rho, u, pi })
}

/// Solves the density-weighted, linearly implicit momentum predictor
///
/// `(M1 u* - M0 u^n) / dt + C(F) u* - nu L u* - (eps / 2) avg(Lap rho) u*
///     = M1 f^{n+1} - grad pi^n`,
///
/// where `M0`, `M1` are face densities before and after the density update,
/// `F` its mass fluxes and `L` the Navier-closed vector Laplacian.
pub fn momentum_predictor<T: Real>(state: &FluidState<T>, update: &DensityUpdate<T>, config: &SimConfig<T>) -> Result<VelocityField<T>> {
    let g = *state.grid();
    let dt = config.dt;
    let m0 = face_average(&state.rho).to_packed();
    let m1 = face_average(&update.rho).to_packed();
    let n = m0.len();
    let eps = config.density.epsilon;
    let s: Vec<T> = if config.compensation && eps > T::zero() {
        face_average(&update.laplacian).to_packed().into_iter().map(|l| T::lit(0.5) * eps * l).collect()
    } else {
        vec![T::zero(); n]
    };
    let force = config.forcing.sample(&g, state.t + dt).to_packed();
    let grad_pi = gradient(&state.pi).to_packed();
    let un = state.u.to_packed();
    let rhs: Vec<T> = (0..n).map(|k| m0[k] * un[k] / dt + m1[k] * force[k] - grad_pi[k]).collect();
    let alpha = config.alpha;
    let nu = config.nu;
    let apply = |x: &[T], y: &mut [T]| {
        let v = VelocityField::from_packed(g, alpha, x).expect("alpha validated");
        let conv = momentum_convection(&update.fluxes, v.faces()).to_packed();
        let lap = laplacian_stored(v.faces()).to_packed();
        for k in 0..n {
            y[k] = (m1[k] / dt - s[k]) * x[k] + conv[k] - nu * lap[k];
        }
    };
    let stiff = T::lit(2.0) * nu * (T::one() / (g.dx() * g.dx()) + T::one() / (g.dy() * g.dy()));
    let diag: Vec<T> = (0..n).map(|k| m1[k] / dt - s[k] + stiff).collect();
    let mut x = un;
    let abs_tol = config.viscous_tol * norm2(&rhs);
    bicgstab(apply, &diag, &rhs, &mut x, abs_tol, config.max_iter)?;
    VelocityField::from_packed(g, alpha, &x)
}

/// Density update, momentum predictor and projection; advances `t` by `dt`.
pub fn step<T: Real>(state: &FluidState<T>, config: &SimConfig<T>) -> Result<FluidState<T>> {
    let update = advance_density(&state.rho, &state.u, &config.density, config.dt, config.max_iter)?;
    let u_star = momentum_predictor(state, &update, config)?;
    let mass = face_average(&update.rho);
    let (u, phi) = project_with_mass(&u_star, &mass, config.dt, config.poisson_tol, config.max_iter)?;
    let pi = mean_free(&state.pi.zip_map(&phi, |a, b| a + b)?);
    Ok(FluidState { t: state.t + config.dt, step: state.step + 1, rho: update.rho, u, pi })
}
