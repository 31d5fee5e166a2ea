//! Regularized continuity equation `rho_t + div(rho u) = eps Lap rho` with a
//! homogeneous Neumann wall condition.

use crate::grid::{FaceField, ScalarField, VelocityField};
use crate::linsolve::pcg;
use crate::operators::{divergence, mass_fluxes, scalar_laplacian_neumann, FluxMode};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityParams<T> {
    /// Regularizing diffusivity.
    pub epsilon: T,
    /// Lower bound imposed on the initial density.
    pub rho_floor: T,
    pub flux_mode: FluxMode,
    /// Apply one conservative smoothing pass after clamping the initial density.
    pub smoothing: bool,
    /// Treat `eps Lap rho` implicitly (conjugate gradients) instead of explicitly.
    pub implicit_diffusion: bool,
}

impl<T: Real> Default for DensityParams<T> {
    fn default() -> Self {
        Self {
            epsilon: T::zero(),
            rho_floor: T::lit(1e-3),
            flux_mode: FluxMode::Upwind,
            smoothing: true,
            implicit_diffusion: false,
        }
    }
}

impl<T: Real> DensityParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.rho_floor > T::zero()) || !self.rho_floor.is_finite() {
            return Err(Error::InvalidConfig(format!("rho_floor must be > 0, got {}", self.rho_floor)));
        }
        Ok(())
    }
}

/// Clamps `rho0` from below by `rho_floor`, then optionally applies the
/// mass-preserving average `rho / 2 + (sum of the four neighbours) / 8`.
pub fn regularize_initial_density<T: Real>(rho0: &ScalarField<T>, params: &DensityParams<T>) -> Result<ScalarField<T>> {
    params.validate()?;
    let g = *rho0.grid();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = rho0.get(i, j);
            if !(v >= T::zero()) {
                return Err(Error::Density { requirement: "nonnegative", i, j, value: v.as_f64() });
            }
        }
    }
    let clamped = rho0.map(|v| v.max(params.rho_floor));
    if !params.smoothing {
        return Ok(clamped);
    }
    let (half, eighth) = (T::lit(0.5), T::lit(0.125));
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let (a, b) = (i as isize, j as isize);
            let nb = clamped.at(a + 1, b) + clamped.at(a - 1, b) + clamped.at(a, b + 1) + clamped.at(a, b - 1);
            out.set(i, j, half * clamped.at(a, b) + eighth * nb);
        }
    }
    out.refresh_ghosts();
    Ok(out)
}

/// Left-hand side of the explicit stability condition,
/// `dt (2 |u_x|_inf / dx + 2 |u_y|_inf / dy + 2 eps (1 / dx^2 + 1 / dy^2))`
/// (without the diffusive part when diffusion is implicit). The upwind update
/// is a convex combination iff this is <= 1.
pub fn cfl_ratio<T: Real>(u: &VelocityField<T>, params: &DensityParams<T>, dt: T) -> T {
    let g = *u.grid();
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let (mut mx, mut my) = (T::zero(), T::zero());
    for j in 0..ny {
        for i in 0..=nx {
            mx = mx.max(u.ux(i, j).abs());
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            my = my.max(u.uy(i, j).abs());
        }
    }
    let two = T::lit(2.0);
    let advective = dt * two * (mx / g.dx() + my / g.dy());
    if params.implicit_diffusion {
        advective
    } else {
        advective + dt * two * params.epsilon * (T::one() / (g.dx() * g.dx()) + T::one() / (g.dy() * g.dy()))
    }
}

/// Everything the momentum step needs from the density update.
#[derive(Clone, Debug)]
pub struct DensityUpdate<T> {
    pub rho: ScalarField<T>,
    /// Mass fluxes on cell faces.
    pub fluxes: FaceField<T>,
    /// `Lap rho` of the density that was actually diffused.
    pub laplacian: ScalarField<T>,
}

pub fn advance_density<T: Real>(rho: &ScalarField<T>, u: &VelocityField<T>, params: &DensityParams<T>, dt: T, max_iter: usize) -> Result<DensityUpdate<T>> {
    params.validate()?;
    let g = *rho.grid();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = rho.get(i, j);
            if !(v > T::zero()) {
                return Err(Error::Density { requirement: "positive", i, j, value: v.as_f64() });
            }
        }
    }
    let ratio = cfl_ratio(u, params, dt);
    if ratio > T::one() {
        return Err(Error::Cfl { what: "density", ratio: ratio.as_f64() });
    }
    let fluxes = mass_fluxes(rho, u.faces(), params.flux_mode);
    let div = divergence(&fluxes);
    if params.epsilon == T::zero() {
        let next = rho.zip_map(&div, |r, d| r - dt * d)?;
        return Ok(DensityUpdate { rho: next, fluxes, laplacian: ScalarField::zeros(g) });
    }
    if !params.implicit_diffusion {
        let lap = scalar_laplacian_neumann(rho);
        let vals: Vec<T> = rho
            .interior()
            .into_iter()
            .zip(div.interior())
            .zip(lap.interior())
            .map(|((r, d), l)| r - dt * d + dt * params.epsilon * l)
            .collect();
        return Ok(DensityUpdate { rho: ScalarField::from_interior(g, &vals)?, fluxes, laplacian: lap });
    }
    // (I - dt eps L) rho' = rho - dt div F
    let b: Vec<T> = rho.interior().into_iter().zip(div.interior()).map(|(r, d)| r - dt * d).collect();
    let k = dt * params.epsilon;
    let apply = |x: &[T], y: &mut [T]| {
        let f = ScalarField::from_interior(g, x).expect("cell vector");
        let l = scalar_laplacian_neumann(&f).interior();
        for ((yi, &xi), li) in y.iter_mut().zip(x).zip(l) {
            *yi = xi - k * li;
        }
    };
    let d = T::one() + k * T::lit(2.0) * (T::one() / (g.dx() * g.dx()) + T::one() / (g.dy() * g.dy()));
    let mut x = b.clone();
    let bnorm = b.iter().map(|v| *v * *v).sum::<T>().sqrt();
    pcg(apply, &vec![d; b.len()], &b, &mut x, T::epsilon() * T::lit(16.0) * bnorm, max_iter, false)?;
    let next = ScalarField::from_interior(g, &x)?;
    let laplacian = scalar_laplacian_neumann(&next);
    Ok(DensityUpdate { rho: next, fluxes, laplacian })
}

/// One step of the regularized continuity equation. Conservative; in upwind
/// mode with a discretely divergence-free `u` and the CFL bound met, the new
/// values are convex combinations of the old ones.
pub fn density_step<T: Real>(rho: &ScalarField<T>, u: &VelocityField<T>, params: &DensityParams<T>, dt: T) -> Result<ScalarField<T>> {
    Ok(advance_density(rho, u, params, dt, 10_000)?.rho)
}

/// `(min, max)` over interior cells.
pub fn density_bounds<T: Real>(rho: &ScalarField<T>) -> (T, T) {
    rho.min_max()
}
