//! Discrete differential operators on the staggered mesh.
//!
//! Derivative placement follows the MAC layout: normal derivatives of face
//! components live at cell centres, cross derivatives at mesh nodes. Node
//! sums use trapezoid weights (one half on walls), which makes
//! `-<L u, u> = 2 |D u|^2 + 2 alpha |u|^2_{dOmega}` hold exactly for
//! discretely divergence-free, impermeable `u`.

use crate::grid::{FaceField, ScalarField, TangentialClosure, VelocityField};
use crate::{Error, Real, Result};

/// Interpolation of the density onto faces when forming mass fluxes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FluxMode {
    #[default]
    Upwind,
    Centered,
}

/// Cell-centred divergence of a face field.
pub fn divergence<T: Real>(u: &FaceField<T>) -> ScalarField<T> {
    let g = *u.grid();
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let (ii, jj) = (i as isize, j as isize);
            let d = (u.ux(ii + 1, jj) - u.ux(ii, jj)) / g.dx() + (u.uy(ii, jj + 1) - u.uy(ii, jj)) / g.dy();
            out.set(i, j, d);
        }
    }
    out.refresh_ghosts();
    out
}

/// Face-centred gradient of a cell field. Wall faces see the Neumann mirror
/// and therefore carry a zero normal derivative.
pub fn gradient<T: Real>(p: &ScalarField<T>) -> FaceField<T> {
    let g = *p.grid();
    let mut out = FaceField::zeros(g);
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    for j in 0..ny {
        for i in 0..=nx {
            out.set_ux(i, j, (p.at(i, j) - p.at(i - 1, j)) / g.dx());
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            out.set_uy(i, j, (p.at(i, j) - p.at(i, j - 1)) / g.dy());
        }
    }
    if g.periodic_x() {
        out.sync_periodic();
    }
    out
}

/// Elementwise cell-to-face arithmetic mean.
pub fn face_average<T: Real>(p: &ScalarField<T>) -> FaceField<T> {
    let g = *p.grid();
    let half = T::lit(0.5);
    let mut out = FaceField::zeros(g);
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    for j in 0..ny {
        for i in 0..=nx {
            out.set_ux(i, j, half * (p.at(i, j) + p.at(i - 1, j)));
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            out.set_uy(i, j, half * (p.at(i, j) + p.at(i, j - 1)));
        }
    }
    if g.periodic_x() {
        out.sync_periodic();
    }
    out
}

#[inline(always)]
fn node_shear<T: Real>(u: &FaceField<T>, i: isize, j: isize) -> (T, T) {
    let g = u.grid();
    (
        (u.ux(i, j) - u.ux(i, j - 1)) / g.dy(),
        (u.uy(i, j) - u.uy(i - 1, j)) / g.dx(),
    )
}

#[inline(always)]
fn cell_stretch<T: Real>(u: &FaceField<T>, i: isize, j: isize) -> (T, T) {
    let g = u.grid();
    (
        (u.ux(i + 1, j) - u.ux(i, j)) / g.dx(),
        (u.uy(i, j + 1) - u.uy(i, j)) / g.dy(),
    )
}

/// `int D(f) : D(g)` with normal strains at cell centres and shear strain at
/// nodes. Ghost layers are used as stored.
pub fn deformation_inner<T: Real>(f: &FaceField<T>, h: &FaceField<T>) -> T {
    let g = *f.grid();
    let mut cells = T::zero();
    for j in 0..g.ny() as isize {
        for i in 0..g.nx() as isize {
            let (a11, a22) = cell_stretch(f, i, j);
            let (b11, b22) = cell_stretch(h, i, j);
            cells += a11 * b11 + a22 * b22;
        }
    }
    let mut nodes = T::zero();
    for j in 0..=g.ny() {
        let wy = g.weight_y(j);
        for i in 0..g.node_columns() {
            let (ay, ax) = node_shear(f, i as isize, j as isize);
            let (by, bx) = node_shear(h, i as isize, j as isize);
            nodes += wy * g.weight_x(i) * (ay + ax) * (by + bx);
        }
    }
    (cells + T::lit(0.5) * nodes) * g.cell_area()
}

/// `|D(u)|_2^2`.
pub fn deformation_energy<T: Real>(u: &FaceField<T>) -> T {
    deformation_inner(u, u)
}

/// `|grad u|_2^2` with the same placement as [`deformation_inner`].
pub fn gradient_energy<T: Real>(u: &FaceField<T>) -> T {
    let g = *u.grid();
    let mut sum = T::zero();
    for j in 0..g.ny() as isize {
        for i in 0..g.nx() as isize {
            let (a, b) = cell_stretch(u, i, j);
            sum += a * a + b * b;
        }
    }
    for j in 0..=g.ny() {
        let wy = g.weight_y(j);
        for i in 0..g.node_columns() {
            let (a, b) = node_shear(u, i as isize, j as isize);
            sum += wy * g.weight_x(i) * (a * a + b * b);
        }
    }
    sum * g.cell_area()
}

/// Five-point Laplacian of each component at the unknown faces, using the
/// ghost layer exactly as stored. Boundary-normal entries of the result are 0.
pub(crate) fn laplacian_stored<T: Real>(u: &FaceField<T>) -> FaceField<T> {
    let g = *u.grid();
    let (idx2, idy2) = (T::one() / (g.dx() * g.dx()), T::one() / (g.dy() * g.dy()));
    let two = T::lit(2.0);
    let mut out = FaceField::zeros(g);
    for j in 0..g.ny() as isize {
        for i in g.ux_active() {
            let i = i as isize;
            let c = u.ux(i, j);
            let v = (u.ux(i + 1, j) - two * c + u.ux(i - 1, j)) * idx2 + (u.ux(i, j + 1) - two * c + u.ux(i, j - 1)) * idy2;
            out.set_ux(i, j, v);
        }
    }
    for j in g.uy_active() {
        let j = j as isize;
        for i in 0..g.nx() as isize {
            let c = u.uy(i, j);
            let v = (u.uy(i + 1, j) - two * c + u.uy(i - 1, j)) * idx2 + (u.uy(i, j + 1) - two * c + u.uy(i, j - 1)) * idy2;
            out.set_uy(i, j, v);
        }
    }
    if g.periodic_x() {
        out.sync_periodic();
    }
    out
}

/// Vector Laplacian after refilling the ghosts of a copy of `u` with `closure`.
pub fn vector_laplacian<T: Real>(u: &FaceField<T>, closure: TangentialClosure<T>) -> FaceField<T> {
    laplacian_stored(&u.clone().with_closure(closure))
}

/// Vector Laplacian closed by the flat-wall Navier condition
/// `d u_t / d n = -2 alpha u_t`; normal components keep their pinned zeros.
pub fn laplacian_navier<T: Real>(u: &VelocityField<T>, alpha: T) -> Result<FaceField<T>> {
    if !(alpha >= T::zero()) {
        return Err(Error::NegativeFriction(alpha.as_f64()));
    }
    Ok(vector_laplacian(u.faces(), TangentialClosure::Navier(alpha)))
}

/// Five-point Laplacian with mirror ghosts (homogeneous Neumann).
pub fn scalar_laplacian_neumann<T: Real>(p: &ScalarField<T>) -> ScalarField<T> {
    let g = *p.grid();
    let (idx2, idy2) = (T::one() / (g.dx() * g.dx()), T::one() / (g.dy() * g.dy()));
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let (a, b) = (i as isize, j as isize);
            let c = p.at(a, b);
            let fx = (p.at(a + 1, b) - c) - (c - p.at(a - 1, b));
            let fy = (p.at(a, b + 1) - c) - (c - p.at(a, b - 1));
            out.set(i, j, fx * idx2 + fy * idy2);
        }
    }
    out.refresh_ghosts();
    out
}

/// Mass fluxes `rho u` on every face. Boundary-normal fluxes vanish with `u`.
pub fn mass_fluxes<T: Real>(rho: &ScalarField<T>, u: &FaceField<T>, mode: FluxMode) -> FaceField<T> {
    let g = *rho.grid();
    let half = T::lit(0.5);
    let interp = |v: T, behind: T, ahead: T| match mode {
        FluxMode::Upwind => {
            if v >= T::zero() {
                behind
            } else {
                ahead
            }
        }
        FluxMode::Centered => half * (behind + ahead),
    };
    let mut out = FaceField::zeros(g);
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    for j in 0..ny {
        for i in 0..=nx {
            let v = u.ux(i, j);
            out.set_ux(i, j, v * interp(v, rho.at(i - 1, j), rho.at(i, j)));
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let v = u.uy(i, j);
            out.set_uy(i, j, v * interp(v, rho.at(i, j - 1), rho.at(i, j)));
        }
    }
    if g.periodic_x() {
        out.sync_periodic();
    }
    out
}

/// `div(rho u)` in conservative flux-difference form.
pub fn advect_scalar<T: Real>(rho: &ScalarField<T>, u: &VelocityField<T>, mode: FluxMode) -> ScalarField<T> {
    divergence(&mass_fluxes(rho, u.faces(), mode))
}

/// Momentum transport `div(F (x) u)` on the face control volumes, with `F`
/// the given cell-face mass fluxes averaged onto the control-volume faces and
/// `u` interpolated by centred means.
///
/// Because the control-volume fluxes are averages of `F`, the mass carried by
/// a face is exactly the face average of the cell mass budget, and
/// `<C u, u> = 1/2 <avg(div F), |u|^2>`.
pub fn momentum_convection<T: Real>(flux: &FaceField<T>, u: &FaceField<T>) -> FaceField<T> {
    let g = *u.grid();
    let half = T::lit(0.5);
    let (dx, dy) = (g.dx(), g.dy());
    let mut out = FaceField::zeros(g);
    for j in 0..g.ny() as isize {
        for i in g.ux_active() {
            let i = i as isize;
            let c = u.ux(i, j);
            let east = half * (flux.ux(i, j) + flux.ux(i + 1, j)) * half * (c + u.ux(i + 1, j));
            let west = half * (flux.ux(i - 1, j) + flux.ux(i, j)) * half * (u.ux(i - 1, j) + c);
            let north = half * (flux.uy(i - 1, j + 1) + flux.uy(i, j + 1)) * half * (c + u.ux(i, j + 1));
            let south = half * (flux.uy(i - 1, j) + flux.uy(i, j)) * half * (u.ux(i, j - 1) + c);
            out.set_ux(i, j, (east - west) / dx + (north - south) / dy);
        }
    }
    for j in g.uy_active() {
        let j = j as isize;
        for i in 0..g.nx() as isize {
            let c = u.uy(i, j);
            let east = half * (flux.ux(i + 1, j - 1) + flux.ux(i + 1, j)) * half * (c + u.uy(i + 1, j));
            let west = half * (flux.ux(i, j - 1) + flux.ux(i, j)) * half * (u.uy(i - 1, j) + c);
            let north = half * (flux.uy(i, j) + flux.uy(i, j + 1)) * half * (c + u.uy(i, j + 1));
            let south = half * (flux.uy(i, j - 1) + flux.uy(i, j)) * half * (u.uy(i, j - 1) + c);
            out.set_uy(i, j, (east - west) / dx + (north - south) / dy);
        }
    }
    if g.periodic_x() {
        out.sync_periodic();
    }
    out
}

/// `div(rho u (x) u)` with mass fluxes built in the given mode.
pub fn advect_momentum<T: Real>(rho: &ScalarField<T>, u: &VelocityField<T>, mode: FluxMode) -> FaceField<T> {
    momentum_convection(&mass_fluxes(rho, u.faces(), mode), u.faces())
}

/// The three terms of the slip integration-by-parts identity
/// `-int Lap f . g = 2 int D(f):D(g) - 2 int_{dOmega} [D(f) n]_tan . g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IbpReport<T> {
    pub lhs: T,
    pub rhs_volume: T,
    pub rhs_boundary: T,
    pub mismatch: T,
}

/// Largest cell divergence accepted for the test field `g`, relative to
/// `max|g| / h`.
pub const IBP_DIV_TOLERANCE: f64 = 1e-10;

/// Evaluates both sides of the slip integration-by-parts lemma. Both fields
/// are used with their stored ghosts (see [`FaceField::from_fn`] and
/// [`FaceField::from_stream_function`]); `g` must be impermeable and
/// discretely divergence-free.
pub fn ibp_identity<T: Real>(f: &FaceField<T>, g: &FaceField<T>) -> Result<IbpReport<T>> {
    let grid = *g.grid();
    if !grid.same_mesh(f.grid()) {
        return Err(Error::Mismatch("f and g live on different grids".into()));
    }
    g.check_impermeable()?;
    let max_div = divergence(g).max_abs();
    let tolerance = T::lit(IBP_DIV_TOLERANCE) * T::one().max(g.max_abs()) / grid.min_spacing();
    if max_div > tolerance {
        return Err(Error::NotDivergenceFree { max_div: max_div.as_f64(), tolerance: tolerance.as_f64() });
    }
    let lhs = -laplacian_stored(f).inner(g);
    let rhs_volume = T::lit(2.0) * deformation_inner(f, g);

    let half = T::lit(0.5);
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    let shear = |i: isize, j: isize| {
        let (a, b) = node_shear(f, i, j);
        a + b
    };
    let mut horizontal = T::zero();
    for i in 0..grid.node_columns() {
        let w = grid.weight_x(i);
        let i = i as isize;
        let south = half * (g.ux(i, 0) + g.ux(i, -1));
        let north = half * (g.ux(i, ny - 1) + g.ux(i, ny));
        horizontal += w * (shear(i, 0) * south - shear(i, ny) * north);
    }
    let mut vertical = T::zero();
    if !grid.periodic_x() {
        for j in 0..=grid.ny() {
            let w = grid.weight_y(j);
            let j = j as isize;
            let west = half * (g.uy(0, j) + g.uy(-1, j));
            let east = half * (g.uy(nx - 1, j) + g.uy(nx, j));
            vertical += w * (shear(0, j) * west - shear(nx, j) * east);
        }
    }
    let rhs_boundary = horizontal * grid.dx() + vertical * grid.dy();
    Ok(IbpReport { lhs, rhs_volume, rhs_boundary, mismatch: lhs - rhs_volume - rhs_boundary })
}
