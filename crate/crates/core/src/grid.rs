//! Rectangular staggered (MAC) mesh, the fields that live on it, and the
//! quadratures every norm and energy term is built from.
//!
//! Cell-centred scalars carry one ghost cell on each side. Face-normal
//! velocity components carry one layer of tangential ghosts, i.e. the values
//! just outside a wall that the Navier closure prescribes. Walls are always
//! present at `y = 0` and `y = Ly`; in `x` the domain is either closed by two
//! more walls or periodic (a channel).

use std::ops::Range;

use crate::{Error, Real, Result};

/// Relative size below which a sampled boundary-normal velocity is treated as
/// roundoff and pinned to zero.
pub const PIN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XBoundary {
    Walls,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

/// A boundary-normal face: its velocity is `u . n` and is pinned to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryFace {
    pub component: Component,
    pub i: usize,
    pub j: usize,
    pub wall: Wall,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    nx: usize,
    ny: usize,
    lx: T,
    ly: T,
    dx: T,
    dy: T,
    x_boundary: XBoundary,
}

impl<T: Real> GridSpec<T> {
    /// Closed box `[0, lx] x [0, ly]` with four walls.
    pub fn new(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self> {
        Self::with_x_boundary(nx, ny, lx, ly, XBoundary::Walls)
    }

    /// Channel: periodic in `x`, walls at `y = 0` and `y = ly`.
    pub fn channel(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self> {
        Self::with_x_boundary(nx, ny, lx, ly, XBoundary::Periodic)
    }

    pub fn with_x_boundary(nx: usize, ny: usize, lx: T, ly: T, x_boundary: XBoundary) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells per direction, got {nx} x {ny}")));
        }
        if !(lx > T::zero() && ly > T::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidGrid(format!("side lengths must be positive, got {lx} x {ly}")));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / T::from_usize_lossy(nx),
            dy: ly / T::from_usize_lossy(ny),
            x_boundary,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> T {
        self.lx
    }

    pub fn ly(&self) -> T {
        self.ly
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn dy(&self) -> T {
        self.dy
    }

    pub fn x_boundary(&self) -> XBoundary {
        self.x_boundary
    }

    pub fn periodic_x(&self) -> bool {
        self.x_boundary == XBoundary::Periodic
    }

    pub fn cell_area(&self) -> T {
        self.dx * self.dy
    }

    pub fn min_spacing(&self) -> T {
        self.dx.min(self.dy)
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_center(&self, i: isize, j: isize) -> (T, T) {
        let half = T::lit(0.5);
        (
            (T::from_isize(i).unwrap() + half) * self.dx,
            (T::from_isize(j).unwrap() + half) * self.dy,
        )
    }

    /// Location of the `x`-velocity unknown `(i, j)`: the vertical face `x = i dx`.
    pub fn ux_position(&self, i: isize, j: isize) -> (T, T) {
        (
            T::from_isize(i).unwrap() * self.dx,
            (T::from_isize(j).unwrap() + T::lit(0.5)) * self.dy,
        )
    }

    /// Location of the `y`-velocity unknown `(i, j)`: the horizontal face `y = j dy`.
    pub fn uy_position(&self, i: isize, j: isize) -> (T, T) {
        (
            (T::from_isize(i).unwrap() + T::lit(0.5)) * self.dx,
            T::from_isize(j).unwrap() * self.dy,
        )
    }

    pub fn node_position(&self, i: isize, j: isize) -> (T, T) {
        (T::from_isize(i).unwrap() * self.dx, T::from_isize(j).unwrap() * self.dy)
    }

    /// Indices `i` of the `x`-velocity faces that are unknowns (not wall-pinned).
    pub fn ux_active(&self) -> Range<usize> {
        match self.x_boundary {
            XBoundary::Walls => 1..self.nx,
            XBoundary::Periodic => 0..self.nx,
        }
    }

    /// Indices `j` of the `y`-velocity faces that are unknowns.
    pub fn uy_active(&self) -> Range<usize> {
        1..self.ny
    }

    pub fn num_ux_unknowns(&self) -> usize {
        self.ux_active().len() * self.ny
    }

    pub fn num_uy_unknowns(&self) -> usize {
        self.nx * self.uy_active().len()
    }

    pub fn num_face_unknowns(&self) -> usize {
        self.num_ux_unknowns() + self.num_uy_unknowns()
    }

    /// Node columns carrying distinct values (`nx + 1` in a box, `nx` when periodic).
    pub fn node_columns(&self) -> usize {
        match self.x_boundary {
            XBoundary::Walls => self.nx + 1,
            XBoundary::Periodic => self.nx,
        }
    }

    /// Trapezoid weight (in units of `dx`) of node column / `x`-face column `i`.
    pub fn weight_x(&self, i: usize) -> T {
        match self.x_boundary {
            XBoundary::Walls if i == 0 || i == self.nx => T::lit(0.5),
            _ => T::one(),
        }
    }

    /// Trapezoid weight (in units of `dy`) of node row / `y`-face row `j`.
    pub fn weight_y(&self, j: usize) -> T {
        if j == 0 || j == self.ny {
            T::lit(0.5)
        } else {
            T::one()
        }
    }

    /// Every boundary-normal face. A closed box has `2 nx + 2 ny` of them.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let mut out = Vec::with_capacity(2 * self.nx + 2 * self.ny);
        if self.x_boundary == XBoundary::Walls {
            for j in 0..self.ny {
                out.push(BoundaryFace { component: Component::X, i: 0, j, wall: Wall::Left });
                out.push(BoundaryFace { component: Component::X, i: self.nx, j, wall: Wall::Right });
            }
        }
        for i in 0..self.nx {
            out.push(BoundaryFace { component: Component::Y, i, j: 0, wall: Wall::Bottom });
            out.push(BoundaryFace { component: Component::Y, i, j: self.ny, wall: Wall::Top });
        }
        out
    }

    pub(crate) fn same_mesh(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly && self.x_boundary == other.x_boundary
    }
}

/// Dense 2D array addressed by signed indices with a fixed origin offset.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layer<T> {
    w: usize,
    h: usize,
    ox: isize,
    oy: isize,
    data: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn new(w: usize, h: usize, ox: isize, oy: isize) -> Self {
        Self { w, h, ox, oy, data: vec![T::zero(); w * h] }
    }

    #[inline(always)]
    fn idx(&self, i: isize, j: isize) -> usize {
        debug_assert!(i + self.ox >= 0 && ((i + self.ox) as usize) < self.w, "i = {i} out of range");
        debug_assert!(j + self.oy >= 0 && ((j + self.oy) as usize) < self.h, "j = {j} out of range");
        (j + self.oy) as usize * self.w + (i + self.ox) as usize
    }

    #[inline(always)]
    pub(crate) fn at(&self, i: isize, j: isize) -> T {
        self.data[self.idx(i, j)]
    }

    #[inline(always)]
    pub(crate) fn set(&mut self, i: isize, j: isize, v: T) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    fn i_range(&self) -> Range<isize> {
        -self.ox..self.w as isize - self.ox
    }

    fn j_range(&self) -> Range<isize> {
        -self.oy..self.h as isize - self.oy
    }
}

/// Cell-centred scalar (density, pressure) with a one-cell ghost frame.
///
/// Ghosts always hold the homogeneous Neumann mirror at walls and the
/// periodic image across a periodic direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: GridSpec<T>,
    data: Layer<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self { grid, data: Layer::new(grid.nx + 2, grid.ny + 2, 1, 1) }
    }

    pub fn constant(grid: GridSpec<T>, c: T) -> Self {
        let mut f = Self::zeros(grid);
        f.data.data.fill(c);
        f
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: GridSpec<T>, f: impl Fn(T, T) -> T) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny as isize {
            for i in 0..grid.nx as isize {
                let (x, y) = grid.cell_center(i, j);
                out.data.set(i, j, f(x, y));
            }
        }
        out.refresh_ghosts();
        out
    }

    /// Builds from interior values stored row by row (`index = j * nx + i`).
    pub fn from_interior(grid: GridSpec<T>, values: &[T]) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Mismatch(format!("expected {} cell values, got {}", grid.num_cells(), values.len())));
        }
        let mut out = Self::zeros(grid);
        for (k, &v) in values.iter().enumerate() {
            out.data.set((k % grid.nx) as isize, (k / grid.nx) as isize, v);
        }
        out.refresh_ghosts();
        Ok(out)
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Interior value of cell `(i, j)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data.at(i as isize, j as isize)
    }

    /// Value including the ghost frame, `-1 <= i <= nx`, `-1 <= j <= ny`.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> T {
        self.data.at(i, j)
    }

    pub fn interior(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.grid.num_cells());
        for j in 0..self.grid.ny as isize {
            for i in 0..self.grid.nx as isize {
                v.push(self.data.at(i, j));
            }
        }
        v
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let vals: Vec<T> = self.interior().into_iter().map(f).collect();
        Self::from_interior(self.grid, &vals).expect("same grid")
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if !self.grid.same_mesh(&other.grid) {
            return Err(Error::Mismatch("scalar fields live on different grids".into()));
        }
        let vals: Vec<T> = self.interior().into_iter().zip(other.interior()).map(|(a, b)| f(a, b)).collect();
        Self::from_interior(self.grid, &vals)
    }

    /// `(min, max)` over interior cells.
    pub fn min_max(&self) -> (T, T) {
        self.interior()
            .into_iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn max_abs(&self) -> T {
        self.interior().into_iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: T) {
        self.data.set(i as isize, j as isize, v);
    }

    pub(crate) fn refresh_ghosts(&mut self) {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        for j in 0..ny {
            let (west, east) = match self.grid.x_boundary {
                XBoundary::Walls => (self.data.at(0, j), self.data.at(nx - 1, j)),
                XBoundary::Periodic => (self.data.at(nx - 1, j), self.data.at(0, j)),
            };
            self.data.set(-1, j, west);
            self.data.set(nx, j, east);
        }
        for i in -1..=nx {
            let south = self.data.at(i, 0);
            let north = self.data.at(i, ny - 1);
            self.data.set(i, -1, south);
            self.data.set(i, ny, north);
        }
    }
}

/// How the tangential ghost layer of a face field is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TangentialClosure<T> {
    /// Flat-wall Navier condition `d u_t / d n = -2 alpha u_t`.
    Navier(T),
    /// Mirror image (`d u_t / d n = 0`).
    Reflect,
}

impl<T: Real> TangentialClosure<T> {
    /// Ghost-to-interior ratio for a wall at distance `spacing / 2` from the
    /// first interior unknown.
    #[inline]
    fn ratio(&self, spacing: T) -> T {
        match *self {
            TangentialClosure::Navier(alpha) => {
                let a = alpha * spacing;
                (T::one() - a) / (T::one() + a)
            }
            TangentialClosure::Reflect => T::one(),
        }
    }
}

/// Staggered vector field without the impermeability pin: `x` components on
/// vertical faces, `y` components on horizontal faces, plus tangential ghosts.
///
/// Storage: `ux(i, j)` for `-1 <= i <= nx + 1`, `-1 <= j <= ny`;
/// `uy(i, j)` for `-1 <= i <= nx`, `0 <= j <= ny`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField<T> {
    grid: GridSpec<T>,
    ux: Layer<T>,
    uy: Layer<T>,
}

impl<T: Real> FaceField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self {
            grid,
            ux: Layer::new(grid.nx + 3, grid.ny + 2, 1, 1),
            uy: Layer::new(grid.nx + 2, grid.ny + 1, 1, 0),
        }
    }

    /// Samples `(fx, fy)` at every stored face, ghosts included, so the ghost
    /// layer carries the smooth extension of the field.
    pub fn from_fn(grid: GridSpec<T>, fx: impl Fn(T, T) -> T, fy: impl Fn(T, T) -> T) -> Self {
        let mut out = Self::zeros(grid);
        for j in out.ux.j_range() {
            for i in out.ux.i_range() {
                let (x, y) = grid.ux_position(i, j);
                out.ux.set(i, j, fx(x, y));
            }
        }
        for j in out.uy.j_range() {
            for i in out.uy.i_range() {
                let (x, y) = grid.uy_position(i, j);
                out.uy.set(i, j, fy(x, y));
            }
        }
        if grid.periodic_x() {
            out.sync_periodic();
        }
        out
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline(always)]
    pub fn ux(&self, i: isize, j: isize) -> T {
        self.ux.at(i, j)
    }

    #[inline(always)]
    pub fn uy(&self, i: isize, j: isize) -> T {
        self.uy.at(i, j)
    }

    #[inline(always)]
    pub(crate) fn set_ux(&mut self, i: isize, j: isize, v: T) {
        self.ux.set(i, j, v);
    }

    #[inline(always)]
    pub(crate) fn set_uy(&mut self, i: isize, j: isize, v: T) {
        self.uy.set(i, j, v);
    }

    /// Refills ghost faces from the interior with the given closure.
    pub fn with_closure(mut self, closure: TangentialClosure<T>) -> Self {
        self.apply_closure(closure);
        self
    }

    pub(crate) fn sync_periodic(&mut self) {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        for j in -1..=ny {
            let first = self.ux.at(0, j);
            let second = self.ux.at(1, j);
            let last = self.ux.at(nx - 1, j);
            self.ux.set(nx, j, first);
            self.ux.set(nx + 1, j, second);
            self.ux.set(-1, j, last);
        }
        for j in 0..=ny {
            let first = self.uy.at(0, j);
            let last = self.uy.at(nx - 1, j);
            self.uy.set(nx, j, first);
            self.uy.set(-1, j, last);
        }
    }

    pub(crate) fn apply_closure(&mut self, closure: TangentialClosure<T>) {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        match self.grid.x_boundary {
            XBoundary::Periodic => {
                for j in 0..ny {
                    let first = self.ux.at(0, j);
                    let second = self.ux.at(1, j);
                    let last = self.ux.at(nx - 1, j);
                    self.ux.set(nx, j, first);
                    self.ux.set(nx + 1, j, second);
                    self.ux.set(-1, j, last);
                }
                for j in 0..=ny {
                    let first = self.uy.at(0, j);
                    let last = self.uy.at(nx - 1, j);
                    self.uy.set(nx, j, first);
                    self.uy.set(-1, j, last);
                }
            }
            XBoundary::Walls => {
                let r = closure.ratio(self.grid.dx);
                for j in 0..=ny {
                    let west = self.uy.at(0, j) * r;
                    let east = self.uy.at(nx - 1, j) * r;
                    self.uy.set(-1, j, west);
                    self.uy.set(nx, j, east);
                }
                for j in -1..=ny {
                    self.ux.set(-1, j, T::zero());
                    self.ux.set(nx + 1, j, T::zero());
                }
            }
        }
        let r = closure.ratio(self.grid.dy);
        for i in -1..=nx + 1 {
            let south = self.ux.at(i, 0) * r;
            let north = self.ux.at(i, ny - 1) * r;
            self.ux.set(i, -1, south);
            self.ux.set(i, ny, north);
        }
    }

    /// Copies the unknown (active) faces into `out`: all `x` faces row by row,
    /// then all `y` faces.
    pub fn pack(&self, out: &mut [T]) {
        assert_eq!(out.len(), self.grid.num_face_unknowns());
        let mut k = 0;
        for j in 0..self.grid.ny as isize {
            for i in self.grid.ux_active() {
                out[k] = self.ux.at(i as isize, j);
                k += 1;
            }
        }
        for j in self.grid.uy_active() {
            for i in 0..self.grid.nx as isize {
                out[k] = self.uy.at(i, j as isize);
                k += 1;
            }
        }
    }

    pub fn to_packed(&self) -> Vec<T> {
        let mut v = vec![T::zero(); self.grid.num_face_unknowns()];
        self.pack(&mut v);
        v
    }

    /// Inverse of [`pack`](Self::pack). Boundary-normal faces are zeroed and
    /// periodic copies refreshed; the wall ghost layer is left for the caller
    /// to close.
    pub fn unpack(&mut self, v: &[T]) {
        assert_eq!(v.len(), self.grid.num_face_unknowns());
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        let mut k = 0;
        for j in 0..ny {
            for i in self.grid.ux_active() {
                self.ux.set(i as isize, j, v[k]);
                k += 1;
            }
        }
        for j in self.grid.uy_active() {
            for i in 0..nx {
                self.uy.set(i, j as isize, v[k]);
                k += 1;
            }
        }
        self.zero_normal_faces();
        if self.grid.periodic_x() {
            self.sync_periodic();
        }
    }

    pub(crate) fn zero_normal_faces(&mut self) {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        if !self.grid.periodic_x() {
            for j in -1..=ny {
                self.ux.set(0, j, T::zero());
                self.ux.set(nx, j, T::zero());
            }
        }
        for i in -1..=nx {
            self.uy.set(i, 0, T::zero());
            self.uy.set(i, ny, T::zero());
        }
    }

    /// Face quadrature `int_Omega a . b`: each face owns a `dx dy` control
    /// volume, halved on walls.
    pub fn inner(&self, other: &Self) -> T {
        let g = &self.grid;
        let mut sum = T::zero();
        let columns = g.node_columns();
        for j in 0..g.ny as isize {
            for i in 0..columns {
                sum += g.weight_x(i) * self.ux.at(i as isize, j) * other.ux.at(i as isize, j);
            }
        }
        for j in 0..=g.ny {
            let wy = g.weight_y(j);
            for i in 0..g.nx as isize {
                sum += wy * self.uy.at(i, j as isize) * other.uy.at(i, j as isize);
            }
        }
        sum * g.cell_area()
    }

    pub fn norm_l2(&self) -> T {
        self.inner(self).sqrt()
    }

    /// Largest magnitude over the unknown faces.
    pub fn max_abs(&self) -> T {
        self.to_packed().into_iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `self + scale * other` on every stored entry.
    pub fn add_scaled(&self, scale: T, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.ux.data.iter_mut().zip(&other.ux.data) {
            *a += scale * *b;
        }
        for (a, b) in out.uy.data.iter_mut().zip(&other.uy.data) {
            *a += scale * *b;
        }
        out
    }

    /// Entrywise `f(self, other)` on every stored entry, ghosts included.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if !self.grid.same_mesh(&other.grid) {
            return Err(Error::Mismatch("face fields live on different grids".into()));
        }
        let mut out = self.clone();
        for (a, &b) in out.ux.data.iter_mut().zip(&other.ux.data).chain(out.uy.data.iter_mut().zip(&other.uy.data)) {
            *a = f(*a, b);
        }
        Ok(out)
    }

    pub fn scaled(&self, scale: T) -> Self {
        let mut out = self.clone();
        out.ux.data.iter_mut().chain(out.uy.data.iter_mut()).for_each(|v| *v *= scale);
        out
    }

    /// Mirror image across `x = Lx / 2`: `(ux, uy)(x, y) -> (-ux, uy)(Lx - x, y)`.
    pub fn mirrored_x(&self) -> Self {
        let mut out = Self::zeros(self.grid);
        let nx = self.grid.nx as isize;
        for j in self.ux.j_range() {
            for i in self.ux.i_range() {
                let src = nx - i;
                if (-1..=nx + 1).contains(&src) {
                    out.ux.set(i, j, -self.ux.at(src, j));
                }
            }
        }
        for j in self.uy.j_range() {
            for i in self.uy.i_range() {
                out.uy.set(i, j, self.uy.at(nx - 1 - i, j));
            }
        }
        out
    }
}

/// Admissible velocity: a [`FaceField`] whose boundary-normal faces are
/// exactly zero and whose tangential ghosts satisfy the Navier closure for
/// the friction coefficient `alpha` it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField<T> {
    faces: FaceField<T>,
    alpha: T,
}

impl<T: Real> VelocityField<T> {
    pub fn zeros(grid: GridSpec<T>, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { faces: FaceField::zeros(grid), alpha })
    }

    /// Samples `(fx, fy)` at faces. Normal velocities sampled on walls must
    /// vanish up to [`PIN_TOLERANCE`]; they are then pinned to exactly zero.
    pub fn from_fn(grid: GridSpec<T>, alpha: T, fx: impl Fn(T, T) -> T, fy: impl Fn(T, T) -> T) -> Result<Self> {
        Self::from_faces(FaceField::from_fn(grid, fx, fy), alpha)
    }

    /// Discrete curl of a stream function sampled at nodes:
    /// `ux = d psi / dy`, `uy = -d psi / dx`. The result is discretely
    /// divergence-free by construction. `psi` must be constant on each wall.
    pub fn from_stream_function(grid: GridSpec<T>, alpha: T, psi: impl Fn(T, T) -> T) -> Result<Self> {
        Self::from_faces(FaceField::from_stream_function(grid, psi)?, alpha)
    }

    /// Validates and pins the boundary-normal faces, then closes the ghosts.
    pub fn from_faces(mut faces: FaceField<T>, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        faces.pin_normal_faces()?;
        let mut out = Self { faces, alpha };
        out.refresh();
        Ok(out)
    }

    /// Rebuilds from packed unknowns (see [`FaceField::pack`]).
    pub fn from_packed(grid: GridSpec<T>, alpha: T, v: &[T]) -> Result<Self> {
        check_alpha(alpha)?;
        let mut faces = FaceField::zeros(grid);
        faces.unpack(v);
        let mut out = Self { faces, alpha };
        out.refresh();
        Ok(out)
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.faces.grid
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn faces(&self) -> &FaceField<T> {
        &self.faces
    }

    pub fn into_faces(self) -> FaceField<T> {
        self.faces
    }

    #[inline]
    pub fn ux(&self, i: isize, j: isize) -> T {
        self.faces.ux(i, j)
    }

    #[inline]
    pub fn uy(&self, i: isize, j: isize) -> T {
        self.faces.uy(i, j)
    }

    /// Same interior values, ghosts re-closed for a different friction coefficient.
    pub fn with_alpha(&self, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        let mut out = Self { faces: self.faces.clone(), alpha };
        out.refresh();
        Ok(out)
    }

    pub fn to_packed(&self) -> Vec<T> {
        self.faces.to_packed()
    }

    pub fn norm_l2(&self) -> T {
        self.faces.norm_l2()
    }

    pub fn max_abs(&self) -> T {
        self.faces.max_abs()
    }

    /// Linear combination of two admissible fields; the result is re-closed.
    pub fn add_scaled(&self, scale: T, other: &Self) -> Self {
        let mut out = Self { faces: self.faces.add_scaled(scale, &other.faces), alpha: self.alpha };
        out.refresh();
        out
    }

    pub fn scaled(&self, scale: T) -> Self {
        let mut out = Self { faces: self.faces.scaled(scale), alpha: self.alpha };
        out.refresh();
        out
    }

    pub fn mirrored_x(&self) -> Self {
        let mut out = Self { faces: self.faces.mirrored_x(), alpha: self.alpha };
        out.refresh();
        out
    }

    /// Errors unless every boundary-normal face is exactly zero.
    pub fn check_impermeable(&self) -> Result<()> {
        self.faces.check_impermeable()
    }

    fn refresh(&mut self) {
        self.faces.zero_normal_faces();
        self.faces.apply_closure(TangentialClosure::Navier(self.alpha));
    }
}

impl<T: Real> FaceField<T> {
    fn max_abs_all(&self) -> T {
        self.ux.data.iter().chain(&self.uy.data).fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Discrete curl of a stream function sampled at nodes, ghost layer
    /// included, so the ghosts carry the smooth extension of the field.
    /// Boundary-normal faces are validated and pinned as in
    /// [`VelocityField::from_faces`].
    pub fn from_stream_function(grid: GridSpec<T>, psi: impl Fn(T, T) -> T) -> Result<Self> {
        let mut faces = FaceField::zeros(grid);
        let node = |i: isize, j: isize| {
            let (x, y) = grid.node_position(i, j);
            psi(x, y)
        };
        for j in faces.ux.j_range() {
            for i in faces.ux.i_range() {
                faces.ux.set(i, j, (node(i, j + 1) - node(i, j)) / grid.dy);
            }
        }
        for j in faces.uy.j_range() {
            for i in faces.uy.i_range() {
                faces.uy.set(i, j, -(node(i + 1, j) - node(i, j)) / grid.dx);
            }
        }
        if grid.periodic_x() {
            faces.sync_periodic();
        }
        faces.pin_normal_faces()?;
        Ok(faces)
    }

    /// Errors if a boundary-normal value exceeds [`PIN_TOLERANCE`] relative
    /// to the field scale; otherwise sets all of them to exactly zero.
    pub(crate) fn pin_normal_faces(&mut self) -> Result<()> {
        let tol = T::lit(PIN_TOLERANCE) * T::one().max(self.max_abs_all());
        for bf in self.grid.boundary_faces() {
            let (component, v) = match bf.component {
                Component::X => ("x", self.ux.at(bf.i as isize, bf.j as isize)),
                Component::Y => ("y", self.uy.at(bf.i as isize, bf.j as isize)),
            };
            if !(v.abs() <= tol) {
                return Err(Error::Impermeability { component, i: bf.i as isize, j: bf.j as isize, value: v.as_f64() });
            }
        }
        self.zero_normal_faces();
        Ok(())
    }

    /// Errors unless every boundary-normal value is exactly zero.
    pub fn check_impermeable(&self) -> Result<()> {
        for bf in self.grid.boundary_faces() {
            let (component, v) = match bf.component {
                Component::X => ("x", self.ux.at(bf.i as isize, bf.j as isize)),
                Component::Y => ("y", self.uy.at(bf.i as isize, bf.j as isize)),
            };
            if v != T::zero() {
                return Err(Error::Impermeability { component, i: bf.i as isize, j: bf.j as isize, value: v.as_f64() });
            }
        }
        Ok(())
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha >= T::zero() && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeFriction(alpha.as_f64()))
    }
}

/// Midpoint rule `sum f_ij dx dy` over the interior cells.
pub fn integrate<T: Real>(field: &ScalarField<T>) -> T {
    field.interior().into_iter().sum::<T>() * field.grid.cell_area()
}

/// `int_{dOmega} |u|^2` at one instant. Tangential velocities are evaluated
/// on the wall as the mean of the first interior value and its ghost.
pub fn boundary_speed_sq_integral<T: Real>(u: &VelocityField<T>) -> Result<T> {
    u.check_impermeable()?;
    Ok(boundary_inner(u.faces(), u.faces()))
}

/// `int_{dOmega} a . b` for impermeable fields, using the same wall traces as
/// [`boundary_speed_sq_integral`].
pub fn boundary_inner<T: Real>(a: &FaceField<T>, b: &FaceField<T>) -> T {
    let g = a.grid();
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let half = T::lit(0.5);
    let trace_x = |f: &FaceField<T>, i: isize, inner: isize, ghost: isize| half * (f.ux(i, inner) + f.ux(i, ghost));
    let trace_y = |f: &FaceField<T>, j: isize, inner: isize, ghost: isize| half * (f.uy(inner, j) + f.uy(ghost, j));
    let mut bottom_top = T::zero();
    for i in 0..g.node_columns() {
        let wx = g.weight_x(i);
        let i = i as isize;
        bottom_top += wx
            * (trace_x(a, i, 0, -1) * trace_x(b, i, 0, -1) + trace_x(a, i, ny - 1, ny) * trace_x(b, i, ny - 1, ny));
    }
    let mut sides = T::zero();
    if !g.periodic_x() {
        for j in 0..=g.ny {
            let wy = g.weight_y(j);
            let j = j as isize;
            sides += wy
                * (trace_y(a, j, 0, -1) * trace_y(b, j, 0, -1) + trace_y(a, j, nx - 1, nx) * trace_y(b, j, nx - 1, nx));
        }
    }
    bottom_top * g.dx + sides * g.dy
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn build_grid_spacing() {
        let g = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
        assert_eq!((g.dx(), g.dy()), (0.25, 0.25));
        let g = GridSpec::new(2, 8, 1.0, 2.0).unwrap();
        assert_eq!((g.dx(), g.dy()), (0.5, 0.25));
    }

    #[test]
    fn build_grid_rejects_bad_input() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 1, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 1.0, -2.0).is_err());
        assert!(GridSpec::new(4, 4, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn boundary_face_count() {
        let g = GridSpec::new(5, 7, 1.0, 1.0).unwrap();
        assert_eq!(g.boundary_faces().len(), 2 * 5 + 2 * 7);
        let c = GridSpec::channel(5, 7, 1.0, 1.0).unwrap();
        assert_eq!(c.boundary_faces().len(), 2 * 5);
    }

    #[test]
    fn boundary_faces_are_pinned_in_every_velocity_field() {
        let g = GridSpec::new(6, 5, 1.0, 1.0).unwrap();
        let u = VelocityField::from_stream_function(g, 0.7, |x: f64, y: f64| (PI * x).sin() * (PI * y).sin()).unwrap();
        for bf in g.boundary_faces() {
            let v = match bf.component {
                Component::X => u.ux(bf.i as isize, bf.j as isize),
                Component::Y => u.uy(bf.i as isize, bf.j as isize),
            };
            assert_eq!(v.to_bits(), 0.0f64.to_bits());
        }
    }

    #[test]
    fn integrate_constants() {
        let g = GridSpec::<f64>::new(7, 3, 1.0, 1.0).unwrap();
        assert!((integrate(&ScalarField::constant(g, 2.0)) - 2.0).abs() < 1e-14);
        assert_eq!(integrate(&ScalarField::zeros(g)), 0.0);
    }

    #[test]
    fn integrate_cosine_vanishes() {
        let g = GridSpec::new(64, 64, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |_, y: f64| (PI * y).cos());
        assert!(integrate(&f).abs() < 1e-6);
    }

    #[test]
    fn integrate_is_second_order() {
        // int_0^1 int_0^1 exp(x) y^2 = (e - 1) / 3
        let exact = (std::f64::consts::E - 1.0) / 3.0;
        let errs: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&n| {
                let g = GridSpec::new(n, n, 1.0, 1.0).unwrap();
                (integrate(&ScalarField::from_fn(g, |x: f64, y: f64| x.exp() * y * y)) - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
        }
    }

    #[test]
    fn neumann_ghosts_mirror_interior() {
        let g = GridSpec::new(4, 3, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x: f64, y: f64| x + 10.0 * y);
        assert_eq!(f.at(-1, 1), f.get(0, 1));
        assert_eq!(f.at(4, 2), f.get(3, 2));
        assert_eq!(f.at(2, -1), f.get(2, 0));
        assert_eq!(f.at(2, 3), f.get(2, 2));
    }

    #[test]
    fn periodic_ghosts_wrap() {
        let g = GridSpec::channel(4, 3, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x: f64, y: f64| x + 10.0 * y);
        assert_eq!(f.at(-1, 1), f.get(3, 1));
        assert_eq!(f.at(4, 1), f.get(0, 1));
    }

    #[test]
    fn navier_ghost_ratio_matches_robin_condition() {
        let g = GridSpec::new(4, 8, 1.0, 1.0).unwrap();
        let alpha = 0.5;
        let u = VelocityField::from_fn(g, alpha, |x: f64, _| (PI * x).sin(), |_, _| 0.0).unwrap();
        let dy = g.dy();
        for i in 1..4 {
            let inner = u.ux(i, 0);
            let ghost = u.ux(i, -1);
            // one-sided derivative equals 2 alpha times the wall average
            let lhs = (inner - ghost) / dy;
            let rhs = 2.0 * alpha * 0.5 * (inner + ghost);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_trace_examples() {
        let g = GridSpec::new(64, 64, 1.0, 1.0).unwrap();
        let zero = VelocityField::zeros(g, 0.0).unwrap();
        assert_eq!(boundary_speed_sq_integral(&zero).unwrap(), 0.0);

        let u = VelocityField::from_fn(g, 0.0, |x: f64, _| (PI * x).sin(), |_, _| 0.0).unwrap();
        let v = boundary_speed_sq_integral(&u).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn constant_flow_through_walls_is_rejected() {
        let g = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
        let err = VelocityField::from_fn(g, 0.0, |_, _| 1.5, |_, _| 0.0).unwrap_err();
        assert!(matches!(err, Error::Impermeability { component: "x", .. }));
        let mut faces = FaceField::zeros(g);
        faces.set_ux(0, 3, 1.0);
        assert!(VelocityField::from_faces(faces, 0.0).is_err());
    }

    #[test]
    fn negative_alpha_is_rejected() {
        let g = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
        assert!(matches!(VelocityField::zeros(g, -0.1), Err(Error::NegativeFriction(_))));
    }

    #[test]
    fn pack_unpack_restores_unknowns() {
        let g = GridSpec::new(5, 4, 1.0, 1.0).unwrap();
        let u = VelocityField::from_stream_function(g, 0.3, |x: f64, y: f64| (PI * x).sin() * (PI * y).sin() * x).unwrap();
        let back = VelocityField::from_packed(g, 0.3, &u.to_packed()).unwrap();
        assert_eq!(u, back);
    }
}
