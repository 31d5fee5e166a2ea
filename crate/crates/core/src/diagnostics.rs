//! Energy budget, norms and the quantities entering the vanishing-viscosity
//! estimate.

use crate::grid::{boundary_inner, boundary_speed_sq_integral, integrate, FaceField, ScalarField, VelocityField};
use crate::momentum::{FluidState, Forcing, SimConfig};
use crate::operators::{deformation_energy, deformation_inner, divergence, face_average, gradient_energy, IBP_DIV_TOLERANCE};
use crate::{Error, Real, Result};

/// Face densities times velocity.
fn momentum_faces<T: Real>(rho: &ScalarField<T>, u: &FaceField<T>) -> Result<FaceField<T>> {
    face_average(rho).zip_map(u, |m, v| m * v)
}

/// Face quadrature of `1/2 rho |u|^2`: each velocity unknown is weighted by
/// the mean density of the two cells it separates.
pub fn kinetic_energy<T: Real>(rho: &ScalarField<T>, u: &VelocityField<T>) -> Result<T> {
    Ok(T::lit(0.5) * momentum_faces(rho, u.faces())?.inner(u.faces()))
}

/// Running energy budget of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyLedger<T> {
    pub step: usize,
    pub t: T,
    pub kinetic: T,
    /// `sum dt 2 nu |D u|^2`
    pub dissipation_acc: T,
    /// `sum dt 2 nu alpha int_{dOmega} |u|^2`
    pub friction_acc: T,
    /// `sum dt int rho f . u`
    pub work_acc: T,
    pub kinetic_initial: T,
}

impl<T: Real> EnergyLedger<T> {
    pub fn new(state: &FluidState<T>) -> Result<Self> {
        let kinetic = kinetic_energy(state.rho(), state.u())?;
        Ok(Self {
            step: state.step(),
            t: state.t(),
            kinetic,
            dissipation_acc: T::zero(),
            friction_acc: T::zero(),
            work_acc: T::zero(),
            kinetic_initial: kinetic,
        })
    }

    /// `kinetic + dissipation + friction - kinetic_initial - work`. The
    /// energy inequality says this is not positive.
    pub fn residual(&self) -> T {
        self.kinetic + self.dissipation_acc + self.friction_acc - self.kinetic_initial - self.work_acc
    }
}

/// Advances every accumulator by `dt` using the right endpoint `state`.
pub fn ledger_update<T: Real>(ledger: &EnergyLedger<T>, state: &FluidState<T>, config: &SimConfig<T>, dt: T) -> Result<EnergyLedger<T>> {
    let u = state.u();
    let two_nu = T::lit(2.0) * config.nu;
    let force = config.forcing.sample(state.grid(), state.t());
    Ok(EnergyLedger {
        step: state.step(),
        t: state.t(),
        kinetic: kinetic_energy(state.rho(), u)?,
        dissipation_acc: ledger.dissipation_acc + dt * two_nu * deformation_energy(u.faces()),
        friction_acc: ledger.friction_acc + dt * two_nu * u.alpha() * boundary_speed_sq_integral(u)?,
        work_acc: ledger.work_acc + dt * momentum_faces(state.rho(), &force)?.inner(u.faces()),
        kinetic_initial: ledger.kinetic_initial,
    })
}

pub fn energy_residual<T: Real>(ledger: &EnergyLedger<T>) -> T {
    ledger.residual()
}

/// Discrete `L^p` norm of a cell field for `p` in {1, 2, 6, infinity}.
pub fn lp_norm<T: Real>(rho: &ScalarField<T>, p: f64) -> Result<T> {
    if p == f64::INFINITY {
        return Ok(rho.max_abs());
    }
    if ![1.0, 2.0, 6.0].contains(&p) {
        return Err(Error::UnsupportedExponent(p));
    }
    let pt = T::lit(p);
    Ok(integrate(&rho.map(|v| v.abs().powf(pt))).powf(T::one() / pt))
}

/// Velocity interpolated to the centre of cell `(i, j)`.
fn cell_velocity<T: Real>(u: &FaceField<T>, i: isize, j: isize) -> (T, T) {
    let half = T::lit(0.5);
    (half * (u.ux(i, j) + u.ux(i + 1, j)), half * (u.uy(i, j) + u.uy(i, j + 1)))
}

/// `int |u|^q` with `|u|` taken at cell centres, raised to `1/q`.
pub fn vector_lq_norm<T: Real>(u: &FaceField<T>, q: T) -> T {
    let g = u.grid();
    let mut sum = T::zero();
    for j in 0..g.ny() as isize {
        for i in 0..g.nx() as isize {
            let (a, b) = cell_velocity(u, i, j);
            sum += (a * a + b * b).sqrt().powf(q);
        }
    }
    (sum * g.cell_area()).powf(T::one() / q)
}

/// Full `H^1` norm squared, `int |grad u|^2 + int |u|^2`, using the stored
/// ghost layer.
pub fn h1_seminorm_sq<T: Real>(u: &FaceField<T>) -> T {
    gradient_energy(u) + u.inner(u)
}

/// `|u|_{H^1}^2 / (|D u|_2^2 + (int R |u|)^2)`; zero for `u = 0`.
pub fn korn_ratio<T: Real>(u: &FaceField<T>, weight: &ScalarField<T>) -> Result<T> {
    let mass = integrate(weight);
    if !(mass > T::zero()) || weight.min_max().0 < T::zero() {
        return Err(Error::NonPositiveWeight(mass.as_f64()));
    }
    let g = u.grid();
    let mut weighted = T::zero();
    for j in 0..g.ny() as isize {
        for i in 0..g.nx() as isize {
            let (a, b) = cell_velocity(u, i, j);
            weighted += weight.at(i, j) * (a * a + b * b).sqrt();
        }
    }
    weighted *= g.cell_area();
    let denom = deformation_energy(u) + weighted * weighted;
    if denom == T::zero() {
        return Ok(T::zero());
    }
    Ok(h1_seminorm_sq(u) / denom)
}

/// Test function `phi(x) cos(pi t / (2 T))` for the weak formulation. The
/// spatial part must be impermeable and discretely divergence-free; its ghost
/// layer is used as stored.
#[derive(Clone, Debug)]
pub struct TestField<T> {
    phi: FaceField<T>,
    t_end: T,
}

impl<T: Real> TestField<T> {
    pub fn new(phi: FaceField<T>, t_end: T) -> Result<Self> {
        phi.check_impermeable()?;
        let g = phi.grid();
        let tolerance = T::lit(IBP_DIV_TOLERANCE) * phi.max_abs().max(T::one()) / g.min_spacing();
        let max_div = divergence(&phi).max_abs();
        if max_div > tolerance {
            return Err(Error::NotDivergenceFree { max_div: max_div.as_f64(), tolerance: tolerance.as_f64() });
        }
        if !(t_end > T::zero()) {
            return Err(Error::Mismatch(format!("test field horizon must be positive, got {t_end}")));
        }
        Ok(Self { phi, t_end })
    }

    pub fn phi(&self) -> &FaceField<T> {
        &self.phi
    }

    pub fn cutoff(&self, t: T) -> T {
        (T::PI() * t / (T::lit(2.0) * self.t_end)).cos()
    }
}

/// `int rho (u x u) : grad phi`, with the diagonal part at cell centres and
/// the shear part at nodes.
fn convective_form<T: Real>(rho: &ScalarField<T>, u: &FaceField<T>, phi: &FaceField<T>) -> T {
    let g = *u.grid();
    let (dx, dy) = (g.dx(), g.dy());
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let mut cells = T::zero();
    for j in 0..g.ny() as isize {
        for i in 0..g.nx() as isize {
            let (a, b) = cell_velocity(u, i, j);
            let pxx = (phi.ux(i + 1, j) - phi.ux(i, j)) / dx;
            let pyy = (phi.uy(i, j + 1) - phi.uy(i, j)) / dy;
            cells += rho.at(i, j) * (a * a * pxx + b * b * pyy);
        }
    }
    let mut nodes = T::zero();
    for j in 0..=g.ny() {
        let wy = g.weight_y(j);
        let j = j as isize;
        for i in 0..g.node_columns() {
            let w = wy * g.weight_x(i);
            let i = i as isize;
            let r = quarter * (rho.at(i - 1, j - 1) + rho.at(i, j - 1) + rho.at(i - 1, j) + rho.at(i, j));
            let a = half * (u.ux(i, j - 1) + u.ux(i, j));
            let b = half * (u.uy(i - 1, j) + u.uy(i, j));
            let shear = (phi.ux(i, j) - phi.ux(i, j - 1)) / dy + (phi.uy(i, j) - phi.uy(i - 1, j)) / dx;
            nodes += w * r * a * b * shear;
        }
    }
    (cells + nodes) * g.cell_area()
}

/// Residual of the weak formulation over a stored trajectory:
///
/// `- sum <M^n u^n, phi> (chi_{n+1} - chi_n) - <M^0 u^0, phi> chi_0
///  + sum dt chi_{n+1} (2 nu <D u, D phi> + 2 nu alpha int_{dOmega} u . phi
///                      - int rho u x u : grad phi - <M f, phi>)^{n+1}`.
///
/// The trajectory must be ordered in time and end at the test field horizon.
pub fn weak_residual<T: Real>(trajectory: &[FluidState<T>], test: &TestField<T>, config: &SimConfig<T>) -> Result<T> {
    let first = trajectory.first().ok_or_else(|| Error::Mismatch("empty trajectory".into()))?;
    let last = trajectory.last().expect("nonempty");
    let phi = test.phi();
    if !first.grid().same_mesh(phi.grid()) {
        return Err(Error::Mismatch("test field and trajectory live on different grids".into()));
    }
    if (last.t() - test.t_end).abs() > T::lit(1e-9) * test.t_end.max(T::one()) {
        return Err(Error::Mismatch(format!("trajectory ends at {} but the test field vanishes at {}", last.t(), test.t_end)));
    }
    let pairing = |s: &FluidState<T>| -> Result<T> { Ok(momentum_faces(s.rho(), s.u().faces())?.inner(phi)) };
    let two_nu = T::lit(2.0) * config.nu;
    let mut total = -pairing(first)? * test.cutoff(first.t());
    for pair in trajectory.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let dt = next.t() - prev.t();
        if !(dt > T::zero()) {
            return Err(Error::Mismatch(format!("trajectory not increasing in time at t = {}", prev.t())));
        }
        let (chi0, chi1) = (test.cutoff(prev.t()), test.cutoff(next.t()));
        total -= pairing(prev)? * (chi1 - chi0);
        let u = next.u();
        let force = config.forcing.sample(next.grid(), next.t());
        let spatial = two_nu * deformation_inner(u.faces(), phi) + two_nu * u.alpha() * boundary_inner(u.faces(), phi)
            - convective_form(next.rho(), u.faces(), phi)
            - momentum_faces(next.rho(), &force)?.inner(phi);
        total += dt * chi1 * spatial;
    }
    Ok(total)
}

/// Comparison of a viscous run with its inviscid reference.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport<T> {
    pub nu: T,
    pub t: T,
    /// `|u - u^nu|_2^2 + |rho - rho^nu|_2^2` at `t`.
    pub lhs: T,
    pub lhs_history: Vec<(T, T)>,
    pub lhs_nondecreasing: bool,
    pub data_term: T,
    /// `nu int_0^t |u^nu|_{H^1}^2`
    pub visc_term: T,
    /// `int_0^t |f - f^nu|_{L^{2p/(p-1)}}`
    pub forcing_term: T,
    pub fitted_c: Option<T>,
    pub violation: bool,
}

impl<T: Real> BoundReport<T> {
    pub fn rhs(&self) -> T {
        self.data_term + self.visc_term + self.forcing_term
    }
}

fn difference_sq<T: Real>(run: &FluidState<T>, reference: &FluidState<T>) -> Result<T> {
    if !run.grid().same_mesh(reference.grid()) {
        return Err(Error::Mismatch("run and reference live on different grids".into()));
    }
    let tol = T::lit(1e-9) * run.t().abs().max(T::one());
    if (run.t() - reference.t()).abs() > tol {
        return Err(Error::Mismatch(format!("run at t = {} compared with reference at t = {}", run.t(), reference.t())));
    }
    let du = run.u().faces().add_scaled(-T::one(), reference.u().faces());
    let drho = run.rho().zip_map(reference.rho(), |a, b| a - b)?;
    Ok(du.inner(&du) + integrate(&drho.map(|v| v * v)))
}

/// Incremental construction of a [`BoundReport`] while a run advances.
#[derive(Clone, Debug)]
pub struct BoundTracker<T> {
    report: BoundReport<T>,
    exponent: T,
}

impl<T: Real> BoundTracker<T> {
    /// `p` is the integrability exponent of the density; the forcing is
    /// measured in `L^{2p/(p-1)}`.
    pub fn new(run: &FluidState<T>, reference: &FluidState<T>, nu: T, p: T) -> Result<Self> {
        let lhs = difference_sq(run, reference)?;
        let du = reference.u().faces().add_scaled(-T::one(), run.u().faces());
        let data_u = momentum_faces(run.rho(), &du)?.inner(&du);
        let drho = run.rho().zip_map(reference.rho(), |a, b| a - b)?;
        let data_term = data_u + integrate(&drho.map(|v| v * v));
        let report = BoundReport {
            nu,
            t: run.t(),
            lhs,
            lhs_history: vec![(run.t(), lhs)],
            lhs_nondecreasing: true,
            data_term,
            visc_term: T::zero(),
            forcing_term: T::zero(),
            fitted_c: None,
            violation: false,
        };
        Ok(Self { report, exponent: T::lit(2.0) * p / (p - T::one()) })
    }

    /// Records the pair at the end of a step of length `dt`.
    pub fn observe(&mut self, run: &FluidState<T>, reference: &FluidState<T>, forcing_diff: &FaceField<T>, dt: T) -> Result<()> {
        let lhs = difference_sq(run, reference)?;
        let r = &mut self.report;
        if lhs < r.lhs {
            r.lhs_nondecreasing = false;
        }
        r.t = run.t();
        r.lhs = lhs;
        r.lhs_history.push((run.t(), lhs));
        r.visc_term += dt * r.nu * h1_seminorm_sq(run.u().faces());
        r.forcing_term += dt * vector_lq_norm(forcing_diff, self.exponent);
        Ok(())
    }

    pub fn finish(self) -> BoundReport<T> {
        self.report
    }
}

/// Builds a report from two stored trajectories sampled at the same times.
pub fn bound_report<T: Real>(
    run: &[FluidState<T>],
    reference: &[FluidState<T>],
    config: &SimConfig<T>,
    reference_forcing: &dyn Forcing<T>,
    p: T,
) -> Result<BoundReport<T>> {
    if run.len() != reference.len() || run.is_empty() {
        return Err(Error::Mismatch(format!("trajectories of length {} and {}", run.len(), reference.len())));
    }
    let mut tracker = BoundTracker::new(&run[0], &reference[0], config.nu, p)?;
    for k in 1..run.len() {
        let s = &run[k];
        let grid = s.grid();
        let diff = config.forcing.sample(grid, s.t()).add_scaled(-T::one(), &reference_forcing.sample(grid, s.t()));
        tracker.observe(s, &reference[k], &diff, s.t() - run[k - 1].t())?;
    }
    Ok(tracker.finish())
}

/// Least-squares constant `C` in `lhs ~ C rhs` across a sweep. Every report
/// receives the constant and is flagged when its `lhs` exceeds `1.1 C rhs`.
pub fn fit_bound_constant<T: Real>(reports: &mut [BoundReport<T>]) -> Result<T> {
    let num: T = reports.iter().map(|r| r.lhs * r.rhs()).sum();
    let den: T = reports.iter().map(|r| r.rhs() * r.rhs()).sum();
    if !(den > T::zero()) {
        return Err(Error::DegenerateFit("every bound right-hand side vanishes".into()));
    }
    let c = num / den;
    for r in reports.iter_mut() {
        r.fitted_c = Some(c);
        r.violation = r.lhs > T::lit(1.1) * c * r.rhs();
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::momentum::{initial_state, step, InitialVelocity};
    use std::f64::consts::PI;

    fn unit(n: usize) -> GridSpec<f64> {
        GridSpec::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn kinetic_energy_examples() {
        let g = unit(64);
        let rho = ScalarField::constant(g, 2.0);
        let zero = VelocityField::zeros(g, 0.0).unwrap();
        assert_eq!(kinetic_energy(&rho, &zero).unwrap(), 0.0);
        let u = VelocityField::from_fn(g, 0.0, |x, _| (PI * x).sin(), |_, _| 0.0).unwrap();
        assert!((kinetic_energy(&rho, &u).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn kinetic_energy_respects_density_floor() {
        let g = unit(32);
        let floor = 1e-2;
        let rho = ScalarField::from_fn(g, |x, y| if (x - 0.5).hypot(y - 0.5) < 0.2 { floor } else { 1.0 });
        let u = VelocityField::from_stream_function(g, 0.0, |x, y| (PI * x).sin() * (PI * y).sin()).unwrap();
        let ke = kinetic_energy(&rho, &u).unwrap();
        assert!(ke >= floor * 0.5 * u.norm_l2().powi(2));
    }

    #[test]
    fn lp_norm_examples() {
        let g = unit(16);
        let rho = ScalarField::constant(g, 3.0);
        for p in [1.0, 2.0, 6.0, f64::INFINITY] {
            assert!((lp_norm(&rho, p).unwrap() - 3.0).abs() < 1e-12, "p = {p}");
        }
        assert!(matches!(lp_norm(&rho, 3.0), Err(Error::UnsupportedExponent(_))));
    }

    #[test]
    fn h1_of_sine_mode() {
        let exact = (1.0 + PI * PI) / 2.0;
        let mut errs = vec![];
        for n in [32, 64] {
            let u = VelocityField::from_fn(unit(n), 0.0, |x, _| (PI * x).sin(), |_, _| 0.0).unwrap();
            errs.push((h1_seminorm_sq(u.faces()) - exact).abs());
        }
        assert!(errs[1] < 2e-3);
        assert!(errs[0] / errs[1] > 3.5);
        assert_eq!(h1_seminorm_sq(VelocityField::zeros(unit(8), 0.0).unwrap().faces()), 0.0);
    }

    #[test]
    fn h1_is_quadratic() {
        let u = VelocityField::from_stream_function(unit(24), 0.7, |x, y| (x * y).sin() * x * (1.0 - x) * y * (1.0 - y)).unwrap();
        let base = h1_seminorm_sq(u.faces());
        let doubled = h1_seminorm_sq(u.scaled(2.0).faces());
        assert_eq!(doubled, 4.0 * base);
    }

    #[test]
    fn korn_ratio_finite_for_strain_and_rotation() {
        let g = unit(32);
        let one = ScalarField::constant(g, 1.0);
        let strain = FaceField::from_fn(g, |x, _| x, |_, y| -y);
        let rotation = FaceField::from_fn(g, |_, y| -y, |x, _| x);
        for u in [&strain, &rotation] {
            let r = korn_ratio(u, &one).unwrap();
            assert!(r.is_finite() && r > 0.0);
        }
        assert!(deformation_energy(&rotation) < 1e-20);
        assert_eq!(korn_ratio(&FaceField::zeros(g), &one).unwrap(), 0.0);
        assert!(matches!(korn_ratio(&strain, &ScalarField::zeros(g)), Err(Error::NonPositiveWeight(_))));
    }

    #[test]
    fn korn_ratio_is_mesh_stable() {
        let weight = |g| ScalarField::from_fn(g, |x: f64, y: f64| 1.0 + x * y);
        let ratios: Vec<f64> = [32, 64, 128]
            .into_iter()
            .map(|n| {
                let g = unit(n);
                let u = FaceField::from_stream_function(g, |x, y| (PI * x).sin().powi(2) * (PI * y).sin() * (1.0 + y)).unwrap();
                korn_ratio(&u, &weight(g)).unwrap()
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 1.05, "{ratios:?}");
    }

    fn channel(n: usize) -> GridSpec<f64> {
        GridSpec::channel(n, n, 1.0, 1.0).unwrap()
    }

    fn shear_run(steps: usize) -> (Vec<FluidState<f64>>, SimConfig<f64>) {
        let g = channel(16);
        let config = SimConfig::new(0.0, 0.5, 0.01, 0.01 * steps as f64);
        let rho = ScalarField::from_fn(g, |_, y| 1.5 - 0.5 * (PI * y).cos());
        let u = FaceField::from_fn(g, |_, y| (PI * y).cos(), |_, _| 0.0);
        let mut states = vec![initial_state(&rho, InitialVelocity::Velocity(u), &config).unwrap()];
        for _ in 0..steps {
            let next = step(states.last().unwrap(), &config).unwrap();
            states.push(next);
        }
        (states, config)
    }

    #[test]
    fn ledger_at_start_is_balanced() {
        let (states, _) = shear_run(0);
        let ledger = EnergyLedger::new(&states[0]).unwrap();
        assert_eq!(energy_residual(&ledger), 0.0);
    }

    #[test]
    fn stationary_shear_ledger_and_weak_residual() {
        let (states, config) = shear_run(10);
        let mut ledger = EnergyLedger::new(&states[0]).unwrap();
        for s in &states[1..] {
            ledger = ledger_update(&ledger, s, &config, config.dt).unwrap();
        }
        assert_eq!(ledger.friction_acc, 0.0);
        assert_eq!(ledger.dissipation_acc, 0.0);
        assert!(ledger.residual().abs() <= 1e-12 * ledger.kinetic_initial);

        let g = *states[0].grid();
        let phi = FaceField::from_stream_function(g, |x, y| (2.0 * PI * x).sin() * (PI * y).sin().powi(2)).unwrap();
        let norm = phi.norm_l2();
        let test = TestField::new(phi, config.t_end).unwrap();
        let r = weak_residual(&states, &test, &config).unwrap();
        assert!(r.abs() <= 1e-10 * norm, "{r}");
    }

    #[test]
    fn zero_test_field_gives_zero_residual() {
        let (states, config) = shear_run(3);
        let test = TestField::new(FaceField::zeros(*states[0].grid()), config.t_end).unwrap();
        assert_eq!(weak_residual(&states, &test, &config).unwrap(), 0.0);
    }

    #[test]
    fn inadmissible_test_field_rejected() {
        let g = unit(16);
        let div = FaceField::from_fn(g, |x, _| x * (1.0 - x), |_, _| 0.0);
        assert!(matches!(TestField::new(div, 1.0), Err(Error::NotDivergenceFree { .. })));
    }

    #[test]
    fn self_comparison_has_zero_lhs() {
        let (states, config) = shear_run(4);
        let report = bound_report(&states, &states, &config, config.forcing.as_ref(), 6.0).unwrap();
        assert!(report.lhs_history.iter().all(|&(_, l)| l == 0.0));
        assert_eq!(report.data_term, 0.0);
        assert_eq!(report.forcing_term, 0.0);
        assert!(report.lhs_nondecreasing);
    }

    #[test]
    fn bound_constant_fit_flags_outliers() {
        let make = |lhs: f64, visc: f64| BoundReport {
            nu: 0.0,
            t: 0.0,
            lhs,
            lhs_history: vec![],
            lhs_nondecreasing: true,
            data_term: 0.0,
            visc_term: visc,
            forcing_term: 0.0,
            fitted_c: None,
            violation: false,
        };
        let mut reports = vec![make(2.0, 1.0), make(4.0, 2.0)];
        assert!((fit_bound_constant(&mut reports).unwrap() - 2.0).abs() < 1e-15);
        assert!(reports.iter().all(|r| !r.violation));
        let mut skewed = vec![make(1.0, 1.0), make(4.0, 1.0)];
        fit_bound_constant(&mut skewed).unwrap();
        assert!(skewed[1].violation && !skewed[0].violation);
        assert!(fit_bound_constant(&mut [make(1.0, 0.0)]).is_err());
    }
}
