//! Single runs and viscosity sweeps.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::diagnostics::{ledger_update, lp_norm, BoundReport, BoundTracker, EnergyLedger};
use crate::experiments::config::Settings;
use crate::experiments::fit::{fit_rate, RateFit};
use crate::experiments::output::{write_ledger, write_sweep, LedgerRow, Snapshot, SweepRow};
use crate::experiments::scenario::ScenarioSpec;
use crate::grid::{integrate, FaceField, GridSpec, ScalarField, VelocityField};
use crate::momentum::{initial_state, step, FluidState, InitialVelocity, SimConfig};
use crate::{Error, Real, Result};

/// Random divergence-free perturbation: a few low modes of a stream function
/// that is constant on every wall.
fn perturbation<T: Real>(grid: GridSpec<T>, amplitude: f64, seed: u64) -> Result<FaceField<T>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64)> = (1..=4)
        .flat_map(|m| (1..=4).map(move |n| (m as f64, n as f64)))
        .map(|(m, n)| (m, n, rng.gen_range(-1.0..1.0) / (m * m + n * n), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let (lx, ly, periodic) = (grid.lx().as_f64(), grid.ly().as_f64(), grid.periodic_x());
    let pi = std::f64::consts::PI;
    FaceField::from_stream_function(grid, move |x: T, y: T| {
        let (x, y) = (x.as_f64() / lx, y.as_f64() / ly);
        let v: f64 = modes
            .iter()
            .map(|&(m, n, a, phase)| {
                let sx = if periodic { (2.0 * pi * m * x + phase).sin() } else { (pi * m * x).sin() };
                a * sx * (pi * n * y).sin()
            })
            .sum();
        T::lit(amplitude * v)
    })
}

/// Builds the initial state and solver configuration of a scenario.
pub fn prepare<T: Real>(spec: &ScenarioSpec, settings: &Settings) -> Result<(FluidState<T>, SimConfig<T>)> {
    let grid: GridSpec<T> = settings.grid(spec)?;
    let config = settings.sim_config::<T>(spec);
    let mut init = spec.initial_velocity(grid, settings.alpha)?;
    if settings.noise > 0.0 {
        let noise = perturbation(grid, settings.noise, settings.seed)?;
        init = match init {
            InitialVelocity::Velocity(u) => InitialVelocity::Velocity(u.add_scaled(T::one(), &noise)),
            InitialVelocity::Momentum(_) => {
                return Err(Error::InvalidConfig(format!("{} prescribes momentum data; noise is not supported", spec.name)));
            }
        };
    }
    let state = initial_state(&spec.initial_density(grid), init, &config)?;
    Ok((state, config))
}

/// Per-run summary.
#[derive(Clone, Debug)]
pub struct RunOutcome<T> {
    pub initial: FluidState<T>,
    pub last: FluidState<T>,
    pub ledger: Vec<LedgerRow>,
    pub mass_initial: f64,
    pub mass_final: f64,
    /// Smallest and largest density seen at any step.
    pub rho_range: (f64, f64),
    /// `max_n (|rho^{n+1}|_6 - |rho^n|_6)`
    pub lp6_max_increase: f64,
    /// `(|u - u_exact|_2, |rho - rho_exact|_2)` at the final time.
    pub oracle_error: Option<(f64, f64)>,
    /// Comparison with the scenario's inviscid reference.
    pub bound: Option<BoundReport<T>>,
    pub wall_clock: Duration,
}

impl<T> RunOutcome<T> {
    pub fn mass_drift(&self) -> f64 {
        ((self.mass_final - self.mass_initial) / self.mass_initial).abs()
    }
}

fn l2_errors<T: Real>(state: &FluidState<T>, u: &FaceField<T>, rho: &ScalarField<T>) -> Result<(f64, f64)> {
    let du = state.u().faces().add_scaled(-T::one(), u);
    let drho = state.rho().zip_map(rho, |a, b| a - b)?;
    Ok((du.norm_l2().as_f64(), integrate(&drho.map(|v| v * v)).sqrt().as_f64()))
}

fn reference_state<T: Real>(t: T, reference: &(ScalarField<T>, FaceField<T>), alpha: T) -> Result<FluidState<T>> {
    let (rho, u) = reference;
    FluidState::from_parts(t, rho.clone(), VelocityField::from_faces(u.clone(), alpha)?, ScalarField::zeros(*rho.grid()))
}

fn write_snapshots<T: Real>(dir: &Path, state: &FluidState<T>) -> Result<()> {
    let g = state.grid();
    let snap = dir.join("snapshots");
    Snapshot::scalar("rho", state.step(), state.t(), state.rho()).write(&snap, g)?;
    Snapshot::scalar("pi", state.step(), state.t(), state.pi()).write(&snap, g)?;
    for s in Snapshot::faces("u", state.step(), state.t(), state.u().faces()) {
        s.write(&snap, g)?;
    }
    Ok(())
}

/// Advances a scenario to its final time, recording the energy ledger every
/// step. `observe` sees every state, the initial one included. With `out`
/// set, writes `ledger.csv` and snapshots there.
pub fn run<T: Real>(
    spec: &ScenarioSpec,
    settings: &Settings,
    out: Option<&Path>,
    mut observe: impl FnMut(&FluidState<T>) -> Result<()>,
) -> Result<RunOutcome<T>> {
    let start = Instant::now();
    let (initial, config) = prepare::<T>(spec, settings)?;
    let grid = *initial.grid();
    let alpha = T::lit(settings.alpha);
    let reference = spec.euler_reference::<T>(grid, settings.alpha)?;
    let mut tracker = match &reference {
        Some(r) => Some(BoundTracker::new(&initial, &reference_state(initial.t(), r, alpha)?, config.nu, T::lit(6.0))?),
        None => None,
    };
    let zero_force = FaceField::zeros(grid);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        if settings.snapshots {
            write_snapshots(dir, &initial)?;
        }
    }
    observe(&initial)?;
    let mut ledger = EnergyLedger::new(&initial)?;
    let mut rows = vec![LedgerRow::from_ledger(&ledger)];
    let mass_initial = integrate(initial.rho()).as_f64();
    let (lo, hi) = initial.rho().min_max();
    let mut rho_range = (lo.as_f64(), hi.as_f64());
    let mut lp6 = lp_norm(initial.rho(), 6.0)?.as_f64();
    let mut lp6_max_increase = f64::NEG_INFINITY;
    let mut state = initial.clone();
    for n in 0..config.num_steps() {
        let next = step(&state, &config).map_err(|e| Error::AtStep { step: n + 1, source: Box::new(e) })?;
        ledger = ledger_update(&ledger, &next, &config, next.t() - state.t())?;
        rows.push(LedgerRow::from_ledger(&ledger));
        let (lo, hi) = next.rho().min_max();
        rho_range = (rho_range.0.min(lo.as_f64()), rho_range.1.max(hi.as_f64()));
        let p6 = lp_norm(next.rho(), 6.0)?.as_f64();
        lp6_max_increase = lp6_max_increase.max(p6 - lp6);
        lp6 = p6;
        if let (Some(tr), Some(r)) = (tracker.as_mut(), &reference) {
            tr.observe(&next, &reference_state(next.t(), r, alpha)?, &zero_force, next.t() - state.t())?;
        }
        if let Some(dir) = out {
            if settings.snapshots && settings.snapshot_every > 0 && next.step() % settings.snapshot_every == 0 {
                write_snapshots(dir, &next)?;
            }
        }
        observe(&next)?;
        state = next;
    }
    if let Some(dir) = out {
        write_ledger(&dir.join("ledger.csv"), &rows)?;
        let already = settings.snapshot_every > 0 && state.step() % settings.snapshot_every == 0;
        if settings.snapshots && !already && state.step() > 0 {
            write_snapshots(dir, &state)?;
        }
    }
    let t = state.t().as_f64();
    let oracle_error = match (
        spec.exact_velocity::<T>(grid, settings.nu, settings.alpha, t)?,
        spec.exact_density::<T>(grid, settings.nu, settings.alpha, t)?,
    ) {
        (Some(u), Some(rho)) => Some(l2_errors(&state, &u, &rho)?),
        _ => None,
    };
    Ok(RunOutcome {
        mass_initial,
        mass_final: integrate(state.rho()).as_f64(),
        rho_range,
        lp6_max_increase,
        oracle_error,
        bound: tracker.map(BoundTracker::finish),
        ledger: rows,
        initial,
        last: state,
        wall_clock: start.elapsed(),
    })
}

#[derive(Clone, Debug)]
pub struct SweepMember {
    pub nu: f64,
    pub err_u_l2: f64,
    pub err_rho_l2: f64,
    pub report: BoundReport<f64>,
    pub wall_clock: Duration,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub scenario: String,
    pub nus: Vec<f64>,
    pub members: Vec<SweepMember>,
    pub rows: Vec<SweepRow>,
    /// Fit of `err_u_l2` against `nu`.
    pub fit: RateFit,
    pub fitted_c: f64,
}

impl SweepResult {
    pub fn violations(&self) -> Vec<f64> {
        self.members.iter().filter(|m| m.report.violation).map(|m| m.nu).collect()
    }
}

/// Validates a viscosity list: at least three strictly positive, distinct
/// values spanning 1.5 decades. Returns them in decreasing order.
pub fn check_viscosities(nus: &[f64]) -> Result<Vec<f64>> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    if nus.iter().any(|&nu| !(nu > 0.0) || !nu.is_finite()) {
        return bad(format!("viscosities must be positive and finite: {nus:?}"));
    }
    let mut sorted = nus.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return bad(format!("duplicate viscosities in {nus:?}"));
    }
    if sorted.len() < 3 {
        return bad(format!("need at least 3 viscosities, got {}", sorted.len()));
    }
    if (sorted[0] / sorted[sorted.len() - 1]).log10() < 1.5 - 1e-12 {
        return bad(format!("viscosities must span at least 1.5 decades: {nus:?}"));
    }
    Ok(sorted)
}

fn sweep_member(spec: &ScenarioSpec, settings: &Settings, nu: f64) -> Result<SweepMember> {
    let s = Settings { nu, ..settings.clone() };
    let outcome = run::<f64>(spec, &s, None, |_| Ok(()))?;
    let grid = *outcome.last.grid();
    let (rho, u) = spec
        .euler_reference::<f64>(grid, s.alpha)?
        .ok_or_else(|| Error::InvalidConfig(format!("{} has no exact inviscid reference to sweep against", spec.name)))?;
    let (err_u_l2, err_rho_l2) = l2_errors(&outcome.last, &u, &rho)?;
    Ok(SweepMember { nu, err_u_l2, err_rho_l2, report: outcome.bound.expect("reference present"), wall_clock: outcome.wall_clock })
}

fn sweep_rows(members: &[SweepMember]) -> Vec<SweepRow> {
    (0..members.len())
        .map(|k| {
            let prefix = &members[..=k];
            let num: f64 = prefix.iter().map(|m| m.report.lhs * m.report.rhs()).sum();
            let den: f64 = prefix.iter().map(|m| m.report.rhs() * m.report.rhs()).sum();
            let points: Vec<(f64, f64)> = prefix.iter().map(|m| (m.nu, m.err_u_l2)).collect();
            let m = &members[k];
            SweepRow {
                nu: m.nu,
                err_u_l2: m.err_u_l2,
                err_rho_l2: m.err_rho_l2,
                lhs: m.report.lhs,
                visc_term: m.report.visc_term,
                fitted_c: if den > 0.0 { num / den } else { f64::NAN },
                slope_running: fit_rate(&points).map_or(f64::NAN, |f| f.slope),
            }
        })
        .collect()
}

/// Runs the scenario once per viscosity (largest first) and compares each
/// final state with the inviscid reference. Members run in parallel unless
/// `deterministic` is set; results are merged in viscosity order either way.
/// When a member fails, the rows of the members before it are still written.
pub fn sweep(spec: &ScenarioSpec, settings: &Settings, nus: &[f64], deterministic: bool, out: Option<&Path>) -> Result<SweepResult> {
    let nus = check_viscosities(nus)?;
    let results: Vec<Result<SweepMember>> = if deterministic {
        nus.iter().map(|&nu| sweep_member(spec, settings, nu)).collect()
    } else {
        nus.par_iter().map(|&nu| sweep_member(spec, settings, nu)).collect()
    };
    let mut members = Vec::with_capacity(nus.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(m) => members.push(m),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let mut reports: Vec<BoundReport<f64>> = members.iter().map(|m| m.report.clone()).collect();
    let fitted_c = if members.is_empty() { f64::NAN } else { crate::diagnostics::fit_bound_constant(&mut reports).unwrap_or(f64::NAN) };
    for (m, r) in members.iter_mut().zip(reports) {
        m.report = r;
    }
    let rows = sweep_rows(&members);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_sweep(&dir.join("sweep.csv"), &rows)?;
    }
    if let Some(e) = failure {
        let nu = nus[members.len()];
        return Err(Error::InvalidConfig(format!("sweep member nu = {nu} failed after {} completed: {e}", members.len())));
    }
    let points: Vec<(f64, f64)> = members.iter().map(|m| (m.nu, m.err_u_l2)).collect();
    let fit = fit_rate(&points)?;
    Ok(SweepResult { scenario: spec.name.to_string(), nus, members, rows, fit, fitted_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ConfigFile;
    use crate::experiments::scenario::scenario;

    fn settings(name: &str, text: &str) -> (ScenarioSpec, Settings) {
        let spec = scenario(name).unwrap();
        let s = Settings::resolve(&spec, &ConfigFile::parse(text).unwrap()).unwrap();
        (spec, s)
    }

    #[test]
    fn viscosity_list_validation() {
        assert_eq!(check_viscosities(&[1e-4, 1e-2, 1e-3]).unwrap(), vec![1e-2, 1e-3, 1e-4]);
        assert!(check_viscosities(&[1e-2, 1e-2, 1e-4]).is_err());
        assert!(check_viscosities(&[1e-2, 1e-4]).is_err());
        assert!(check_viscosities(&[1e-2, 5e-3, 1e-3]).is_err());
        assert!(check_viscosities(&[1e-2, 0.0, 1e-4]).is_err());
    }

    #[test]
    fn inviscid_stratified_shear_is_stationary() {
        let (spec, s) = settings("stratified_shear", "[grid]\nnx = 16\nny = 16\n[physics]\nnu = 0.0\n[solver]\nt_end = 0.2\n");
        let out = run::<f64>(&spec, &s, None, |_| Ok(())).unwrap();
        let (eu, er) = out.oracle_error.unwrap();
        assert!(eu <= 1e-10 && er <= 1e-10, "{eu} {er}");
        assert!(out.mass_drift() <= 1e-12);
        assert!(out.bound.unwrap().lhs <= 1e-20);
    }

    #[test]
    fn noise_is_reproducible() {
        let (spec, s) = settings("lid_forced", "[grid]\nnx = 12\nny = 12\n[physics]\nnoise = 0.05\n[solver]\nt_end = 0.05\nseed = 7\n");
        let a = run::<f64>(&spec, &s, None, |_| Ok(())).unwrap();
        let b = run::<f64>(&spec, &s, None, |_| Ok(())).unwrap();
        assert_eq!(a.last, b.last);
        let c = run::<f64>(&spec, &Settings { seed: 8, ..s }, None, |_| Ok(())).unwrap();
        assert_ne!(a.last, c.last);
    }

    #[test]
    fn failing_member_keeps_completed_rows() {
        let (spec, s) = settings("stratified_shear", "[grid]\nnx = 8\nny = 8\n[solver]\nt_end = 0.05\nmax_iter = 1\n");
        let dir = tempfile::tempdir().unwrap();
        let res = sweep(&spec, &s, &[1e-1, 1e-2, 1e-3], true, Some(dir.path()));
        assert!(res.is_err());
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(text.starts_with("nu,err_u_l2"));
    }
}
