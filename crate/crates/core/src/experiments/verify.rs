//! Acceptance checks shared by `slipflow verify` and the acceptance test.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::diagnostics::{weak_residual, TestField};
use crate::experiments::config::{ConfigFile, Settings};
use crate::experiments::fit::refinement_order;
use crate::experiments::runner::{run, sweep, RunOutcome};
use crate::experiments::scenario::{robin_wavenumber, scenario, REGISTRY};
use crate::grid::{FaceField, GridSpec, ScalarField, VelocityField};
use crate::momentum::{pressure_project, SimConfig};
use crate::operators::{divergence, gradient, ibp_identity};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Identities,
    Energy,
    Rates,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Identities, Suite::Energy, Suite::Rates];

    pub fn criteria(self) -> &'static [u8] {
        match self {
            Suite::Identities => &[5, 9],
            Suite::Energy => &[1, 2, 3, 4],
            Suite::Rates => &[6, 7, 8],
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} [{}] {}: {} ({:.1} s)", self.id, self.title, self.detail, self.elapsed.as_secs_f64())
    }
}

pub const TITLES: [&str; 9] = [
    "mass conservation",
    "maximum principle",
    "L6 monotonicity",
    "discrete energy identity",
    "slip integration by parts",
    "Navier-wall accuracy",
    "inviscid limit",
    "weak formulation residual",
    "projection",
];

fn settings(name: &str, text: &str) -> Result<Settings> {
    Settings::resolve(&scenario(name)?, &ConfigFile::parse(text)?)
}

fn run_quiet(name: &str, s: &Settings) -> Result<RunOutcome<f64>> {
    run::<f64>(&scenario(name)?, s, None, |_| Ok(()))
}

fn mass_conservation() -> Result<(bool, String)> {
    let mut worst: (f64, &str) = (0.0, "");
    let mut slowest = Duration::ZERO;
    for name in REGISTRY {
        let base = settings(name, "[grid]\nnx = 64\nny = 64\n")?;
        let dt = base.dt.min(0.2 / 64.0);
        let s = Settings { dt, t_end: 500.0 * dt, ..base };
        let out = run_quiet(name, &s)?;
        if out.last.step() != 500 {
            return Err(Error::Mismatch(format!("{name} ran {} steps", out.last.step())));
        }
        if out.mass_drift() >= worst.0 {
            worst = (out.mass_drift(), name);
        }
        slowest = slowest.max(out.wall_clock);
    }
    let ok = worst.0 <= 1e-12 && slowest.as_secs_f64() <= 10.0;
    Ok((ok, format!("max relative drift {:.2e} ({}), slowest run {:.1} s", worst.0, worst.1, slowest.as_secs_f64())))
}

fn density_runs() -> Result<Vec<(&'static str, RunOutcome<f64>)>> {
    ["stratified_shear", "lid_forced"]
        .into_iter()
        .map(|name| {
            let s = settings(name, "[solver]\nt_end = 1.0\nflux_mode = \"upwind\"\n")?;
            Ok((name, run_quiet(name, &s)?))
        })
        .collect()
}

fn maximum_principle(runs: &[(&str, RunOutcome<f64>)]) -> (bool, String) {
    let mut ok = true;
    let mut parts = vec![];
    for (name, out) in runs {
        let (lo, hi) = out.rho_range;
        ok &= lo >= 1.0 - 1e-10 && hi <= 2.0 + 1e-10;
        parts.push(format!("{name} rho in [{lo:.12}, {hi:.12}]"));
    }
    (ok, parts.join(", "))
}

fn lp_monotonicity(runs: &[(&str, RunOutcome<f64>)]) -> (bool, String) {
    let mut ok = true;
    let mut parts = vec![];
    for (name, out) in runs {
        ok &= out.lp6_max_increase <= 1e-10;
        parts.push(format!("{name} max step increase {:.2e}", out.lp6_max_increase));
    }
    (ok, parts.join(", "))
}

fn energy_identity() -> Result<(bool, String)> {
    let base = settings("lid_forced", "")?;
    let coarse = run_quiet("lid_forced", &base)?;
    let fine = run_quiet("lid_forced", &Settings { dt: base.dt / 2.0, ..base.clone() })?;
    let summed = |o: &RunOutcome<f64>| o.ledger.last().expect("ledger").residual.abs();
    let ratio = summed(&coarse) / summed(&fine);
    let ke0 = coarse.ledger[0].kinetic;
    let max_residual = coarse.ledger.iter().chain(&fine.ledger).map(|r| r.residual).fold(f64::NEG_INFINITY, f64::max);
    let ok = ratio >= 1.85 && max_residual <= 1e-8 * ke0;
    Ok((
        ok,
        format!(
            "summed residual {:.3e} -> {:.3e}, ratio {ratio:.3}; max residual {max_residual:.2e} vs 1e-8 KE0 = {:.2e}",
            summed(&coarse),
            summed(&fine),
            1e-8 * ke0
        ),
    ))
}

/// Composite five-point Gauss-Legendre rule on `[0, 1]`.
fn gauss_legendre(panels: usize) -> Vec<(f64, f64)> {
    const NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const WEIGHTS: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let h = 1.0 / panels as f64;
    (0..panels)
        .flat_map(|p| NODES.iter().zip(WEIGHTS).map(move |(&x, w)| ((p as f64 + 0.5 * (x + 1.0)) * h, 0.5 * w * h)))
        .collect()
}

/// Continuous values `(-int Lap f . g, 2 int D(f):D(g), -2 int_{dOmega} D(f) n . g)`
/// for `f = (sin x y^3 + x^2 y, cos(x y) + y^2)` and `g = curl((1 + x) sin(pi x) sin(pi y))`.
fn ibp_exact() -> (f64, f64, f64) {
    let (s, c) = (|t: f64| (PI * t).sin(), |t: f64| (PI * t).cos());
    let g = |x: f64, y: f64| ((1.0 + x) * s(x) * PI * c(y), -(s(x) + (1.0 + x) * PI * c(x)) * s(y));
    let grad_g = |x: f64, y: f64| {
        let gxx = PI * c(y) * (s(x) + (1.0 + x) * PI * c(x));
        let gxy = -PI * PI * (1.0 + x) * s(x) * s(y);
        let gyx = -(2.0 * PI * c(x) - (1.0 + x) * PI * PI * s(x)) * s(y);
        let gyy = -(s(x) + (1.0 + x) * PI * c(x)) * PI * c(y);
        (gxx, gxy, gyx, gyy)
    };
    let lap_f = |x: f64, y: f64| (-x.sin() * y.powi(3) + 2.0 * y + 6.0 * y * x.sin(), -(x * x + y * y) * (x * y).cos() + 2.0);
    let grad_f = |x: f64, y: f64| {
        (x.cos() * y.powi(3) + 2.0 * x * y, 3.0 * x.sin() * y * y + x * x, -y * (x * y).sin(), -x * (x * y).sin() + 2.0 * y)
    };
    let shear_f = |x: f64, y: f64| {
        let (_, fxy, fyx, _) = grad_f(x, y);
        fxy + fyx
    };
    let rule = gauss_legendre(64);
    let (mut lhs, mut vol) = (0.0, 0.0);
    for &(x, wx) in &rule {
        for &(y, wy) in &rule {
            let (gx, gy) = g(x, y);
            let (lx, ly) = lap_f(x, y);
            lhs -= wx * wy * (lx * gx + ly * gy);
            let (fxx, fxy, fyx, fyy) = grad_f(x, y);
            let (gxx, gxy, gyx, gyy) = grad_g(x, y);
            vol += 2.0 * wx * wy * (fxx * gxx + fyy * gyy + 0.5 * (fxy + fyx) * (gxy + gyx));
        }
    }
    let mut bnd = 0.0;
    for &(t, w) in &rule {
        bnd += w * (shear_f(t, 0.0) * g(t, 0.0).0 - shear_f(t, 1.0) * g(t, 1.0).0);
        bnd += w * (shear_f(0.0, t) * g(0.0, t).1 - shear_f(1.0, t) * g(1.0, t).1);
    }
    (lhs, vol, bnd)
}

fn integration_by_parts() -> Result<(bool, String)> {
    let (lhs, vol, bnd) = ibp_exact();
    let mut errors = vec![];
    let mut worst_mismatch: f64 = 0.0;
    for n in [16, 32, 64, 128] {
        let g = GridSpec::new(n, n, 1.0, 1.0)?;
        let f = FaceField::from_fn(g, |x: f64, y: f64| x.sin() * y.powi(3) + x * x * y, |x: f64, y: f64| (x * y).cos() + y * y);
        let gv = FaceField::from_stream_function(g, |x: f64, y: f64| (1.0 + x) * (PI * x).sin() * (PI * y).sin())?;
        let r = ibp_identity(&f, &gv)?;
        worst_mismatch = worst_mismatch.max(r.mismatch.abs() / r.lhs.abs().max(1.0));
        errors.push((r.lhs - lhs).abs() + (r.rhs_volume - vol).abs() + (r.rhs_boundary - bnd).abs());
    }
    let fit = refinement_order(&errors)?;
    let ok = fit.slope >= 1.8 && fit.r_squared >= 0.99 && worst_mismatch <= 1e-10;
    Ok((
        ok,
        format!(
            "order {:.3} (r^2 {:.4}) of the terms against the continuous lemma, errors {:.2e}..{:.2e}; discrete mismatch {worst_mismatch:.1e}",
            fit.slope,
            fit.r_squared,
            errors[0],
            errors[errors.len() - 1]
        ),
    ))
}

fn navier_accuracy() -> Result<(bool, String)> {
    let s = settings("couette_robin", "")?;
    let out = run_quiet("couette_robin", &s)?;
    let rate = -(out.last.u().norm_l2() / out.initial.u().norm_l2()).ln() / out.last.t();
    let k = robin_wavenumber(s.alpha);
    let expected = s.nu * k * k / out.initial.rho().get(0, 0);
    let rel = (rate - expected).abs() / expected;
    let mut errors = vec![];
    for n in [16, 32, 64] {
        let s = settings("taylor_green_freeslip", &format!("[grid]\nnx = {n}\nny = {n}\n"))?;
        errors.push(run_quiet("taylor_green_freeslip", &s)?.oracle_error.expect("analytic oracle").0);
    }
    let order = refinement_order(&errors)?.slope;
    Ok((
        rel <= 0.01 && order >= 1.8,
        format!("couette decay rate {rate:.6e} vs {expected:.6e} (rel {rel:.1e}); taylor-green L2 order {order:.3}"),
    ))
}

fn inviscid_limit() -> Result<(bool, String)> {
    let spec = scenario("stratified_shear")?;
    let s = Settings::resolve(&spec, &ConfigFile::parse("[grid]\nnx = 128\nny = 128\n[solver]\nt_end = 0.5\n")?)?;
    let start = Instant::now();
    let r = sweep(&spec, &s, &[1e-2, 3e-3, 1e-3, 3e-4, 1e-4], false, None)?;
    let violations = r.violations();
    let ok = (0.45..=0.60).contains(&r.fit.slope) && r.fit.r_squared >= 0.98 && violations.is_empty() && start.elapsed().as_secs() <= 900;
    Ok((ok, format!("slope {:.3} (r^2 {:.4}), fitted C {:.3e}, bound violations {violations:?}", r.fit.slope, r.fit.r_squared, r.fitted_c)))
}

pub const WEAK_TEST_STREAMS: [fn(f64, f64) -> f64; 3] = [
    |x, y| (PI * x).sin().powi(2) * (PI * y).sin().powi(2),
    |x, y| (PI * x).sin().powi(2) * (PI * y).sin().powi(2) * (1.0 + x),
    |x, y| (2.0 * PI * x).sin() * (PI * y).sin() * x * y,
];

fn weak_formulation() -> Result<(bool, String)> {
    let spec = scenario("taylor_green_freeslip")?;
    let t_end = 0.5;
    let mut residuals = vec![vec![]; WEAK_TEST_STREAMS.len()];
    for n in [16, 32, 64] {
        let h = 1.0 / n as f64;
        let s = Settings::resolve(&spec, &ConfigFile::parse(&format!("[grid]\nnx = {n}\nny = {n}\n[solver]\ndt = {}\nt_end = {t_end}\n", 0.2 * h))?)?;
        let mut trajectory = vec![];
        run::<f64>(&spec, &s, None, |state| {
            trajectory.push(state.clone());
            Ok(())
        })?;
        let config = s.sim_config::<f64>(&spec);
        let grid = *trajectory[0].grid();
        for (k, psi) in WEAK_TEST_STREAMS.iter().enumerate() {
            let test = TestField::new(FaceField::from_stream_function(grid, |x, y| psi(x, y))?, t_end)?;
            residuals[k].push(weak_residual(&trajectory, &test, &config)?.abs());
        }
    }
    let orders: Vec<f64> = residuals.iter().map(|r| refinement_order(r).map(|f| f.slope)).collect::<Result<_>>()?;
    let ok = orders.iter().all(|&o| o >= 0.9);
    Ok((ok, format!("orders {:?} under joint (dt, h) halving", orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>())))
}

fn div_l2(u: &VelocityField<f64>) -> f64 {
    let d = divergence(u.faces());
    (d.interior().iter().map(|v| v * v).sum::<f64>() * u.grid().cell_area()).sqrt()
}

fn projection(seed: u64) -> Result<(bool, String)> {
    let n = 32;
    let g = GridSpec::new(n, n, 1.0, 1.0)?;
    let config = SimConfig::new(0.0, 0.0, 1.0, 1.0);
    let tol = config.poisson_tol;
    let grad = gradient(&ScalarField::from_fn(g, |x: f64, _| (PI * x).cos()));
    let u_star = VelocityField::from_faces(grad, 0.0)?;
    let (u, _) = pressure_project(&u_star, &ScalarField::constant(g, 1.0), 1.0, &config)?;
    let annihilated = u.max_abs() / u_star.max_abs();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let grid = if trial % 2 == 0 { g } else { GridSpec::channel(n, n / 2, 1.0, 0.5)? };
        let alpha = rng.gen_range(0.0..2.0);
        let packed: Vec<f64> = (0..grid.num_face_unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u_star = VelocityField::from_packed(grid, alpha, &packed)?;
        let contrast = rng.gen_range(1.0..100.0);
        let cells: Vec<f64> = (0..grid.num_cells()).map(|_| if rng.gen_bool(0.5) { 1.0 } else { contrast }).collect();
        let rho = ScalarField::from_interior(grid, &cells)?;
        let dt = rng.gen_range(1e-3..1.0);
        let (u, _) = pressure_project(&u_star, &rho, dt, &config)?;
        u.check_impermeable()?;
        worst = worst.max(div_l2(&u) / (tol * u_star.norm_l2()));
    }
    let ok = annihilated <= 10.0 * tol && worst <= 10.0;
    Ok((ok, format!("gradient remainder {annihilated:.2e} (limit {:.0e}); worst |div u| / (tol |u*|) over 100 trials {worst:.3}", 10.0 * tol)))
}

fn finish(id: u8, start: Instant, outcome: Result<(bool, String)>) -> CriterionResult {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, title: TITLES.get((id as usize).wrapping_sub(1)).copied().unwrap_or("unknown"), passed, detail, elapsed: start.elapsed() }
}

/// Runs the listed criteria (numbers 1 to 9) in order.
pub fn run_criteria(ids: &[u8], seed: u64) -> Vec<CriterionResult> {
    let mut results = vec![];
    let mut density: Option<Result<Vec<(&'static str, RunOutcome<f64>)>>> = None;
    for &id in ids {
        let start = Instant::now();
        let outcome = match id {
            1 => mass_conservation(),
            2 | 3 => {
                match density.get_or_insert_with(density_runs) {
                    Ok(runs) if id == 2 => Ok(maximum_principle(runs)),
                    Ok(runs) => Ok(lp_monotonicity(runs)),
                    Err(e) => Err(Error::Mismatch(e.to_string())),
                }
            }
            4 => energy_identity(),
            5 => integration_by_parts(),
            6 => navier_accuracy(),
            7 => inviscid_limit(),
            8 => weak_formulation(),
            9 => projection(seed),
            other => Err(Error::InvalidConfig(format!("no criterion {other}"))),
        };
        results.push(finish(id, start, outcome));
    }
    results
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<CriterionResult> {
    run_criteria(suite.criteria(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(3);
        let integral: f64 = rule.iter().map(|&(x, w)| w * x.powi(9)).sum();
        assert!((integral - 0.1).abs() < 1e-14);
        let total: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn continuous_lemma_balances() {
        let (lhs, vol, bnd) = ibp_exact();
        assert!((lhs - vol - bnd).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} {vol} {bnd}");
    }

    #[test]
    fn suites_cover_every_criterion() {
        let mut ids: Vec<u8> = Suite::ALL.iter().flat_map(|s| s.criteria().iter().copied()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=9).collect::<Vec<u8>>());
    }

    #[test]
    fn unknown_criterion_fails() {
        let r = run_criteria(&[42], 0);
        assert!(!r[0].passed);
    }
}
