use std::f64::consts::PI;
use std::sync::Arc;

use slipflow::diagnostics::kinetic_energy;
use slipflow::experiments::config::{ConfigFile, Settings};
use slipflow::experiments::runner::{run, RunOutcome};
use slipflow::experiments::scenario::scenario;
use slipflow::grid::{FaceField, GridSpec, ScalarField};
use slipflow::momentum::{initial_state, step, ForcingFn, InitialVelocity, SimConfig};
use slipflow::Real;

fn outcome<T: Real>(name: &str, config: &str) -> RunOutcome<T> {
    let spec = scenario(name).unwrap();
    let settings = Settings::resolve(&spec, &ConfigFile::parse(config).unwrap()).unwrap();
    run::<T>(&spec, &settings, None, |_| Ok(())).unwrap()
}

/// Summed residual `R(dt) = a dt + b`: `a dt` is the scheme's numerical
/// dissipation, `b = 2 R(dt / 2) - R(dt)` the part that survives `dt -> 0`.
fn persistent_residual(config: &str) -> f64 {
    let coarse = outcome::<f64>("lid_forced", config);
    let spec = scenario("lid_forced").unwrap();
    let base = Settings::resolve(&spec, &ConfigFile::parse(config).unwrap()).unwrap();
    let fine = run::<f64>(&spec, &Settings { dt: base.dt / 2.0, ..base }, None, |_| Ok(())).unwrap();
    let summed = |o: &RunOutcome<f64>| o.ledger.last().unwrap().residual;
    2.0 * summed(&fine) - summed(&coarse)
}

#[test]
fn compensation_term_closes_the_energy_balance() {
    let base = "[grid]\nnx = 24\nny = 24\n[physics]\nepsilon = 1e-3\n[solver]\nt_end = 0.25\n";
    let on = persistent_residual(base);
    let off = persistent_residual(&format!("{base}compensation = false\n"));
    assert!(on.abs() <= off.abs(), "with {on:e}, without {off:e}");
}

#[test]
fn unforced_kinetic_energy_never_grows() {
    for name in ["taylor_green_freeslip", "stratified_shear", "couette_robin", "vacuum_floor"] {
        let o = outcome::<f64>(name, "[solver]\nt_end = 0.1\n");
        for w in o.ledger.windows(2) {
            assert!(w[1].kinetic <= w[0].kinetic * (1.0 + 1e-12), "{name} step {}", w[1].step);
        }
    }
}

#[test]
fn density_l6_norm_is_nonincreasing() {
    for name in ["vacuum_floor", "stratified_shear"] {
        let o = outcome::<f64>(name, "[grid]\nnx = 32\nny = 32\n[physics]\nepsilon = 1e-3\n[solver]\nt_end = 0.2\n");
        assert!(o.lp6_max_increase <= 1e-12, "{name}: {}", o.lp6_max_increase);
    }
}

#[test]
fn single_precision_smoke() {
    let config = "[grid]\nnx = 16\nny = 16\n[solver]\nt_end = 0.2\npoisson_tol = 1e-5\nviscous_tol = 1e-5\n";
    let o = outcome::<f32>("lid_forced", config);
    let reference = outcome::<f64>("lid_forced", config);
    let (k32, k64) = (o.ledger.last().unwrap().kinetic, reference.ledger.last().unwrap().kinetic);
    assert!((k32 - k64).abs() <= 1e-4 * k64, "{k32} vs {k64}");
    assert!(o.mass_drift() < 1e-5, "{}", o.mass_drift());
    let ke0 = o.ledger[0].kinetic;
    let maxr = o.ledger.iter().map(|r| r.residual).fold(f64::NEG_INFINITY, f64::max);
    assert!(maxr <= 1e-5 * ke0);
    assert!(o.last.u().max_abs().is_finite());
}

fn mirror_cells(rho: &ScalarField<f64>) -> ScalarField<f64> {
    let g = rho.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let values: Vec<f64> = (0..nx * ny).map(|k| rho.get(nx - 1 - k % nx, k / nx)).collect();
    ScalarField::from_interior(*g, &values).unwrap()
}

#[test]
fn mirrored_data_gives_mirrored_solution() {
    let g: GridSpec<f64> = GridSpec::new(20, 16, 1.0, 0.8).unwrap();
    let rho = ScalarField::from_fn(g, |x: f64, y: f64| 1.5 + 0.4 * (3.0 * x + y).sin() * (PI * y).cos());
    let psi = |x: f64, y: f64| (PI * x).sin().powi(2) * (PI * y / 0.8).sin().powi(2) * (1.0 + x);
    let u0 = FaceField::from_stream_function(g, psi).unwrap();
    let force = FaceField::from_stream_function(g, |x, y| 0.3 * (PI * x).sin().powi(2) * (PI * y / 0.8).sin().powi(2) * x * x).unwrap();
    let mirrored_force = force.mirrored_x();

    let mut config = SimConfig::new(1e-2, 0.7, 2e-3, 0.05);
    config.density.epsilon = 1e-3;
    config.poisson_tol = 1e-13;
    config.viscous_tol = 1e-13;
    let mut mirror_config = config.clone();
    config.forcing = Arc::new(ForcingFn(move |_: &GridSpec<f64>, _t: f64| force.clone()));
    mirror_config.forcing = Arc::new(ForcingFn(move |_: &GridSpec<f64>, _t: f64| mirrored_force.clone()));

    let mut a = initial_state(&rho, InitialVelocity::Velocity(u0.clone()), &config).unwrap();
    let mut b = initial_state(&mirror_cells(&rho), InitialVelocity::Velocity(u0.mirrored_x()), &mirror_config).unwrap();
    for _ in 0..config.num_steps() {
        a = step(&a, &config).unwrap();
        b = step(&b, &mirror_config).unwrap();
    }
    let du = a.u().mirrored_x().faces().add_scaled(-1.0, b.u().faces()).max_abs();
    let drho = mirror_cells(a.rho()).zip_map(b.rho(), |p, q| (p - q).abs()).unwrap().max_abs();
    assert!(du <= 1e-12 * (1.0 + a.u().max_abs()), "velocity asymmetry {du:e}");
    assert!(drho <= 1e-12, "density asymmetry {drho:e}");
    let (ka, kb) = (kinetic_energy(a.rho(), a.u()).unwrap(), kinetic_energy(b.rho(), b.u()).unwrap());
    assert!((ka - kb).abs() <= 1e-12 * ka);
}
