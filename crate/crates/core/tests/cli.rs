use std::fs;
use std::path::Path;
use std::process::Command;

fn slipflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slipflow"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_ledger_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnx = 12\nny = 12\n[solver]\nt_end = 0.05\n[output]\nsnapshot_every = 2\n");
    let out = dir.path().join("out");
    let status = slipflow().args(["run", "--scenario", "lid_forced", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    let mut lines = ledger.lines();
    assert_eq!(lines.next().unwrap(), "step,t,kinetic,dissipation_acc,friction_acc,work_acc,residual");
    assert!(lines.count() >= 2);
    let sidecar = fs::read_to_string(out.join("snapshots/rho_000002.txt")).unwrap();
    assert!(sidecar.contains("field = rho") && sidecar.contains("nx = 12") && sidecar.contains("time = "));
    let bytes = fs::metadata(out.join("snapshots/rho_000002.bin")).unwrap().len();
    assert_eq!(bytes, 12 * 12 * 8);
    assert!(out.join("snapshots/u_x_000000.bin").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[physics]\nviscosity = 0.1\n");
    let output = slipflow().args(["run", "--scenario", "lid_forced", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("viscosity"));
}

#[test]
fn unknown_scenario_lists_registry() {
    let output = slipflow().args(["run", "--scenario", "unknown", "--out", "unused"]).output().unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("stratified_shear") && err.contains("couette_robin"));
}

fn sweep_csv(dir: &Path, cfg: &Path, nus: &str, deterministic: bool) -> (bool, String) {
    let out = dir.join(format!("sweep-{nus}-{deterministic}"));
    let mut cmd = slipflow();
    if deterministic {
        cmd.arg("--deterministic");
    }
    let status = cmd.args(["sweep", "--scenario", "stratified_shear", "--nu", nus, "--config"]).arg(cfg).arg("--out").arg(&out).status().unwrap();
    (status.success(), fs::read_to_string(out.join("sweep.csv")).unwrap_or_default())
}

#[test]
fn deterministic_sweeps_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnx = 8\nny = 16\n[solver]\nt_end = 0.1\n");
    let (ok_a, a) = sweep_csv(dir.path(), &cfg, "1e-2,1e-3,1e-4", true);
    let (ok_b, b) = sweep_csv(dir.path(), &cfg, "1e-2,1e-3,1e-4", false);
    assert!(ok_a && ok_b);
    assert_eq!(a, b);
    assert!(a.starts_with("nu,err_u_l2,err_rho_l2,lhs,visc_term,fitted_C,slope_running\n"));
    assert_eq!(a.lines().count(), 4);
}

#[test]
fn rerun_reproduces_leading_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnx = 8\nny = 16\n[solver]\nt_end = 0.1\n");
    let (_, full) = sweep_csv(dir.path(), &cfg, "1e-1,1e-2,1e-3,1e-4", true);
    let (_, short) = sweep_csv(dir.path(), &cfg, "1e-1,1e-2,1e-3", true);
    let full: Vec<&str> = full.lines().collect();
    let short: Vec<&str> = short.lines().collect();
    assert_eq!(&full[..short.len()], &short[..]);
}

#[test]
fn duplicate_viscosities_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnx = 8\nny = 8\n");
    let (ok, _) = sweep_csv(dir.path(), &cfg, "1e-2,1e-2,1e-4", true);
    assert!(!ok);
}

#[test]
fn verify_identities_suite_passes() {
    let output = slipflow().args(["verify", "--suite", "identities"]).output().unwrap();
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
}
