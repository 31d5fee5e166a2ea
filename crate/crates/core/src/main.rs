use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use slipflow::experiments::config::{ConfigFile, Settings};
use slipflow::experiments::runner::{run, sweep};
use slipflow::experiments::scenario::scenario;
use slipflow::experiments::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "slipflow", version, about = "Variable-density Navier-Stokes with Navier slip walls")]
struct Cli {
    /// Run sweep members one after another instead of in parallel.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advance one scenario and write ledger.csv and snapshots.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario for several viscosities and write sweep.csv.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// Comma-separated viscosities, e.g. 1e-2,1e-3,1e-4.
        #[arg(long, value_delimiter = ',', required = true)]
        nu: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance checks; exits nonzero if any fails.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<SuiteArg>,
        /// Seed of the randomized projection trials.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Identities,
    Energy,
    Rates,
}

fn load(name: &str, config: Option<&Path>) -> Result<(slipflow::experiments::scenario::ScenarioSpec, Settings)> {
    let spec = scenario(name)?;
    let file = match config {
        Some(p) => ConfigFile::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ConfigFile::default(),
    };
    let settings = Settings::resolve(&spec, &file)?;
    Ok((spec, settings))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, config, out } => {
            let (spec, settings) = load(&scenario, config.as_deref())?;
            let outcome = run::<f64>(&spec, &settings, Some(&out), |_| Ok(()))?;
            let last = outcome.ledger.last().expect("ledger has the initial row");
            println!("{}: {} steps to t = {}", spec.name, last.step, last.t);
            println!("kinetic {:.6e} (initial {:.6e}), energy residual {:.3e}", last.kinetic, outcome.ledger[0].kinetic, last.residual);
            println!("relative mass drift {:.3e}, density range [{:.6}, {:.6}]", outcome.mass_drift(), outcome.rho_range.0, outcome.rho_range.1);
            if let Some((eu, er)) = outcome.oracle_error {
                println!("error against exact solution: velocity {eu:.3e}, density {er:.3e}");
            }
            println!("wrote {}", out.join("ledger.csv").display());
        }
        Command::Sweep { scenario, nu, config, out } => {
            let (spec, settings) = load(&scenario, config.as_deref())?;
            let result = sweep(&spec, &settings, &nu, cli.deterministic, Some(&out))?;
            for m in &result.members {
                println!("nu {:.3e}: |u - u_ref| {:.4e}, lhs {:.4e}, visc {:.4e} ({:.1} s)", m.nu, m.err_u_l2, m.report.lhs, m.report.visc_term, m.wall_clock.as_secs_f64());
            }
            println!("slope {:.4} (r^2 {:.5}), fitted C {:.4e}", result.fit.slope, result.fit.r_squared, result.fitted_c);
            let v = result.violations();
            if !v.is_empty() {
                println!("bound exceeded by more than 10% at nu = {v:?}");
            }
            println!("wrote {}", out.join("sweep.csv").display());
        }
        Command::Verify { suite, seed } => {
            let suites = match suite {
                None => Suite::ALL.to_vec(),
                Some(SuiteArg::Identities) => vec![Suite::Identities],
                Some(SuiteArg::Energy) => vec![Suite::Energy],
                Some(SuiteArg::Rates) => vec![Suite::Rates],
            };
            let mut failed = 0;
            for s in suites {
                for r in run_suite(s, seed) {
                    println!("{r}");
                    failed += usize::from(!r.passed);
                }
            }
            if failed > 0 {
                println!("{failed} check(s) failed");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
