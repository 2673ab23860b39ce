use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use boasbuck::catalog::TestFunction;
use boasbuck::lab::{emit_csv, Lab};
use boasbuck::moments::{moment_report, MomentInputs};
use boasbuck::operators::{apply_batch_with_breaks, J0Convention, OperatorConfig, OperatorKind};
use boasbuck::{BoasBuckSystem, Error};

#[derive(Parser)]
#[command(name = "boasbuck", version, about = "Boas-Buck operator toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check admissibility of a system file (or `builtin:<name>`).
    Validate { system: String },
    /// Print Theta_0..Theta_J at a point.
    Theta {
        system: String,
        #[arg(long)]
        y: f64,
        #[arg(long = "J", short = 'J')]
        order: usize,
    },
    /// Closed-form and quadrature moments as JSON.
    Moments {
        system: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        x: f64,
    },
    /// Evaluate an operator on a catalog function.
    Apply {
        system: String,
        #[arg(long, default_value = "durrmeyer")]
        op: OperatorKind,
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        x: f64,
        /// Drop the j = 0 term instead of a point mass at zero.
        #[arg(long)]
        drop_j0: bool,
        #[arg(long)]
        trunc_eps: Option<f64>,
    },
    /// Run an experiment spec and write the CSV.
    Experiment {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also print every fitted rate.
        #[arg(long)]
        fits: bool,
    },
}

#[derive(Serialize)]
struct MomentsOut {
    #[serde(flatten)]
    report: boasbuck::moments::MomentReport,
    mu2_coefficients: [f64; 3],
}

fn print_json<T: Serialize>(v: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("serializable output");
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// `Ok(true)` when all checks passed.
fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Cmd::Validate { system } => {
            let sys = BoasBuckSystem::load(&system)?;
            let report = sys.validate();
            for c in &report.checks {
                let tag = if c.passed { "ok" } else { "FAILED" };
                println!("{:<28} {:<8} {:?}: {}", c.name, tag, c.severity, c.detail);
            }
            let ok = report.is_admissible();
            println!("{}: {}", sys.name(), if ok { "admissible" } else { "NOT admissible" });
            Ok(ok)
        }
        Cmd::Theta { system, y, order } => {
            let sys = BoasBuckSystem::load(&system)?;
            print_json(&sys.theta_values(y, order)?);
            Ok(true)
        }
        Cmd::Moments { system, n, x } => {
            let sys = BoasBuckSystem::load(&system)?;
            let cfg = OperatorConfig::new(OperatorKind::Durrmeyer, n);
            let report = moment_report(&sys, &cfg, x)?;
            let mu2_coefficients = MomentInputs::new(&sys, n, x)?.mu2_coefficients()?;
            print_json(&MomentsOut {
                report,
                mu2_coefficients,
            });
            Ok(true)
        }
        Cmd::Apply {
            system,
            op,
            function,
            n,
            x,
            drop_j0,
            trunc_eps,
        } => {
            let sys = BoasBuckSystem::load(&system)?;
            let f = TestFunction::lookup(&function)?;
            let mut cfg = OperatorConfig::new(op, n);
            if drop_j0 {
                cfg = cfg.with_j0(J0Convention::Drop);
            }
            if let Some(eps) = trunc_eps {
                cfg = cfg.with_trunc_eps(eps);
            }
            let v = apply_batch_with_breaks(&sys, &cfg, &[f.as_fn()], f.kinks(), x)?.remove(0);
            println!("value            {:.15e}", v.value);
            println!("f(x)             {:.15e}", f.eval(x));
            println!("truncation_bound {:.3e}", v.truncation_bound);
            println!("quadrature_tol   {:.3e}", v.quadrature_tol);
            println!("j_cut            {}", v.j_cut);
            Ok(true)
        }
        Cmd::Experiment { spec, out, fits } => {
            let mut lab = Lab::from_path(&spec)?;
            let result = lab.run()?;
            emit_csv(&result, &out)?;
            for a in &result.assertions {
                println!("{a}");
            }
            if fits {
                for f in &result.fits {
                    let at = f.x.map(|x| format!(" x={x}")).unwrap_or_default();
                    println!(
                        "fit {}/{}{at}: slope {:.4} (residual {:.2e}, {} points)",
                        f.experiment, f.function, f.fit.slope, f.fit.residual, f.fit.points
                    );
                }
            }
            let failed = result.failures().count();
            println!(
                "{} rows written to {}; {} of {} assertions failed",
                result.rows.len(),
                out.display(),
                failed,
                result.assertions.len()
            );
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}
