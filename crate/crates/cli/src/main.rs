use clap::{Parser, Subcommand, ValueEnum};
use shearflow::diagnostics::{fit_decay, read_series, DecayModel};
use shearflow::experiments::{run_experiment, sweep_sigma, verify_suite, Artifacts, RunConfig};
use shearflow::Error;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "shearflow", version, about = "Free-surface shear flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Simulate {
        config: PathBuf,
        /// Allow writing into a non-empty output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Run the config once per surface tension and tabulate distances to the last run.
    SweepSigma {
        config: PathBuf,
        /// Descending list ending in 0, e.g. 1,0.1,0.01,0
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Fit a decay law to one column of a diagnostics table.
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long, default_value = "E_full")]
        column: String,
        /// Ignore samples before this time.
        #[arg(long, default_value_t = 1.0)]
        t_min: f64,
    },
    /// Run the fast invariant suite.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Exp,
    Alg,
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidParams(_) | Error::InvalidGrid(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn report_error(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(&e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, overwrite } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return report_error(e),
            };
            match run_experiment(&cfg, overwrite) {
                Ok(a) => finish(&a),
                Err(e) => report_error(e),
            }
        }
        Command::SweepSigma {
            config,
            sigmas,
            overwrite,
        } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return report_error(e),
            };
            if let Err(e) = cfg.validate() {
                return report_error(e);
            }
            let dir = shearflow::experiments::resolve_output(&cfg.output_dir);
            match sweep_sigma(&cfg, &sigmas, Some(&dir), overwrite) {
                Ok(table) => {
                    for r in &table.rows {
                        println!("sigma = {:<8} delta = {:.6e}", r.sigma, r.delta);
                    }
                    println!("strictly decreasing: {}", table.strictly_decreasing);
                    finish(&Artifacts::Sweep(table))
                }
                Err(e) => report_error(e),
            }
        }
        Command::Fit {
            csv,
            model,
            column,
            t_min,
        } => {
            let model = match model {
                Model::Exp => DecayModel::Exponential,
                Model::Alg => DecayModel::Algebraic,
            };
            let series = match read_series(&csv, &column) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match fit_decay(&series, model, t_min) {
                Ok(f) => {
                    println!("{}", serde_json::to_string_pretty(&f).expect("serializable"));
                    ExitCode::SUCCESS
                }
                Err(e) => report_error(e),
            }
        }
        Command::Verify => match verify_suite() {
            Ok(checks) => {
                let mut ok = true;
                for c in &checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {:<28} {:.3e} (tol {:.0e})", c.name, c.value, c.tolerance);
                    ok &= c.passed;
                }
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_CHECK)
                }
            }
            Err(e) => report_error(e),
        },
    }
}

fn finish(a: &Artifacts) -> ExitCode {
    if a.succeeded() {
        ExitCode::SUCCESS
    } else {
        eprintln!("run stopped early; see the termination record in summary.json");
        ExitCode::from(EXIT_SOLVER)
    }
}
