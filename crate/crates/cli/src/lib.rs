//! Command-line surface of `penetra`: single attacks, batch benchmarks against
//! uniform-noise baselines, eigensolver diagnostics, oracle health checks and
//! synthetic inputs.

pub mod args;
pub mod attack;
pub mod bench;
pub mod check;
pub mod eig;
pub mod error;
pub mod inputs;
pub mod spec;

pub use args::{Cli, Command, Method};
pub use error::{CliError, Result};

/// Exit status when the solver stopped at `itmax`; artifacts are still written.
pub const EXIT_NOT_CONVERGED: i32 = 2;

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Attack(a) => {
            let converged = attack::run_attack(&a)?;
            Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::Bench(b) => {
            if bench::run_bench_command(&b)? {
                Ok(0)
            } else {
                Err(CliError::Failed("every input failed".into()))
            }
        }
        Command::Eig(e) => {
            let report = eig::run_eig(&e)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.converged {
                0
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::OracleCheck(c) => {
            let report = check::run_check(&c)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(err) = &report.error {
                eprintln!("error: {err}");
            }
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::MakeInputs(m) => {
            for p in inputs::make_inputs(&m)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}
