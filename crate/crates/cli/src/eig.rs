use penetra::eigen::{
    dense_eig_reference, solve_largest_magnitude, DenseOperator, EigConfig, EigResult,
};
use penetra::jvp::{Epsilon, JvpOperator};
use penetra::read_tensor;
use serde::Serialize;

use crate::args::EigArgs;
use crate::attack::PairSummary;
use crate::error::{CliError, Result};
use crate::spec::open_oracle;

#[derive(Debug, Serialize)]
pub struct EigReport {
    pub n: usize,
    pub pairs: Vec<PairSummary>,
    pub matvecs: u64,
    pub oracle_evals: u64,
    pub cycles: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Leading dense-reference eigenvalues `(re, im)`, when requested.
    pub reference: Option<Vec<(f64, f64)>>,
}

pub fn run_eig(args: &EigArgs) -> Result<EigReport> {
    let cfg = EigConfig {
        k: args.solver.k,
        tol: args.tol,
        itmax: args.solver.itmax,
        ncv: args.solver.ncv,
        mode: args.solver.mode(),
        seed: args.solver.seed,
    };
    let (n, result, reference) = match (&args.matrix, &args.oracle, &args.input) {
        (Some(path), _, _) => {
            let a = read_tensor(path)?;
            let op = DenseOperator::new(&a)?;
            let result = solve_largest_magnitude(&op, &cfg)?;
            let reference = if args.reference {
                Some(
                    dense_eig_reference(&a)?
                        .into_iter()
                        .take(args.solver.k)
                        .map(|p| (p.re, p.im))
                        .collect(),
                )
            } else {
                None
            };
            (a.shape()[0], result, reference)
        }
        (None, Some(spec), Some(input)) => {
            let base = read_tensor(input)?;
            let oracle = open_oracle(spec)?;
            let eps = if args.solver.relative_epsilon {
                Epsilon::Relative(args.solver.epsilon)
            } else {
                Epsilon::Absolute(args.solver.epsilon)
            };
            let op = JvpOperator::for_oracle(&oracle, &base, eps)?;
            let result = solve_largest_magnitude(&op, &cfg)?;
            (penetra::eigen::LinearOperator::dim(&op), result, None)
        }
        _ => {
            return Err(CliError::Usage(
                "eig needs --matrix, or --oracle with --input".into(),
            ))
        }
    };
    Ok(report(n, result, reference))
}

fn report(n: usize, r: EigResult, reference: Option<Vec<(f64, f64)>>) -> EigReport {
    EigReport {
        n,
        pairs: r
            .pairs
            .iter()
            .map(|p| PairSummary {
                eigenvalue: p.eigenvalue,
                residual: p.residual,
            })
            .collect(),
        matvecs: r.matvecs,
        oracle_evals: r.oracle_evals,
        cycles: r.cycles,
        restarts: r.restarts,
        converged: r.converged,
        reference,
    }
}
