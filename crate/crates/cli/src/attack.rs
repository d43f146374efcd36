use std::fs;
use std::path::Path;

use penetra::attack::{generate, AttackConfig};
use penetra::{dice, read_tensor, ssim, write_pgm, write_tensor, OracleInfo, Tensor};
use serde::Serialize;

use crate::args::{AttackArgs, PerturbArgs, SolverArgs};
use crate::error::{CliError, Result};
use crate::spec::open_oracle;

pub const PERTURBATION_FILE: &str = "perturbation.ptnsr";
pub const ADVERSARIAL_INPUT_FILE: &str = "adversarial_input.ptnsr";
pub const ADVERSARIAL_OUTPUT_FILE: &str = "adversarial_output.ptnsr";
pub const REPORT_FILE: &str = "report.json";

pub fn attack_config(
    solver: &SolverArgs,
    perturb: &PerturbArgs,
    tol: f64,
    k: usize,
    mode_index: usize,
) -> AttackConfig {
    AttackConfig {
        epsilon: solver.epsilon,
        relative_epsilon: solver.relative_epsilon,
        delta: perturb.delta.as_option(),
        tol,
        itmax: solver.itmax,
        k,
        ncv: solver.ncv,
        mode: solver.mode(),
        mode_index,
        clamp: perturb.clamp,
        seed: solver.seed,
    }
}

#[derive(Debug, Serialize)]
pub struct PairSummary {
    pub eigenvalue: f64,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct AttackReport {
    pub oracle: OracleInfo,
    pub eigenvalue: f64,
    pub residual: f64,
    pub converged: bool,
    /// Oracle evaluations spent by the eigensolver.
    pub queries: u64,
    /// Oracle evaluations over the whole command, predictions included.
    pub total_oracle_evals: u64,
    pub matvecs: u64,
    pub restarts: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub eigenpairs: Vec<PairSummary>,
    /// `‖f(x̄ + δv) − f(x̄)‖ / (δ|λ|)` when output and perturbation spaces agree.
    pub penetration_ratio: Option<f64>,
    pub ssim: Option<f64>,
    pub dice: Option<f64>,
    pub config: AttackConfig,
}

/// Runs the attack and writes artifacts. `Ok(false)` means the solver did not
/// converge; artifacts are written either way.
pub fn run_attack(args: &AttackArgs) -> Result<bool> {
    let base = read_tensor(&args.input)?;
    let oracle = open_oracle(&args.oracle)?;
    let before = oracle.total_evals();
    let k = args.solver.k.max(args.mode_index);
    let cfg = attack_config(&args.solver, &args.perturb, args.tol, k, args.mode_index);
    let result = generate(&oracle, &base, &cfg)?;
    let adversarial_output = oracle.eval(&result.adversarial_input)?;
    let clean_output = oracle.eval(&base)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let out = |name: &str| args.out_dir.join(name);
    write_tensor(out(PERTURBATION_FILE), &result.perturbation)?;
    write_tensor(out(ADVERSARIAL_INPUT_FILE), &result.adversarial_input)?;
    write_tensor(out(ADVERSARIAL_OUTPUT_FILE), &adversarial_output)?;
    if args.pgm {
        for (name, t) in [
            ("perturbation.pgm", &result.perturbation),
            ("adversarial_output.pgm", &adversarial_output),
            ("clean_output.pgm", &clean_output),
        ] {
            if matches!(t.shape(), [1, _, _] | [_, _]) {
                write_pgm(out(name), t)?;
            }
        }
    }

    let report = AttackReport {
        oracle: oracle.info().clone(),
        eigenvalue: result.eigenvalue,
        residual: result.residual,
        converged: result.eigenpairs.converged,
        queries: result.eigenpairs.oracle_evals,
        total_oracle_evals: oracle.total_evals() - before,
        matvecs: result.eigenpairs.matvecs,
        restarts: result.eigenpairs.restarts,
        delta: result.delta,
        epsilon: result.epsilon,
        eigenpairs: result
            .eigenpairs
            .pairs
            .iter()
            .map(|p| PairSummary {
                eigenvalue: p.eigenvalue,
                residual: p.residual,
            })
            .collect(),
        penetration_ratio: penetration_ratio(
            &adversarial_output,
            &clean_output,
            &result.perturbation,
            result.delta,
            result.eigenvalue,
        ),
        ssim: ssim(&base, &result.adversarial_input, 1.0).ok(),
        dice: dice(&adversarial_output, &clean_output, 0.5).ok(),
        config: cfg,
    };
    write_json(&out(REPORT_FILE), &report)?;
    Ok(report.converged)
}

fn penetration_ratio(
    adv: &Tensor,
    clean: &Tensor,
    v: &Tensor,
    delta: f64,
    lambda: f64,
) -> Option<f64> {
    if adv.numel() != v.numel() || delta == 0.0 || lambda == 0.0 {
        return None;
    }
    let d: f64 = adv
        .data()
        .iter()
        .zip(clean.data())
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt();
    Some(d / (delta * lambda.abs()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
