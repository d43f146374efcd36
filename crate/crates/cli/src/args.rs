use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use penetra::eigen::SolverMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "penetra",
    version,
    about = "Penetrative perturbations from black-box oracles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute and apply a penetrative perturbation to one input.
    Attack(AttackArgs),
    /// Penetrative vs uniform-noise perturbations over a directory of inputs.
    Bench(BenchArgs),
    /// Dominant eigenpairs of a dense matrix or of an oracle's Jacobian.
    Eig(EigArgs),
    /// Handshake, determinism probe, shape echo and round-trip timing.
    OracleCheck(OracleCheckArgs),
    /// Write seeded synthetic images as PTNSR01 tensors.
    MakeInputs(MakeInputsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Finite-difference step of the JVP.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Scale the step by 1 + max|x|.
    #[arg(long)]
    pub relative_epsilon: bool,
    #[arg(long, default_value_t = 100)]
    pub itmax: usize,
    /// Krylov subspace size (default min(n, max(2k+1, 20))).
    #[arg(long)]
    pub ncv: Option<usize>,
    /// Number of eigenpairs to compute.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Symmetric (Lanczos) projection; the default.
    #[arg(long, conflicts_with = "nonsym")]
    pub sym: bool,
    /// Full Arnoldi projection.
    #[arg(long)]
    pub nonsym: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn mode(&self) -> SolverMode {
        if self.nonsym {
            SolverMode::Nonsymmetric
        } else {
            SolverMode::Symmetric
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    /// Perturbation size, or "auto" for 2e-3 times the operator dimension.
    #[arg(long, default_value = "auto", value_parser = parse_delta)]
    pub delta: Delta,
    /// Clamp adversarial inputs to lo:hi.
    #[arg(long, value_parser = parse_clamp)]
    pub clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Delta {
    Auto,
    Value(f64),
}

impl Delta {
    pub fn as_option(self) -> Option<f64> {
        match self {
            Delta::Auto => None,
            Delta::Value(v) => Some(v),
        }
    }
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub oracle: String,
    /// Base input as a PTNSR01 tensor.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub perturb: PerturbArgs,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// 1-based eigenvector to apply.
    #[arg(long, default_value_t = 1)]
    pub mode_index: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also export single-channel tensors as PGM images.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Penetrative,
    Uniform,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub oracle: String,
    /// Directory of PTNSR01 inputs (*.ptnsr), processed in file-name order.
    #[arg(long)]
    pub inputs: PathBuf,
    /// Optional directory of reference masks named like the inputs; the clean
    /// prediction is the reference otherwise.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub perturb: PerturbArgs,
    /// Solver tolerances, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1e-12")]
    pub tol: Vec<f64>,
    /// Eigenvector indices to apply, comma separated.
    #[arg(long, alias = "modes", value_delimiter = ',', default_value = "1")]
    pub mode_index: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "penetrative,uniform")]
    pub methods: Vec<Method>,
    /// Worker threads, each with its own oracle connection.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Dynamic range for SSIM.
    #[arg(long, default_value_t = 1.0)]
    pub dynamic_range: f64,
    /// Mask threshold for Dice.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EigArgs {
    /// Dense square matrix as a PTNSR01 tensor.
    #[arg(long, conflicts_with_all = ["oracle", "input"])]
    pub matrix: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub oracle: Option<String>,
    #[arg(long, requires = "oracle")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Include the dense reference eigenvalues (matrix input only).
    #[arg(long, requires = "matrix")]
    pub reference: bool,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(long)]
    pub oracle: String,
    /// Required input shape, e.g. 3x32x32.
    #[arg(long)]
    pub expect_input_shape: Option<String>,
}

#[derive(Debug, Args)]
pub struct MakeInputsArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Image size as <h>x<w>.
    #[arg(long, default_value = "32x32")]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also export the first channel of each image as PGM.
    #[arg(long)]
    pub pgm: bool,
}

pub fn parse_delta(s: &str) -> Result<Delta, String> {
    if s == "auto" {
        return Ok(Delta::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Delta::Value(v)),
        _ => Err(format!(
            "expected \"auto\" or a finite non-negative number, got {s:?}"
        )),
    }
}

pub fn parse_clamp(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = lo.parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if lo <= hi {
        Ok((lo, hi))
    } else {
        Err(format!("empty range {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn delta_and_clamp_parsing() {
        assert_eq!(parse_delta("auto"), Ok(Delta::Auto));
        assert_eq!(parse_delta("0"), Ok(Delta::Value(0.0)));
        assert!(parse_delta("-1").is_err());
        assert!(parse_delta("nan").is_err());
        assert_eq!(parse_clamp("0:1"), Ok((0.0, 1.0)));
        assert!(parse_clamp("1:0").is_err());
        assert!(parse_clamp("1").is_err());
    }

    #[test]
    fn bench_lists() {
        let cli = Cli::try_parse_from([
            "penetra",
            "bench",
            "--oracle",
            "builtin:diag:1,2",
            "--inputs",
            "in",
            "--out-dir",
            "out",
            "--tol",
            "1e-3,1e-6",
            "--modes",
            "1,2,3",
            "--methods",
            "uniform",
        ])
        .unwrap();
        let Command::Bench(b) = cli.command else {
            panic!()
        };
        assert_eq!(b.tol, vec![1e-3, 1e-6]);
        assert_eq!(b.mode_index, vec![1, 2, 3]);
        assert_eq!(b.methods, vec![Method::Uniform]);
        assert_eq!(b.perturb.delta, Delta::Auto);
    }

    #[test]
    fn sym_and_nonsym_conflict() {
        let base = ["penetra", "eig", "--matrix", "m.ptnsr"];
        assert!(Cli::try_parse_from(base.iter().chain(&["--sym", "--nonsym"])).is_err());
        let cli = Cli::try_parse_from(base.iter().chain(&["--nonsym"])).unwrap();
        let Command::Eig(e) = cli.command else {
            panic!()
        };
        assert_eq!(e.solver.mode(), SolverMode::Nonsymmetric);
    }
}
