//! Penetrative perturbations: dominant Jacobian eigenvectors added to the input.
//!
//! [`generate`] wraps the oracle in a [`JvpOperator`] at the clean input,
//! solves for the largest-magnitude eigenpairs and returns
//! `x̄ + δ·broadcast(v_i)`. Because `J v_i = λ_i v_i`, such a perturbation
//! reappears in the output scaled by `λ_i` instead of being attenuated.

use serde::{Deserialize, Serialize};

use crate::eigen::{solve_largest_magnitude, EigConfig, EigResult, SolverMode};
use crate::error::{Error, Result};
use crate::jvp::{Adapter, Epsilon, JvpOperator, DEFAULT_EPSILON};
use crate::oracle::OracleHandle;
use crate::rng::Rng;
use crate::tensor::{self, Tensor};

/// `δ = DELTA_PER_DIM · n` when no step is given.
pub const DELTA_PER_DIM: f64 = 2e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    /// Scale the JVP step by `1 + ‖x̄‖∞`.
    pub relative_epsilon: bool,
    /// Perturbation size; `None` means `2e-3 · n` with `n` the operator dimension.
    pub delta: Option<f64>,
    pub tol: f64,
    pub itmax: usize,
    pub k: usize,
    pub ncv: Option<usize>,
    pub mode: SolverMode,
    /// 1-based index of the eigenvector to apply.
    pub mode_index: usize,
    /// Optional `[lo, hi]` range for the adversarial input.
    pub clamp: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            relative_epsilon: false,
            delta: None,
            tol: 1e-12,
            itmax: 100,
            k: 1,
            ncv: None,
            mode: SolverMode::Symmetric,
            mode_index: 1,
            clamp: None,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn eig_config(&self) -> EigConfig {
        EigConfig {
            k: self.k,
            tol: self.tol,
            itmax: self.itmax,
            ncv: self.ncv,
            mode: self.mode,
            seed: self.seed,
        }
    }

    pub fn resolved_delta(&self, n: usize) -> f64 {
        self.delta.unwrap_or(DELTA_PER_DIM * n as f64)
    }

    fn epsilon_policy(&self) -> Epsilon {
        if self.relative_epsilon {
            Epsilon::Relative(self.epsilon)
        } else {
            Epsilon::Absolute(self.epsilon)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mode_index == 0 || self.mode_index > self.k {
            return Err(Error::InvalidInput(format!(
                "mode_index must be in 1..={}, got {}",
                self.k, self.mode_index
            )));
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "delta must be finite and non-negative, got {d}"
                )));
            }
        }
        if let Some((lo, hi)) = self.clamp {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidInput(format!(
                    "clamp range {lo}:{hi} is empty"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub eigenpairs: EigResult,
    pub mode_index: usize,
    pub eigenvalue: f64,
    pub residual: f64,
    /// Unit perturbation in operator space: shaped like the oracle input for
    /// square oracles, `[1, h, w]` under channel broadcast.
    pub perturbation: Tensor,
    pub adversarial_input: Tensor,
    pub adapter: Adapter,
    pub delta: f64,
    pub epsilon: f64,
    /// Oracle counter delta over the whole call.
    pub oracle_evals_total: u64,
}

/// The square-operator view of a `[c, h, w] -> [1, h, w]` oracle; with
/// `c = 1` it behaves as the identity.
pub fn broadcast_adapter(oracle: &OracleHandle) -> Result<Adapter> {
    Adapter::broadcast(oracle.info())
}

fn perturbation_shape(oracle: &OracleHandle, adapter: Adapter) -> Vec<usize> {
    match adapter {
        Adapter::Identity => oracle.info().input_shape.clone(),
        Adapter::ChannelBroadcast { .. } => oracle.info().output_shape.clone(),
    }
}

/// `x̄ + δ·lift(v)`, optionally clamped. `δ = 0` returns `x̄` unchanged.
pub fn apply_perturbation(
    base: &Tensor,
    adapter: Adapter,
    v: &[f64],
    delta: f64,
    clamp: Option<(f64, f64)>,
) -> Result<Tensor> {
    let mut x = base.data().to_vec();
    if delta != 0.0 {
        let dir = adapter.lift(v);
        if dir.len() != x.len() {
            return Err(Error::InvalidShape(format!(
                "perturbation lifts to {} entries, input has {}",
                dir.len(),
                x.len()
            )));
        }
        tensor::axpy(delta, &dir, &mut x);
    }
    if let Some((lo, hi)) = clamp {
        x.iter_mut().for_each(|xi| *xi = xi.clamp(lo, hi));
    }
    Tensor::new(base.shape().to_vec(), x)
}

/// Solves for the dominant eigenpairs of the oracle's Jacobian at `base` and
/// applies the `mode_index`-th eigenvector.
pub fn generate(
    oracle: &OracleHandle,
    base: &Tensor,
    cfg: &AttackConfig,
) -> Result<PerturbationResult> {
    cfg.validate()?;
    let before = oracle.total_evals();
    let op = JvpOperator::for_oracle(oracle, base, cfg.epsilon_policy())?;
    let n = crate::eigen::LinearOperator::dim(&op);
    let delta = cfg.resolved_delta(n);
    let eigenpairs = solve_largest_magnitude(&op, &cfg.eig_config())?;
    let Some(pair) = eigenpairs.pairs.get(cfg.mode_index - 1) else {
        return Err(Error::Breakdown(format!(
            "solver returned {} real eigenpairs, mode {} requested",
            eigenpairs.pairs.len(),
            cfg.mode_index
        )));
    };
    let adapter = op.adapter();
    let adversarial_input =
        apply_perturbation(base, adapter, pair.vector.data(), delta, cfg.clamp)?;
    let perturbation = pair
        .vector
        .clone()
        .reshape(perturbation_shape(oracle, adapter))?;
    Ok(PerturbationResult {
        mode_index: cfg.mode_index,
        eigenvalue: pair.eigenvalue,
        residual: pair.residual,
        perturbation,
        adversarial_input,
        adapter,
        delta,
        epsilon: op.epsilon(),
        oracle_evals_total: oracle.total_evals() - before,
        eigenpairs,
    })
}

/// `Σ a_i v_i` over the first `m` eigenvectors, not renormalized.
pub fn blend_modes(result: &EigResult, coefficients: &[f64], m: usize) -> Result<Tensor> {
    if coefficients.len() != m {
        return Err(Error::InvalidShape(format!(
            "{} blend coefficients for {m} modes",
            coefficients.len()
        )));
    }
    if m == 0 || m > result.pairs.len() {
        return Err(Error::InvalidShape(format!(
            "cannot blend {m} modes out of {}",
            result.pairs.len()
        )));
    }
    let mut out = vec![0.0; result.pairs[0].vector.numel()];
    for (a, pair) in coefficients.iter().zip(&result.pairs) {
        tensor::axpy(*a, pair.vector.data(), &mut out);
    }
    Tensor::new(result.pairs[0].vector.shape().to_vec(), out)
}

/// `magnitude · u/‖u‖` with `u` uniform in `[-1, 1]^len`.
pub fn uniform_noise(len: usize, magnitude: f64, seed: u64) -> Result<Vec<f64>> {
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise magnitude must be positive, got {magnitude}"
        )));
    }
    let mut u = Rng::new(seed).uniform_vec(len, -1.0, 1.0);
    let nrm = tensor::norm(&u);
    if nrm == 0.0 {
        return Err(Error::DegenerateVector("uniform draw was all zeros".into()));
    }
    tensor::scale(magnitude / nrm, &mut u);
    Ok(u)
}

/// The uniform-noise control: `x̄` plus noise over every input entry whose L2
/// norm is exactly `magnitude`.
pub fn uniform_baseline(base: &Tensor, magnitude: f64, seed: u64) -> Result<Tensor> {
    let noise = uniform_noise(base.numel(), magnitude, seed)?;
    let x: Vec<f64> = base.data().iter().zip(&noise).map(|(a, b)| a + b).collect();
    Tensor::new(base.shape().to_vec(), x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenetrationCheck {
    /// `‖d‖ / (δ|λ|)` with `d = f(x̄ + δ·v) − f(x̄)`.
    pub ratio: f64,
    /// `1 − |⟨d, v⟩| / ‖d‖`.
    pub misalignment: f64,
}

/// Measures how closely `f(x̄ + δv) − f(x̄)` follows `δλv`. Two oracle evaluations.
pub fn penetration_check(
    oracle: &OracleHandle,
    base: &Tensor,
    lambda: f64,
    v: &Tensor,
    delta: f64,
) -> Result<PenetrationCheck> {
    if lambda == 0.0 {
        return Err(Error::DegenerateEigenvalue(
            "penetration ratio undefined for a zero eigenvalue".into(),
        ));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let adapter = Adapter::for_oracle(oracle.info())?;
    if v.numel() != oracle.info().output_len() {
        return Err(Error::InvalidShape(format!(
            "direction has {} entries, oracle output has {}",
            v.numel(),
            oracle.info().output_len()
        )));
    }
    let perturbed = apply_perturbation(base, adapter, v.data(), delta, None)?;
    let f_adv = oracle.eval(&perturbed)?;
    let f_clean = oracle.eval(base)?;
    let d: Vec<f64> = f_adv
        .data()
        .iter()
        .zip(f_clean.data())
        .map(|(a, b)| a - b)
        .collect();
    let dn = tensor::norm(&d);
    let misalignment = if dn == 0.0 {
        1.0
    } else {
        1.0 - tensor::dot_slices(&d, v.data()).abs() / dn
    };
    Ok(PenetrationCheck {
        ratio: dn / (delta * lambda.abs()),
        misalignment,
    })
}
