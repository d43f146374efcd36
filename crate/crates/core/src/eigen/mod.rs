//! Largest-magnitude eigenpairs of implicit square operators.
//!
//! [`solve_largest_magnitude`] only ever touches the operator through
//! [`LinearOperator::apply`], so the number of operator applications (and,
//! for finite-difference operators, oracle queries) depends on the Krylov
//! parameters and the spectrum, not on the dimension.

mod dense;
mod krylov;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

pub use dense::{dense_eig_reference, DenseEigenpair};
pub use krylov::solve_largest_magnitude;

/// A square linear map `R^n -> R^n` known only through its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Total oracle evaluations behind this operator so far, if it has an oracle.
    fn oracle_evals(&self) -> Option<u64> {
        None
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(x)
    }

    fn oracle_evals(&self) -> Option<u64> {
        (**self).oracle_evals()
    }
}

/// Explicit row-major square matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(a: &Tensor) -> Result<Self> {
        match a.shape() {
            [r, c] if r == c => Ok(Self {
                n: *r,
                data: a.data().to_vec(),
            }),
            s => Err(Error::InvalidShape(format!(
                "expected a square matrix, got {s:?}"
            ))),
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self { n, data }
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::InvalidShape(format!(
                "operator of dim {} applied to vector of length {}",
                self.n,
                x.len()
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.n)
            .map(|row| tensor::dot_slices(row, x))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    /// Lanczos-style recurrence: the projected matrix is kept symmetric
    /// tridiagonal (arrowhead after a restart) whatever the operator does.
    #[default]
    Symmetric,
    /// Full Arnoldi projection; only real Ritz values are returned.
    Nonsymmetric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigConfig {
    pub k: usize,
    pub tol: f64,
    /// Maximum number of Krylov cycles (initial factorization plus restarts).
    pub itmax: usize,
    /// Krylov subspace size; `None` picks `min(n, max(2k + 1, 20))`.
    pub ncv: Option<usize>,
    pub mode: SolverMode,
    pub seed: u64,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self {
            k: 1,
            tol: 1e-12,
            itmax: 100,
            ncv: None,
            mode: SolverMode::Symmetric,
            seed: 0,
        }
    }
}

impl EigConfig {
    pub fn resolved_ncv(&self, n: usize) -> usize {
        self.ncv.unwrap_or_else(|| n.min((2 * self.k + 1).max(20)))
    }

    pub fn validate(&self, n: usize) -> Result<usize> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("operator dimension {n} < 2")));
        }
        let ncv = self.resolved_ncv(n);
        if self.k == 0 || self.k >= ncv || ncv > n {
            return Err(Error::InvalidInput(format!(
                "need 1 <= k < ncv <= n, got k={}, ncv={ncv}, n={n}",
                self.k
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.itmax == 0 {
            return Err(Error::InvalidInput("itmax must be at least 1".into()));
        }
        Ok(ncv)
    }
}

#[derive(Debug, Clone)]
pub struct EigPair {
    pub eigenvalue: f64,
    /// Unit vector of shape `[n]`.
    pub vector: Tensor,
    /// Projected residual estimate `‖f‖ · |e_mᵀ y|` from the Krylov decomposition.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct EigResult {
    /// Sorted by `|eigenvalue|`, largest first.
    pub pairs: Vec<EigPair>,
    /// Krylov cycles run; the first factorization counts as one.
    pub cycles: usize,
    pub restarts: usize,
    pub matvecs: u64,
    pub oracle_evals: u64,
    pub converged: bool,
    /// Complex Ritz values seen in the final projected problem (nonsymmetric mode).
    pub complex_ritz_values: usize,
}

/// `‖op(v) − λ v‖₂`, one operator application.
pub fn penetration_residual<O: LinearOperator + ?Sized>(
    op: &O,
    lambda: f64,
    v: &[f64],
) -> Result<f64> {
    let mut r = op.apply(v)?;
    tensor::axpy(-lambda, v, &mut r);
    Ok(tensor::norm(&r))
}
