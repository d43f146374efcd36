//! Affine and logistic test oracles with closed-form Jacobians.

use super::{OracleBackend, OracleHandle, OracleInfo, OracleKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Affine {
    a: Vec<f64>,
    b: Vec<f64>,
    n_in: usize,
    logistic: bool,
}

impl OracleBackend for Affine {
    fn kind(&self) -> OracleKind {
        if self.logistic {
            OracleKind::Logistic
        } else {
            OracleKind::Linear
        }
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .a
            .chunks_exact(self.n_in)
            .zip(&self.b)
            .map(|(row, bi)| {
                let mut acc = 0.0;
                for (aij, xj) in row.iter().zip(x) {
                    acc += aij * xj;
                }
                let z = acc + bi;
                if self.logistic {
                    sigmoid(z)
                } else {
                    z
                }
            })
            .collect())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn affine_parts(a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let [n_out, n_in] = a.shape() else {
        return Err(Error::InvalidShape(format!(
            "A must be a matrix [n_out, n_in], got {:?}",
            a.shape()
        )));
    };
    if b.numel() != *n_out {
        return Err(Error::InvalidShape(format!(
            "b has {} entries but A has {n_out} rows",
            b.numel()
        )));
    }
    Ok((*n_out, *n_in))
}

fn make(a: &Tensor, b: &Tensor, logistic: bool) -> Result<OracleHandle> {
    let (n_out, n_in) = affine_parts(a, b)?;
    let name = if logistic { "logistic" } else { "linear" };
    let info = OracleInfo::new(name, vec![n_in], vec![n_out])?;
    Ok(OracleHandle::new(
        info,
        Box::new(Affine {
            a: a.data().to_vec(),
            b: b.data().to_vec(),
            n_in,
            logistic,
        }),
    ))
}

/// `f(x) = A x + b` with `A` of shape `[n_out, n_in]`.
pub fn make_linear_oracle(a: &Tensor, b: &Tensor) -> Result<OracleHandle> {
    make(a, b, false)
}

/// `f(x) = σ(A x + b)` elementwise, with Jacobian `diag(σ'(Ax+b)) A`.
pub fn make_logistic_oracle(a: &Tensor, b: &Tensor) -> Result<OracleHandle> {
    make(a, b, true)
}
