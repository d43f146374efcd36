//! Matrix-free Jacobian-vector products by central differences.
//!
//! ```text
//! J v ≈ (f(x̄ + εv) − f(x̄ − εv)) / (2ε)
//! ```
//!
//! Each [`JvpOperator::apply`] costs exactly two oracle evaluations and never
//! materializes the Jacobian. [`fd_jacobian_dense`] builds the full matrix one
//! column at a time and is meant for checking small problems only.

use crate::eigen::LinearOperator;
use crate::error::{Error, Result};
use crate::oracle::{OracleHandle, OracleInfo};
use crate::tensor::{self, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-4;
const MAX_DENSE_INPUTS: usize = 4096;
const REPORTED_INDICES: usize = 16;

/// How an operator-space vector becomes an input-space direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapter {
    /// Input and output have the same number of entries; vectors pass through.
    Identity,
    /// Input `[c, h, w]`, output `[1, h, w]`: a vector of length `h·w` is
    /// copied verbatim into each of the `c` input channels.
    ChannelBroadcast { channels: usize },
}

impl Adapter {
    /// Identity when the oracle is already square, channel broadcast when it
    /// maps `[c, h, w]` to `[1, h, w]`.
    pub fn for_oracle(info: &OracleInfo) -> Result<Self> {
        if info.input_len() == info.output_len() {
            Ok(Adapter::Identity)
        } else {
            Self::broadcast(info)
        }
    }

    pub fn broadcast(info: &OracleInfo) -> Result<Self> {
        let (inp, out) = (info.input_shape.as_slice(), info.output_shape.as_slice());
        match (inp, out) {
            ([c, h, w], [1, oh, ow]) if h == oh && w == ow => {
                Ok(Adapter::ChannelBroadcast { channels: *c })
            }
            ([_, h, w], [oc, oh, ow]) if h == oh && w == ow => Err(Error::UnsupportedShape(
                format!("channel broadcast needs a single output channel, oracle has {oc}"),
            )),
            _ => Err(Error::UnsupportedShape(format!(
                "cannot build a square operator from {inp:?} -> {out:?}"
            ))),
        }
    }

    /// Operator-space dimension for an oracle with `input_len` inputs.
    pub fn dim(&self, input_len: usize) -> usize {
        match self {
            Adapter::Identity => input_len,
            Adapter::ChannelBroadcast { channels } => input_len / channels,
        }
    }

    /// Input-space direction for `v`.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Adapter::Identity => v.to_vec(),
            Adapter::ChannelBroadcast { channels } => v.repeat(*channels),
        }
    }
}

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// `ε · (1 + ‖x̄‖∞)`.
    Relative(f64),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Absolute(DEFAULT_EPSILON)
    }
}

impl Epsilon {
    pub fn resolve(&self, base: &Tensor) -> Result<f64> {
        let (raw, eff) = match *self {
            Epsilon::Absolute(e) => (e, e),
            Epsilon::Relative(e) => (e, e * (1.0 + base.max_abs())),
        };
        if !(raw > 0.0 && eff.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive and finite, got {raw}"
            )));
        }
        Ok(eff)
    }
}

/// The implicit map `v ↦ J(x̄)·v` on operator space.
#[derive(Debug)]
pub struct JvpOperator<'a> {
    oracle: &'a OracleHandle,
    base: Tensor,
    epsilon: f64,
    adapter: Adapter,
    dim: usize,
}

impl<'a> JvpOperator<'a> {
    /// Square oracles only; see [`with_adapter`](Self::with_adapter) for
    /// `[c, h, w] -> [1, h, w]` models.
    pub fn new(oracle: &'a OracleHandle, base: &Tensor, epsilon: f64) -> Result<Self> {
        let info = oracle.info();
        if info.input_len() != info.output_len() {
            return Err(Error::UnsupportedShape(format!(
                "oracle {:?} is not square ({:?} -> {:?}); use the channel-broadcast adapter",
                info.name, info.input_shape, info.output_shape
            )));
        }
        Self::with_adapter(oracle, base, Epsilon::Absolute(epsilon), Adapter::Identity)
    }

    pub fn with_adapter(
        oracle: &'a OracleHandle,
        base: &Tensor,
        epsilon: Epsilon,
        adapter: Adapter,
    ) -> Result<Self> {
        let info = oracle.info();
        if base.shape() != info.input_shape.as_slice() {
            return Err(Error::InvalidShape(format!(
                "base point has shape {:?}, oracle expects {:?}",
                base.shape(),
                info.input_shape
            )));
        }
        let dim = adapter.dim(info.input_len());
        if dim != info.output_len() {
            return Err(Error::UnsupportedShape(format!(
                "adapter {adapter:?} gives dimension {dim} but oracle has {} outputs",
                info.output_len()
            )));
        }
        Ok(Self {
            oracle,
            base: base.clone(),
            epsilon: epsilon.resolve(base)?,
            adapter,
            dim,
        })
    }

    /// Picks the adapter from the oracle's shapes.
    pub fn for_oracle(oracle: &'a OracleHandle, base: &Tensor, epsilon: Epsilon) -> Result<Self> {
        let adapter = Adapter::for_oracle(oracle.info())?;
        Self::with_adapter(oracle, base, epsilon, adapter)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn adapter(&self) -> Adapter {
        self.adapter
    }

    pub fn base(&self) -> &Tensor {
        &self.base
    }

    pub fn oracle(&self) -> &OracleHandle {
        self.oracle
    }

    pub fn apply_tensor(&self, v: &Tensor) -> Result<Tensor> {
        if v.shape() != [self.dim] {
            return Err(Error::InvalidShape(format!(
                "JVP direction must have shape [{}], got {:?}",
                self.dim,
                v.shape()
            )));
        }
        Tensor::from_vec(self.apply(v.data())?)
    }
}

impl LinearOperator for JvpOperator<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::InvalidShape(format!(
                "JVP direction has {} entries, operator dimension is {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "JVP direction has non-finite entries".into(),
            ));
        }
        let dir = self.adapter.lift(v);
        let eps = self.epsilon;
        let x = self.base.data();
        let plus: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + eps * di).collect();
        let minus: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi - eps * di).collect();
        let f_plus = self.oracle.eval_flat(&plus)?;
        let f_minus = self.oracle.eval_flat(&minus)?;
        central_quotient(f_plus, f_minus, eps)
    }

    fn oracle_evals(&self) -> Option<u64> {
        Some(self.oracle.total_evals())
    }
}

fn central_quotient(f_plus: Vec<f64>, f_minus: Vec<f64>, eps: f64) -> Result<Vec<f64>> {
    let out: Vec<f64> = f_plus
        .iter()
        .zip(&f_minus)
        .map(|(p, m)| (p - m) / (2.0 * eps))
        .collect();
    let bad: Vec<usize> = out
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, _)| i)
        .take(REPORTED_INDICES)
        .collect();
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::NumericalFault {
            message: format!("central difference with step {eps} is not finite"),
            indices: bad,
            f_plus,
            f_minus,
        })
    }
}

/// Explicit `[n_out, n_in]` Jacobian by central differences along each unit
/// vector. Costs exactly `2·n_in` evaluations; refuses `n_in > 4096`.
pub fn fd_jacobian_dense(oracle: &OracleHandle, base: &Tensor, epsilon: f64) -> Result<Tensor> {
    let info = oracle.info();
    let (n_in, n_out) = (info.input_len(), info.output_len());
    if n_in > MAX_DENSE_INPUTS {
        return Err(Error::TooLarge(format!(
            "dense Jacobian needs n_in <= {MAX_DENSE_INPUTS}, oracle has {n_in}"
        )));
    }
    if base.shape() != info.input_shape.as_slice() {
        return Err(Error::InvalidShape(format!(
            "base point has shape {:?}, oracle expects {:?}",
            base.shape(),
            info.input_shape
        )));
    }
    Epsilon::Absolute(epsilon).resolve(base)?;
    let mut jac = vec![0.0; n_out * n_in];
    let mut x = base.data().to_vec();
    for i in 0..n_in {
        let xi = base.data()[i];
        x[i] = xi + epsilon;
        let f_plus = oracle.eval_flat(&x)?;
        x[i] = xi - epsilon;
        let f_minus = oracle.eval_flat(&x)?;
        x[i] = xi;
        let col = central_quotient(f_plus, f_minus, epsilon)?;
        for (r, v) in col.into_iter().enumerate() {
            jac[r * n_in + i] = v;
        }
    }
    Tensor::new(vec![n_out, n_in], jac)
}

/// `J·v` through an explicit matrix, used to compare the two pathways.
pub fn dense_matvec(jac: &Tensor, v: &[f64]) -> Result<Vec<f64>> {
    match jac.shape() {
        [_, c] if *c == v.len() => Ok(jac
            .data()
            .chunks_exact(*c)
            .map(|row| tensor::dot_slices(row, v))
            .collect()),
        s => Err(Error::InvalidShape(format!(
            "matrix {s:?} times vector of length {}",
            v.len()
        ))),
    }
}
