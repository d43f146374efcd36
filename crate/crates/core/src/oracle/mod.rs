//! The black-box boundary.
//!
//! An [`OracleHandle`] is the only way the rest of the crate touches a model:
//! it checks shapes, counts every evaluation that reaches the backend, and
//! rejects non-finite replies. Backends are the builtin test oracles, the toy
//! segmenter, arbitrary closures, and external servers speaking the JSON-lines
//! wire protocol in [`external`].

mod builtin;
pub mod external;
mod toyseg;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use builtin::{make_linear_oracle, make_logistic_oracle};
pub use external::{connect_external, connect_external_with, probe_determinism, ConnectOptions};
pub use toyseg::{
    make_toy_segmenter, make_toy_segmenter_with, ToySegmenter, ToySegmenterPrecision, TOYSEG_HIDDEN,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub deterministic: bool,
}

impl OracleInfo {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        output_shape: Vec<usize>,
    ) -> Result<Self> {
        for (what, s) in [("input", &input_shape), ("output", &output_shape)] {
            if s.is_empty() || s.contains(&0) {
                return Err(Error::InvalidShape(format!("{what} shape {s:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            input_shape,
            output_shape,
            deterministic: true,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Linear,
    Logistic,
    ToySegmenter,
    ExternalProcess,
    ExternalTcp,
    CountingWrapper,
}

/// What sits behind a handle. Implementations see flat row-major data whose
/// length already matches the advertised input shape.
pub trait OracleBackend: Send + Sync {
    fn kind(&self) -> OracleKind;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Default)]
pub struct QueryCounter(AtomicU64);

impl QueryCounter {
    pub fn total_evals(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

pub struct OracleHandle {
    info: OracleInfo,
    counter: QueryCounter,
    backend: Box<dyn OracleBackend>,
}

impl fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleHandle")
            .field("info", &self.info)
            .field("kind", &self.backend.kind())
            .field("total_evals", &self.counter.total_evals())
            .finish()
    }
}

impl OracleHandle {
    pub fn new(info: OracleInfo, backend: Box<dyn OracleBackend>) -> Self {
        Self {
            info,
            counter: QueryCounter::default(),
            backend,
        }
    }

    /// Wraps an arbitrary function as an oracle. The closure receives flat input
    /// data and must return flat output data.
    pub fn from_fn<F>(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        output_shape: Vec<usize>,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let info = OracleInfo::new(name, input_shape, output_shape)?;
        Ok(Self::new(info, Box::new(FnBackend(f))))
    }

    pub fn info(&self) -> &OracleInfo {
        &self.info
    }

    pub fn kind(&self) -> OracleKind {
        self.backend.kind()
    }

    pub fn total_evals(&self) -> u64 {
        self.counter.total_evals()
    }

    pub fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    /// Reinterprets input and output shapes without touching the backend, as
    /// long as element counts are preserved.
    pub fn with_shapes(
        mut self,
        input_shape: Vec<usize>,
        output_shape: Vec<usize>,
    ) -> Result<Self> {
        let info = OracleInfo::new(self.info.name.clone(), input_shape, output_shape)?;
        if info.input_len() != self.info.input_len() || info.output_len() != self.info.output_len()
        {
            return Err(Error::InvalidShape(format!(
                "cannot view {:?}->{:?} as {:?}->{:?}",
                self.info.input_shape, self.info.output_shape, info.input_shape, info.output_shape
            )));
        }
        self.info = OracleInfo {
            deterministic: self.info.deterministic,
            ..info
        };
        Ok(self)
    }

    pub(crate) fn set_deterministic(&mut self, deterministic: bool) {
        self.info.deterministic = deterministic;
    }

    /// One oracle query. The counter advances once for every call that passes
    /// the shape check, whether or not the backend succeeds.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.info.input_shape.as_slice() {
            return Err(Error::InvalidShape(format!(
                "oracle {:?} expects input {:?}, got {:?}",
                self.info.name,
                self.info.input_shape,
                x.shape()
            )));
        }
        self.eval_flat(x.data())
            .and_then(|y| Tensor::new(self.info.output_shape.clone(), y))
    }

    /// Flat-slice variant of [`eval`](Self::eval) used on hot paths.
    pub fn eval_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.info.input_len() {
            return Err(Error::InvalidShape(format!(
                "oracle {:?} expects {} inputs, got {}",
                self.info.name,
                self.info.input_len(),
                x.len()
            )));
        }
        self.counter.bump();
        let y = self.backend.forward(x)?;
        if y.len() != self.info.output_len() {
            return Err(Error::OracleFault(format!(
                "oracle {:?} returned {} values, expected {} for shape {:?}",
                self.info.name,
                y.len(),
                self.info.output_len(),
                self.info.output_shape
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::OracleFault(format!(
                "oracle {:?} returned non-finite value {} at index {i}",
                self.info.name, y[i]
            )));
        }
        Ok(y)
    }
}

struct FnBackend<F>(F);

impl<F> OracleBackend for FnBackend<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn kind(&self) -> OracleKind {
        OracleKind::CountingWrapper
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(x))
    }
}
