//! Oracle specifications accepted by `--oracle`.
//!
//! ```text
//! builtin:diag:<d1>,<d2>,...            f(x) = diag(d) x
//! builtin:linear:<seed>:<n>             f(x) = A x + b, A symmetric
//! builtin:logistic:<seed>:<n>           f(x) = σ(A x + b), A symmetric
//! builtin:toyseg:<seed>:<h>x<w>[:f32]   toy segmenter [3,h,w] -> [1,h,w]
//! proc:<command line>                   external oracle over stdio
//! tcp:<host>:<port>                     external oracle over TCP
//! ```
//!
//! `A` and `b` of the seeded builtins are drawn from `Rng::new(seed)`: first
//! `M` uniform in `[-1, 1)` (n×n, row-major) with `A = (M + Mᵀ) / 2`, then `b`
//! uniform in `[-1, 1)`.

use penetra::oracle::{
    connect_external_with, make_linear_oracle, make_logistic_oracle, make_toy_segmenter_with,
    ConnectOptions, ToySegmenterPrecision,
};
use penetra::{OracleHandle, Rng, Tensor};

use crate::error::{CliError, Result};

pub fn open_oracle(spec: &str) -> Result<OracleHandle> {
    open_oracle_with(spec, &ConnectOptions::default())
}

/// Like [`open_oracle`]; `opts` only affects external oracles.
pub fn open_oracle_with(spec: &str, opts: &ConnectOptions) -> Result<OracleHandle> {
    if spec.starts_with("proc:") || spec.starts_with("tcp:") {
        return Ok(connect_external_with(spec, opts)?);
    }
    let Some(rest) = spec.strip_prefix("builtin:") else {
        return Err(bad(spec, "expected builtin:, proc: or tcp:"));
    };
    let parts: Vec<&str> = rest.split(':').collect();
    match parts.as_slice() {
        ["diag", values] => {
            let d = values
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(spec, &e.to_string()))?;
            if d.is_empty() {
                return Err(bad(spec, "empty diagonal"));
            }
            let n = d.len();
            let mut a = vec![0.0; n * n];
            for (i, v) in d.iter().enumerate() {
                a[i * n + i] = *v;
            }
            Ok(make_linear_oracle(
                &Tensor::new(vec![n, n], a)?,
                &Tensor::zeros(&[n])?,
            )?)
        }
        [kind @ ("linear" | "logistic"), seed, n] => {
            let seed = parse_num::<u64>(spec, seed)?;
            let n = parse_num::<usize>(spec, n)?;
            if n == 0 {
                return Err(bad(spec, "dimension must be positive"));
            }
            let (a, b) = seeded_affine(seed, n)?;
            Ok(if *kind == "linear" {
                make_linear_oracle(&a, &b)?
            } else {
                make_logistic_oracle(&a, &b)?
            })
        }
        ["toyseg", seed, size, tail @ ..] => {
            let seed = parse_num::<u64>(spec, seed)?;
            let (h, w) = parse_hw(size).ok_or_else(|| bad(spec, "size must be <h>x<w>"))?;
            let precision = match tail {
                [] => ToySegmenterPrecision::F64,
                ["f32"] => ToySegmenterPrecision::F32,
                _ => return Err(bad(spec, "only an optional :f32 suffix is accepted")),
            };
            Ok(make_toy_segmenter_with(seed, h, w, precision)?)
        }
        _ => Err(bad(spec, "unknown builtin oracle")),
    }
}

/// Symmetric `A` and offset `b` for the seeded affine builtins.
pub fn seeded_affine(seed: u64, n: usize) -> Result<(Tensor, Tensor)> {
    let mut rng = Rng::new(seed);
    let m = rng.uniform_vec(n * n, -1.0, 1.0);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[i * n + j] + m[j * n + i]);
        }
    }
    let b = rng.uniform_vec(n, -1.0, 1.0);
    Ok((Tensor::new(vec![n, n], a)?, Tensor::new(vec![n], b)?))
}

/// Parses `<a>x<b>[x<c>...]` into dimensions.
pub fn parse_dims(s: &str) -> Option<Vec<usize>> {
    let dims = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().ok().filter(|d| *d > 0))
        .collect::<Option<Vec<_>>>()?;
    (!dims.is_empty()).then_some(dims)
}

pub fn parse_hw(s: &str) -> Option<(usize, usize)> {
    match parse_dims(s)?.as_slice() {
        [h, w] => Some((*h, *w)),
        _ => None,
    }
}

fn parse_num<T: std::str::FromStr>(spec: &str, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| bad(spec, &format!("{s:?}: {e}")))
}

fn bad(spec: &str, why: &str) -> CliError {
    CliError::Usage(format!("bad oracle spec {spec:?}: {why}"))
}
