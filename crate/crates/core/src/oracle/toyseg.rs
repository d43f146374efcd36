//! A small fixed-architecture convolutional "segmenter" used as a smooth,
//! nonlinear, non-symmetric stand-in for a segmentation network.
//!
//! Architecture, input `[3, h, w]` to output `[1, h, w]`:
//!
//! ```text
//! hidden[k] = tanh(b1[k] + conv3x3(W1[k], x))        k = 0..8
//! out       = sigmoid(b2 + conv3x3(W2, hidden))
//! ```
//!
//! `conv3x3` is a cross-correlation with zero padding ("same" output size):
//! `sum_c sum_{dy,dx in 0..3} W[c][dy][dx] * in[c][y+dy-1][x+dx-1]`.
//!
//! Weights come from [`Rng::new(seed)`](crate::rng::Rng), drawn in this order,
//! each row-major:
//!
//! 1. `W1[8][3][3][3]` uniform in `[0.1 - 0.6, 0.1 + 0.6)`
//! 2. `b1[8]` uniform in `[-0.5, 0.5)`
//! 3. `W2[8][3][3]` uniform in `[0.2 - 0.6, 0.2 + 0.6)`
//! 4. `u` uniform in `[-0.5, 0.5)`, then `b2 = u - z_mid`
//!
//! `z_mid` is the output pre-activation, without `b2`, of an interior pixel of
//! the constant image `0.5`:
//!
//! ```text
//! z_mid = Σ_k tanh(b1[k] + 0.5 · ΣW1[k]) · ΣW2[k]
//! ```
//!
//! with every sum accumulated left to right in row-major order, in `f64`. The
//! output tends to increase with brightness, so bright regions on a dark
//! background segment as foreground.
//!
//! In [`ToySegmenterPrecision::F32`] mode every quantity is an `f32`: input
//! values are rounded to `f32`, each dot product accumulates in `f32` starting
//! from the bias, in `c, dy, dx` loop order, skipping padded taps, with a
//! separate multiply and add (no fused multiply-add). `tanh` and the logistic
//! function are evaluated in `f64` on the `f32` argument and rounded back to
//! `f32`. This is the bit-level contract an out-of-process twin must follow.

use super::{builtin::sigmoid, OracleBackend, OracleHandle, OracleInfo, OracleKind};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const TOYSEG_HIDDEN: usize = 8;
const IN_CHANNELS: usize = 3;
const W1_MEAN: f64 = 0.1;
const W1_SCALE: f64 = 0.6;
const B1_SCALE: f64 = 0.5;
const W2_MEAN: f64 = 0.2;
const W2_SCALE: f64 = 0.6;
const B2_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToySegmenterPrecision {
    #[default]
    F64,
    /// 32-bit arithmetic end to end, matching the wire precision.
    F32,
}

#[derive(Debug, Clone)]
pub struct ToySegmenter {
    pub h: usize,
    pub w: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub precision: ToySegmenterPrecision,
}

impl ToySegmenter {
    pub fn new(seed: u64, h: usize, w: usize, precision: ToySegmenterPrecision) -> Result<Self> {
        if !(8..=64).contains(&h) || !(8..=64).contains(&w) {
            return Err(Error::InvalidShape(format!(
                "toy segmenter needs 8 <= h, w <= 64, got {h}x{w}"
            )));
        }
        let mut rng = Rng::new(seed);
        let w1 = rng.uniform_vec(
            TOYSEG_HIDDEN * IN_CHANNELS * 9,
            W1_MEAN - W1_SCALE,
            W1_MEAN + W1_SCALE,
        );
        let b1 = rng.uniform_vec(TOYSEG_HIDDEN, -B1_SCALE, B1_SCALE);
        let w2 = rng.uniform_vec(TOYSEG_HIDDEN * 9, W2_MEAN - W2_SCALE, W2_MEAN + W2_SCALE);
        let u = rng.uniform(-B2_SCALE, B2_SCALE);
        let mut z_mid = 0.0;
        for k in 0..TOYSEG_HIDDEN {
            let s1: f64 = w1[k * IN_CHANNELS * 9..(k + 1) * IN_CHANNELS * 9]
                .iter()
                .fold(0.0, |a, v| a + v);
            let s2: f64 = w2[k * 9..(k + 1) * 9].iter().fold(0.0, |a, v| a + v);
            z_mid += (b1[k] + 0.5 * s1).tanh() * s2;
        }
        let b2 = u - z_mid;
        Ok(Self {
            h,
            w,
            w1,
            b1,
            w2,
            b2,
            precision,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self.precision {
            ToySegmenterPrecision::F64 => self.forward_f64(x),
            ToySegmenterPrecision::F32 => self.forward_f32(x).into_iter().map(f64::from).collect(),
        }
    }

    fn forward_f64(&self, x: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let hidden: Vec<f64> = (0..TOYSEG_HIDDEN)
            .flat_map(|k| {
                let kernel = &self.w1[k * IN_CHANNELS * 9..(k + 1) * IN_CHANNELS * 9];
                conv_same(x, IN_CHANNELS, h, w, kernel, self.b1[k])
                    .into_iter()
                    .map(f64::tanh)
            })
            .collect();
        conv_same(&hidden, TOYSEG_HIDDEN, h, w, &self.w2, self.b2)
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    pub fn forward_f32(&self, x: &[f64]) -> Vec<f32> {
        let (h, w) = (self.h, self.w);
        let x: Vec<f32> = x.iter().map(|v| *v as f32).collect();
        let w1: Vec<f32> = self.w1.iter().map(|v| *v as f32).collect();
        let w2: Vec<f32> = self.w2.iter().map(|v| *v as f32).collect();
        let hidden: Vec<f32> = (0..TOYSEG_HIDDEN)
            .flat_map(|k| {
                let kernel = &w1[k * IN_CHANNELS * 9..(k + 1) * IN_CHANNELS * 9];
                conv_same(&x, IN_CHANNELS, h, w, kernel, self.b1[k] as f32)
                    .into_iter()
                    .map(|z| f64::from(z).tanh() as f32)
            })
            .collect();
        conv_same(&hidden, TOYSEG_HIDDEN, h, w, &w2, self.b2 as f32)
            .into_iter()
            .map(|z| sigmoid(f64::from(z)) as f32)
            .collect()
    }
}

fn conv_same<T>(input: &[T], channels: usize, h: usize, w: usize, kernel: &[T], bias: T) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = bias;
            for c in 0..channels {
                for dy in 0..3 {
                    let Some(yy) = (y + dy).checked_sub(1).filter(|v| *v < h) else {
                        continue;
                    };
                    for dx in 0..3 {
                        let Some(xx) = (x + dx).checked_sub(1).filter(|v| *v < w) else {
                            continue;
                        };
                        acc = acc + kernel[c * 9 + dy * 3 + dx] * input[c * h * w + yy * w + xx];
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}

impl OracleBackend for ToySegmenter {
    fn kind(&self) -> OracleKind {
        OracleKind::ToySegmenter
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(ToySegmenter::forward(self, x))
    }
}

/// Builtin toy segmenter `[3, h, w] -> [1, h, w]` in 64-bit arithmetic.
pub fn make_toy_segmenter(seed: u64, h: usize, w: usize) -> Result<OracleHandle> {
    make_toy_segmenter_with(seed, h, w, ToySegmenterPrecision::F64)
}

pub fn make_toy_segmenter_with(
    seed: u64,
    h: usize,
    w: usize,
    precision: ToySegmenterPrecision,
) -> Result<OracleHandle> {
    let model = ToySegmenter::new(seed, h, w, precision)?;
    let name = match precision {
        ToySegmenterPrecision::F64 => format!("toyseg(seed={seed})"),
        ToySegmenterPrecision::F32 => format!("toyseg-f32(seed={seed})"),
    };
    let info = OracleInfo::new(name, vec![IN_CHANNELS, h, w], vec![1, h, w])?;
    Ok(OracleHandle::new(info, Box::new(model)))
}
