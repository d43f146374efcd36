//! Shaped, row-major, 64-bit real arrays and the handful of vector
//! operations the rest of the crate needs.

use crate::error::{Error, Result};

/// Row-major array of finite `f64` values. Images use channel-first `[c, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "shape must be non-empty with positive dims, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {numel} elements but data has {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    /// One-dimensional tensor of shape `[len]`.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        Self::new(vec![len], data)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; numel])
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; numel])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Same data viewed as `[numel]`.
    pub fn flatten(self) -> Self {
        let n = self.data.len();
        Self {
            shape: vec![n],
            data: self.data,
        }
    }

    /// Euclidean norm from exact squares and compensated summation, so that
    /// the norm of an already normalized vector rounds to within one ulp of 1.
    pub fn l2_norm(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for x in &self.data {
            let sq = x * x;
            comp += x.mul_add(*x, -sq);
            let t = sum + sq;
            comp += if sum.abs() >= sq {
                (sum - t) + sq
            } else {
                (sq - t) + sum
            };
            sum = t;
        }
        (sum + comp).sqrt()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::InvalidShape(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(dot_slices(&self.data, &other.data))
    }

    pub fn normalize(&self) -> Result<Tensor> {
        let nrm = self.l2_norm();
        if nrm == 0.0 {
            return Err(Error::DegenerateVector(
                "cannot normalize a zero vector".into(),
            ));
        }
        // Vectors already unit to rounding are returned as is, so a second
        // normalization never moves entries.
        if (nrm - 1.0).abs() <= 2.0 * f64::EPSILON {
            return Ok(self.clone());
        }
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|x| x / nrm).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Euclidean norm. Errors on an empty tensor.
pub fn l2_norm(v: &Tensor) -> Result<f64> {
    if v.numel() == 0 {
        return Err(Error::InvalidShape("l2_norm of empty tensor".into()));
    }
    Ok(v.l2_norm())
}

pub fn normalize(v: &Tensor) -> Result<Tensor> {
    v.normalize()
}

pub fn dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.dot(b)
}

// Slice kernels shared by the solver and the oracles. Accumulation is strictly
// left-to-right so results are reproducible.

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot_slices(a, a).sqrt()
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
        let mut sum = 0.0;
        let mut c = 0.0;
        for v in values {
            let y = v - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn norm_of_three_four() {
        let v = Tensor::from_vec(vec![3.0, 4.0]).unwrap();
        assert_eq!(l2_norm(&v).unwrap(), 5.0);
        assert_eq!(l2_norm(&Tensor::zeros(&[3]).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn empty_tensor_is_rejected() {
        assert!(matches!(
            Tensor::new(vec![0], vec![]),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            Tensor::from_vec(vec![]),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        assert!(Tensor::from_vec(vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn norm_matches_compensated_reverse_order_sum() {
        let mut rng = Rng::new(11);
        let v = Tensor::from_vec(rng.uniform_vec(16, -1.0, 1.0)).unwrap();
        let oracle = kahan_sum(v.data().iter().rev().map(|x| x * x)).sqrt();
        let got = l2_norm(&v).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn normalize_examples() {
        let v = Tensor::from_vec(vec![2.0, 0.0]).unwrap();
        assert_eq!(normalize(&v).unwrap().data(), &[1.0, 0.0]);
        let v = Tensor::from_vec(vec![3.0, 4.0]).unwrap();
        let u = normalize(&v).unwrap();
        assert!((u.data()[0] - 0.6).abs() < 1e-15);
        assert!((u.data()[1] - 0.8).abs() < 1e-15);
        assert!(matches!(
            normalize(&Tensor::zeros(&[2]).unwrap()),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn dot_examples() {
        let a = Tensor::from_vec(vec![1.0, 0.0]).unwrap();
        let b = Tensor::from_vec(vec![0.0, 1.0]).unwrap();
        assert_eq!(dot(&a, &b).unwrap(), 0.0);
        let c = Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(dot(&a, &c), Err(Error::InvalidShape(_))));
        let n = c.l2_norm();
        assert!((dot(&c, &c).unwrap() - n * n).abs() < 1e-12);
    }

    #[test]
    fn dot_matches_naive_oracle() {
        let mut rng = Rng::new(32);
        let a = Tensor::from_vec(rng.uniform_vec(32, -1.0, 1.0)).unwrap();
        let b = Tensor::from_vec(rng.uniform_vec(32, -1.0, 1.0)).unwrap();
        let oracle = kahan_sum(a.data().iter().zip(b.data()).rev().map(|(x, y)| x * y));
        let got = dot(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-1e3f64..1e3, 1..64)
                .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-6))
        }

        proptest! {
            #[test]
            fn normalized_has_unit_norm(v in nonzero_vec()) {
                let t = Tensor::from_vec(v).unwrap();
                let u = normalize(&t).unwrap();
                prop_assert!((u.l2_norm() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn normalize_is_idempotent(v in nonzero_vec()) {
                let u = normalize(&Tensor::from_vec(v).unwrap()).unwrap();
                let uu = normalize(&u).unwrap();
                for (a, b) in u.data().iter().zip(uu.data()) {
                    let ulp = f64::EPSILON * a.abs().max(f64::MIN_POSITIVE);
                    prop_assert!((a - b).abs() <= ulp);
                }
            }

            #[test]
            fn dot_is_symmetric(a in prop::collection::vec(-1e3f64..1e3, 8),
                                b in prop::collection::vec(-1e3f64..1e3, 8)) {
                let a = Tensor::from_vec(a).unwrap();
                let b = Tensor::from_vec(b).unwrap();
                prop_assert_eq!(dot(&a, &b).unwrap(), dot(&b, &a).unwrap());
            }
        }
    }
}
