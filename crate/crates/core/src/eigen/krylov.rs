//! Thick-restart Krylov eigensolver.
//!
//! Both modes maintain a Krylov decomposition `A V_m = V_m H_m + f e_mᵀ` with
//! an orthonormal basis (classical Gram-Schmidt, applied twice). Restarts keep
//! a subset of Ritz vectors, which turns the decomposition into
//! `A V_p = V_p R + f bᵀ`; the coupling row `b` becomes row `p` of the next
//! projected matrix and expansion continues from `f`. This is the
//! Krylov-Schur / thick-restart Lanczos scheme.
//!
//! In symmetric mode only the diagonal and the coupling/subdiagonal entries of
//! the projection are kept and mirrored, exactly as a Lanczos three-term
//! recurrence would, even when the operator is not symmetric. The
//! orthogonalization still runs against the full basis.

#![allow(clippy::needless_range_loop)]

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use super::{EigConfig, EigPair, EigResult, LinearOperator, SolverMode};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::tensor::{self, Tensor};

/// Relative size of the residual below which the Krylov space is treated as invariant.
const BREAKDOWN_TOL: f64 = 1e-12;
/// Imaginary parts below this fraction of the projected matrix norm count as real.
const REAL_TOL: f64 = 1e-12;

struct Ritz {
    value: Complex<f64>,
    /// Unit eigenvector of the projected matrix; for complex values this is
    /// computed lazily at restart.
    vector: Option<DVector<Complex<f64>>>,
    residual: f64,
}

impl Ritz {
    fn is_real(&self) -> bool {
        self.value.im == 0.0
    }
}

struct Krylov<'a, O: ?Sized> {
    op: &'a O,
    n: usize,
    ncv: usize,
    mode: SolverMode,
    seed: u64,
    basis: Vec<Vec<f64>>,
    h: DMatrix<f64>,
    beta: f64,
    op_scale: f64,
    matvecs: u64,
    injections: u64,
}

impl<'a, O: LinearOperator + ?Sized> Krylov<'a, O> {
    fn orthogonalize(&self, w: &mut [f64], upto: usize) -> Vec<f64> {
        let mut coeffs = vec![0.0; upto];
        for _ in 0..2 {
            let c: Vec<f64> = self.basis[..upto]
                .iter()
                .map(|v| tensor::dot_slices(v, w))
                .collect();
            for (v, ci) in self.basis[..upto].iter().zip(&c) {
                tensor::axpy(-ci, v, w);
            }
            for (acc, ci) in coeffs.iter_mut().zip(&c) {
                *acc += ci;
            }
        }
        coeffs
    }

    /// A fresh seeded direction orthogonal to `basis[..upto]`, tried twice.
    fn fresh_direction(&mut self, upto: usize) -> Result<Vec<f64>> {
        for _ in 0..2 {
            self.injections += 1;
            let seed = derive_seed(self.seed, &format!("restart-{}", self.injections));
            let mut w = Rng::new(seed).uniform_vec(self.n, -1.0, 1.0);
            let before = tensor::norm(&w);
            self.orthogonalize(&mut w, upto);
            let after = tensor::norm(&w);
            if after > 1e-8 * before {
                tensor::scale(1.0 / after, &mut w);
                return Ok(w);
            }
        }
        Err(Error::Breakdown(format!(
            "no direction orthogonal to the {upto}-dimensional Krylov basis"
        )))
    }

    /// Extends the decomposition from `start` basis vectors up to `ncv`.
    /// Returns the number of columns built; fewer than `ncv` means an
    /// invariant subspace of at least `k` dimensions was found.
    fn expand(&mut self, start: usize, k: usize) -> Result<usize> {
        for j in start..self.ncv {
            let mut w = self.op.apply(&self.basis[j])?;
            self.matvecs += 1;
            if w.len() != self.n {
                return Err(Error::InvalidShape(format!(
                    "operator returned {} values for dimension {}",
                    w.len(),
                    self.n
                )));
            }
            let wnorm = tensor::norm(&w);
            self.op_scale = self.op_scale.max(wnorm);
            let coeffs = self.orthogonalize(&mut w, j + 1);
            match self.mode {
                SolverMode::Symmetric => {
                    self.h[(j, j)] = coeffs[j];
                    for i in 0..j {
                        self.h[(i, j)] = self.h[(j, i)];
                    }
                }
                SolverMode::Nonsymmetric => {
                    for (i, c) in coeffs.iter().enumerate() {
                        self.h[(i, j)] = *c;
                    }
                }
            }
            let beta = tensor::norm(&w);
            self.basis.truncate(j + 1);
            if beta <= BREAKDOWN_TOL * self.op_scale {
                if j + 1 >= k {
                    self.beta = 0.0;
                    self.h[(j + 1, j)] = 0.0;
                    return Ok(j + 1);
                }
                let fresh = self.fresh_direction(j + 1)?;
                self.h[(j + 1, j)] = 0.0;
                self.basis.push(fresh);
            } else {
                self.h[(j + 1, j)] = beta;
                tensor::scale(1.0 / beta, &mut w);
                self.basis.push(w);
            }
        }
        self.beta = self.h[(self.ncv, self.ncv - 1)];
        Ok(self.ncv)
    }

    fn projected(&self, m: usize) -> DMatrix<f64> {
        self.h.view((0, 0), (m, m)).into_owned()
    }

    /// Ritz values of the projected matrix sorted by magnitude, largest first.
    fn ritz(&self, m: usize) -> Result<Vec<Ritz>> {
        let hm = self.projected(m);
        let mut out: Vec<Ritz> = match self.mode {
            SolverMode::Symmetric => {
                let eig = SymmetricEigen::new(hm);
                (0..m)
                    .map(|i| {
                        let y = eig.eigenvectors.column(i);
                        Ritz {
                            value: Complex::new(eig.eigenvalues[i], 0.0),
                            residual: self.beta * y[m - 1].abs(),
                            vector: Some(y.map(|v| Complex::new(v, 0.0))),
                        }
                    })
                    .collect()
            }
            SolverMode::Nonsymmetric => {
                let scale = hm.amax().max(f64::MIN_POSITIVE);
                let values = hm.clone().complex_eigenvalues();
                let mut out = Vec::with_capacity(m);
                for mut value in values.iter().copied() {
                    if value.im.abs() <= REAL_TOL * scale {
                        value.im = 0.0;
                        let y = real_eigenvector(&hm, value.re).ok_or_else(|| {
                            Error::numerical(format!("no eigenvector for Ritz value {}", value.re))
                        })?;
                        out.push(Ritz {
                            value,
                            residual: self.beta * y[m - 1].abs(),
                            vector: Some(y.map(|v| Complex::new(v, 0.0))),
                        });
                    } else {
                        out.push(Ritz {
                            value,
                            residual: f64::INFINITY,
                            vector: None,
                        });
                    }
                }
                out
            }
        };
        out.sort_by(|a, b| b.value.norm().total_cmp(&a.value.norm()));
        Ok(out)
    }

    /// Collapses the basis onto the kept Ritz directions and returns how many
    /// basis vectors survive.
    fn restart(&mut self, ritz: &[Ritz], m: usize, k: usize) -> Result<usize> {
        let target = (k + (m - k) / 2).clamp(k, m - 1);
        let hm = self.projected(m);
        let q = match self.mode {
            SolverMode::Symmetric => {
                let mut q = DMatrix::zeros(m, target);
                for (i, r) in ritz.iter().take(target).enumerate() {
                    let y = r.vector.as_ref().expect("symmetric Ritz vectors are eager");
                    q.set_column(i, &y.map(|c| c.re));
                }
                q
            }
            SolverMode::Nonsymmetric => nonsymmetric_restart_basis(&hm, ritz, k, target, m)?,
        };
        let p = q.ncols();
        let r = q.transpose() * &hm * &q;

        let mut basis = Vec::with_capacity(self.ncv + 1);
        for i in 0..p {
            let mut v = vec![0.0; self.n];
            for l in 0..m {
                tensor::axpy(q[(l, i)], &self.basis[l], &mut v);
            }
            basis.push(v);
        }
        basis.push(std::mem::take(&mut self.basis[m]));
        self.basis = basis;

        self.h.fill(0.0);
        for i in 0..p {
            for j in 0..p {
                self.h[(i, j)] = r[(i, j)];
            }
            self.h[(p, i)] = self.beta * q[(m - 1, i)];
        }
        if self.mode == SolverMode::Symmetric {
            // R is diagonal up to rounding; keep the projection exactly symmetric.
            for i in 0..p {
                for j in 0..i {
                    let avg = 0.5 * (self.h[(i, j)] + self.h[(j, i)]);
                    self.h[(i, j)] = avg;
                    self.h[(j, i)] = avg;
                }
            }
        }
        Ok(p)
    }

    fn assemble(&self, ritz: &[Ritz], m: usize, k: usize) -> Vec<EigPair> {
        ritz.iter()
            .filter(|r| r.is_real())
            .take(k)
            .map(|r| {
                let y = r.vector.as_ref().expect("real Ritz vectors are eager");
                let mut x = vec![0.0; self.n];
                for l in 0..m {
                    tensor::axpy(y[l].re, &self.basis[l], &mut x);
                }
                let nrm = tensor::norm(&x);
                tensor::scale(1.0 / nrm, &mut x);
                EigPair {
                    eigenvalue: r.value.re,
                    vector: Tensor::from_vec(x).expect("finite Ritz vector"),
                    residual: r.residual,
                }
            })
            .collect()
    }
}

/// Orthonormal real basis for the invariant subspace of `hm` spanned by the
/// kept Ritz values: the wanted real ones first, then the rest by magnitude,
/// taking complex conjugate pairs whole.
fn nonsymmetric_restart_basis(
    hm: &DMatrix<f64>,
    ritz: &[Ritz],
    k: usize,
    target: usize,
    m: usize,
) -> Result<DMatrix<f64>> {
    let mut order: Vec<usize> = ritz
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_real())
        .map(|(i, _)| i)
        .take(k)
        .collect();
    for i in 0..ritz.len() {
        if !order.contains(&i) && (ritz[i].is_real() || ritz[i].value.im > 0.0) {
            order.push(i);
        }
    }

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(target + 1);
    for i in order {
        if columns.len() >= target {
            break;
        }
        let r = &ritz[i];
        if r.is_real() {
            let y = r.vector.as_ref().expect("real Ritz vectors are eager");
            columns.push(y.map(|c| c.re));
        } else {
            if columns.len() + 2 > m - 1 {
                continue;
            }
            let y = complex_eigenvector(hm, r.value).ok_or_else(|| {
                Error::numerical(format!("no eigenvector for Ritz value {}", r.value))
            })?;
            columns.push(y.map(|c| c.re));
            columns.push(y.map(|c| c.im));
        }
    }

    let mut q: Vec<DVector<f64>> = Vec::with_capacity(columns.len());
    for mut c in columns {
        for _ in 0..2 {
            for prev in &q {
                let d = prev.dot(&c);
                c.axpy(-d, prev, 1.0);
            }
        }
        let nrm = c.norm();
        if nrm > 1e-10 {
            q.push(c / nrm);
        }
    }
    if q.is_empty() {
        return Err(Error::Breakdown("restart kept no Ritz directions".into()));
    }
    Ok(DMatrix::from_columns(&q))
}

fn shifts(h: &DMatrix<f64>, lambda: f64) -> [f64; 3] {
    let base = h.amax().max(lambda.abs()).max(f64::MIN_POSITIVE);
    [1e-10 * base, 1e-8 * base, 1e-6 * base]
}

/// Inverse iteration for the eigenvector of a real eigenvalue of a small matrix.
fn real_eigenvector(h: &DMatrix<f64>, lambda: f64) -> Option<DVector<f64>> {
    let m = h.nrows();
    for delta in shifts(h, lambda) {
        let shifted = h - DMatrix::identity(m, m) * (lambda + delta);
        let lu = shifted.lu();
        let mut y = DVector::from_element(m, 1.0 / (m as f64).sqrt());
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&y) {
                Some(z) if z.iter().all(|v| v.is_finite()) && z.norm() > 0.0 => {
                    y = &z / z.norm();
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(y);
        }
    }
    None
}

fn complex_eigenvector(h: &DMatrix<f64>, lambda: Complex<f64>) -> Option<DVector<Complex<f64>>> {
    let m = h.nrows();
    let hc = h.map(|v| Complex::new(v, 0.0));
    for delta in shifts(h, lambda.norm()) {
        let sigma = lambda + Complex::new(delta, 0.0);
        let shifted = &hc - DMatrix::<Complex<f64>>::identity(m, m) * sigma;
        let lu = shifted.lu();
        let mut y = DVector::from_element(m, Complex::new(1.0 / (m as f64).sqrt(), 0.0));
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&y) {
                Some(z)
                    if z.iter().all(|v| v.re.is_finite() && v.im.is_finite()) && z.norm() > 0.0 =>
                {
                    let nrm = z.norm();
                    y = z.map(|v| v / nrm);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(y);
        }
    }
    None
}

/// Computes the `cfg.k` largest-magnitude eigenpairs of `op`.
///
/// Convergence is declared when every wanted pair has a projected residual
/// `‖f‖·|e_mᵀ y|` at most `tol · max(|λ₁|, 1)`. Running out of cycles is not an
/// error: the current Ritz pairs are returned with `converged = false`.
pub fn solve_largest_magnitude<O: LinearOperator + ?Sized>(
    op: &O,
    cfg: &EigConfig,
) -> Result<EigResult> {
    let n = op.dim();
    let ncv = cfg.validate(n)?;
    let evals_before = op.oracle_evals();

    let mut start = Rng::new(cfg.seed).uniform_vec(n, -1.0, 1.0);
    let nrm = tensor::norm(&start);
    tensor::scale(1.0 / nrm, &mut start);

    let mut solver = Krylov {
        op,
        n,
        ncv,
        mode: cfg.mode,
        seed: cfg.seed,
        basis: vec![start],
        h: DMatrix::zeros(ncv + 1, ncv),
        beta: 0.0,
        op_scale: 0.0,
        matvecs: 0,
        injections: 0,
    };

    let mut kept = 0;
    let mut cycles = 0;
    loop {
        cycles += 1;
        let m = solver.expand(kept, cfg.k)?;
        let ritz = solver.ritz(m)?;
        let wanted: Vec<&Ritz> = ritz.iter().filter(|r| r.is_real()).take(cfg.k).collect();
        let threshold = cfg.tol * wanted.first().map_or(1.0, |r| r.value.re.abs().max(1.0));
        let converged = wanted.len() == cfg.k && wanted.iter().all(|r| r.residual <= threshold);
        let invariant = m < ncv || solver.beta == 0.0;
        if converged || invariant || cycles >= cfg.itmax {
            let pairs = solver.assemble(&ritz, m, cfg.k);
            let oracle_evals = match (evals_before, op.oracle_evals()) {
                (Some(a), Some(b)) => b - a,
                _ => 0,
            };
            return Ok(EigResult {
                converged: converged && pairs.len() == cfg.k,
                pairs,
                cycles,
                restarts: cycles - 1,
                matvecs: solver.matvecs,
                oracle_evals,
                complex_ritz_values: ritz.iter().filter(|r| !r.is_real()).count(),
            });
        }
        kept = solver.restart(&ritz, m, cfg.k)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{dense_eig_reference, DenseOperator};

    fn symmetric(n: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let b = rng.uniform_vec(n * n, -1.0, 1.0);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (b[i * n + j] + b[j * n + i]);
            }
        }
        Tensor::new(vec![n, n], a).unwrap()
    }

    fn align(a: &[f64], b: &[f64]) -> f64 {
        tensor::dot_slices(a, b).abs()
    }

    #[test]
    fn diagonal_leading_pair() {
        let op = DenseOperator::diagonal(&[3.0, 1.0, 0.5]);
        let res = solve_largest_magnitude(&op, &EigConfig::default()).unwrap();
        assert!(res.converged);
        let p = &res.pairs[0];
        assert!((p.eigenvalue - 3.0).abs() < 1e-12);
        assert!((p.vector.data()[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_converges_in_one_cycle() {
        let op = DenseOperator::diagonal(&[1.0; 16]);
        let res = solve_largest_magnitude(&op, &EigConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.cycles, 1);
        assert_eq!(res.matvecs, 1);
        assert!((res.pairs[0].eigenvalue - 1.0).abs() < 1e-14);
        assert!(res.pairs[0].residual <= 1e-12);
    }

    #[test]
    fn invariant_subspace_smaller_than_k_injects_new_direction() {
        let op = DenseOperator::diagonal(&[2.0; 8]);
        let cfg = EigConfig {
            k: 3,
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.pairs.len(), 3);
        for i in 0..3 {
            for j in 0..i {
                assert!(align(res.pairs[i].vector.data(), res.pairs[j].vector.data()) < 1e-10);
            }
        }
    }

    #[test]
    fn zero_operator() {
        let op = DenseOperator::diagonal(&[0.0; 5]);
        let res = solve_largest_magnitude(&op, &EigConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.pairs[0].eigenvalue, 0.0);
    }

    #[test]
    fn symmetric_matches_dense_reference() {
        let a = symmetric(32, 77);
        let op = DenseOperator::new(&a).unwrap();
        let reference = dense_eig_reference(&a).unwrap();
        let cfg = EigConfig {
            k: 5,
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        assert!(res.converged);
        let scale = reference[0].re.abs();
        for (p, r) in res.pairs.iter().zip(&reference) {
            assert!((p.eigenvalue - r.re).abs() <= 1e-8 * scale);
            let v = r.vector.as_ref().unwrap();
            assert!(align(p.vector.data(), v) >= 1.0 - 1e-6);
            assert!((p.vector.l2_norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn restarts_when_subspace_is_small() {
        let a = symmetric(64, 5);
        let op = DenseOperator::new(&a).unwrap();
        let reference = dense_eig_reference(&a).unwrap();
        let cfg = EigConfig {
            k: 3,
            ncv: Some(8),
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.restarts > 0);
        assert_eq!(res.matvecs, 8 + (res.restarts as u64) * (8 - 5));
        for (p, r) in res.pairs.iter().zip(&reference) {
            assert!((p.eigenvalue - r.re).abs() <= 1e-8 * reference[0].re.abs());
        }
    }

    #[test]
    fn itmax_exhaustion_is_not_an_error() {
        let a = symmetric(64, 9);
        let op = DenseOperator::new(&a).unwrap();
        let cfg = EigConfig {
            k: 2,
            ncv: Some(4),
            itmax: 2,
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.cycles, 2);
        assert_eq!(res.pairs.len(), 2);
        assert!(res.pairs[0].eigenvalue.abs() >= res.pairs[1].eigenvalue.abs());
    }

    #[test]
    fn nonsymmetric_mode_finds_dominant_real_eigenvalue() {
        // Upper triangular: eigenvalues are the diagonal.
        let n = 12;
        let mut a = vec![0.0; n * n];
        let mut rng = Rng::new(3);
        for i in 0..n {
            a[i * n + i] = (i + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
            for j in i + 1..n {
                a[i * n + j] = rng.uniform(-1.0, 1.0);
            }
        }
        let t = Tensor::new(vec![n, n], a).unwrap();
        let op = DenseOperator::new(&t).unwrap();
        let cfg = EigConfig {
            k: 2,
            ncv: Some(8),
            mode: SolverMode::Nonsymmetric,
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        assert!(res.converged);
        assert!((res.pairs[0].eigenvalue + 12.0).abs() < 1e-9);
        assert!((res.pairs[1].eigenvalue - 11.0).abs() < 1e-9);
        for p in &res.pairs {
            let r = crate::eigen::penetration_residual(&op, p.eigenvalue, p.vector.data()).unwrap();
            assert!(r < 1e-8);
        }
    }

    #[test]
    fn nonsymmetric_mode_skips_complex_pairs() {
        // Rotation block scaled by 5 (eigenvalues ±5i) next to a real 2.
        let a = Tensor::new(
            vec![3, 3],
            vec![0.0, -5.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 2.0],
        )
        .unwrap();
        let op = DenseOperator::new(&a).unwrap();
        let cfg = EigConfig {
            k: 1,
            ncv: Some(3),
            mode: SolverMode::Nonsymmetric,
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        assert!(res.converged);
        assert!((res.pairs[0].eigenvalue - 2.0).abs() < 1e-10);
        assert_eq!(res.complex_ritz_values, 2);
    }

    #[test]
    fn ordering_is_by_magnitude() {
        let op = DenseOperator::diagonal(&[1.0, -7.0, 3.0, 6.5, -0.2, 2.0]);
        let cfg = EigConfig {
            k: 3,
            ..EigConfig::default()
        };
        let res = solve_largest_magnitude(&op, &cfg).unwrap();
        let vals: Vec<f64> = res.pairs.iter().map(|p| p.eigenvalue).collect();
        assert!((vals[0] + 7.0).abs() < 1e-12);
        assert!((vals[1] - 6.5).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
    }
}
