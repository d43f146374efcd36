//! Dense eigendecomposition for small explicit matrices, used to check the
//! iterative solver.
//!
//! Exactly symmetric input goes through cyclic Jacobi rotations. Anything else
//! is reduced to upper Hessenberg form by stabilized elimination and then
//! solved with the Francis double-shift QR iteration; eigenvectors of real
//! eigenvalues come from inverse iteration on the original matrix.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

const MAX_DIM: usize = 256;
const MAX_SWEEPS: usize = 100;
const MAX_QR_ITERS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEigenpair {
    pub re: f64,
    pub im: f64,
    /// Unit eigenvector for real eigenvalues, largest-magnitude entry positive.
    pub vector: Option<Vec<f64>>,
}

impl DenseEigenpair {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// All eigenvalues of a square matrix of dimension at most 256, sorted by
/// modulus, largest first.
pub fn dense_eig_reference(a: &Tensor) -> Result<Vec<DenseEigenpair>> {
    let n = match a.shape() {
        [r, c] if r == c => *r,
        s => {
            return Err(Error::InvalidShape(format!(
                "expected a square matrix, got {s:?}"
            )))
        }
    };
    if n > MAX_DIM {
        return Err(Error::TooLarge(format!(
            "dense reference limited to n <= {MAX_DIM}, got {n}"
        )));
    }
    let rows: Vec<Vec<f64>> = a.data().chunks_exact(n).map(<[f64]>::to_vec).collect();
    let symmetric = (0..n).all(|i| (0..i).all(|j| rows[i][j] == rows[j][i]));
    let mut pairs = if symmetric {
        jacobi(rows)?
    } else {
        general(&rows)?
    };
    pairs.sort_by(|x, y| {
        y.modulus()
            .total_cmp(&x.modulus())
            .then(y.re.total_cmp(&x.re))
            .then(y.im.total_cmp(&x.im))
    });
    Ok(pairs)
}

fn canonical_sign(v: &mut [f64]) {
    let imax = (0..v.len())
        .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
        .unwrap_or(0);
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn jacobi(mut a: Vec<Vec<f64>>) -> Result<Vec<DenseEigenpair>> {
    let n = a.len();
    let frob = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let target = n as f64 * f64::EPSILON * frob;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t =
                    if tau >= 0.0 { 1.0 } else { -1.0 } / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "Jacobi did not converge in {MAX_SWEEPS} sweeps"
        )));
    }
    Ok((0..n)
        .map(|j| {
            let mut col: Vec<f64> = v.iter().map(|row| row[j]).collect();
            canonical_sign(&mut col);
            DenseEigenpair {
                re: a[j][j],
                im: 0.0,
                vector: Some(col),
            }
        })
        .collect())
}

fn general(rows: &[Vec<f64>]) -> Result<Vec<DenseEigenpair>> {
    let n = rows.len();
    // 1-indexed working copy.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        a[i + 1][1..].copy_from_slice(&rows[i]);
    }
    elmhes(&mut a, n);
    for i in 1..=n {
        for j in 1..i.saturating_sub(1) {
            a[i][j] = 0.0;
        }
    }
    let (wr, wi) = hqr(a, n)?;
    let scale = rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok((1..=n)
        .map(|i| DenseEigenpair {
            re: wr[i],
            im: wi[i],
            vector: (wi[i] == 0.0)
                .then(|| inverse_iteration(rows, wr[i], scale))
                .flatten(),
        })
        .collect())
}

fn elmhes(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x = 0.0f64;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in m - 1..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix (1-indexed) by Francis
/// double-shift QR with exceptional shifts after 10 and 20 stalled iterations.
#[allow(clippy::many_single_char_names)]
fn hqr(mut a: Vec<Vec<f64>>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.max(2) - 1..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r, mut x, mut y, mut z, mut w): (f64, f64, f64, f64, f64, f64, f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            y = a[nn - 1][nn - 1];
            w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_QR_ITERS {
                return Err(Error::numerical(format!(
                    "QR iteration stalled at eigenvalue {nn} after {MAX_QR_ITERS} iterations"
                )));
            }
            if its == 10 || its == 20 {
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s0;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nn - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((wr, wi))
}

/// Gaussian elimination with partial pivoting; `None` on an exactly zero pivot.
struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    fn new(mut a: Vec<Vec<f64>>) -> Option<Self> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
            if a[piv][col] == 0.0 {
                return None;
            }
            a.swap(col, piv);
            perm.swap(col, piv);
            for i in col + 1..n {
                let f = a[i][col] / a[col][col];
                a[i][col] = f;
                for j in col + 1..n {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
        Some(Self { lu: a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}

fn inverse_iteration(rows: &[Vec<f64>], lambda: f64, scale: f64) -> Option<Vec<f64>> {
    let n = rows.len();
    let base = scale.max(lambda.abs()).max(f64::MIN_POSITIVE);
    for delta in [1e-10 * base, 1e-8 * base, 1e-6 * base] {
        let mut shifted = rows.to_vec();
        for (i, row) in shifted.iter_mut().enumerate() {
            row[i] -= lambda + delta;
        }
        let Some(lu) = Lu::new(shifted) else { continue };
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut ok = true;
        for _ in 0..3 {
            let mut z = lu.solve(&v);
            let nrm = tensor::norm(&z);
            if !(nrm.is_finite() && nrm > 0.0) {
                ok = false;
                break;
            }
            tensor::scale(1.0 / nrm, &mut z);
            v = z;
        }
        if ok {
            canonical_sign(&mut v);
            return Some(v);
        }
    }
    None
}
