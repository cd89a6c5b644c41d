//! Dense linear algebra for the assembled integral-equation systems.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut col = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (c, v) in col.iter_mut().zip(self.row(i)) {
                *c += v.abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm_2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `PA = LU` with partial pivoting, packed into one matrix.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let threshold = 1e-14 * a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::SingularMatrix { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let (head, tail) = lu.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            let inv = 1.0 / pivot_row[k];
            for row in tail.chunks_exact_mut(n) {
                let l = row[k] * inv;
                row[k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        row[j] -= l * pivot_row[j];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, x)| l * x).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, x)| u * x).sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: b.len(),
            });
        }
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ w = z, x = Pᵀ w.
        let mut z = b.to_vec();
        for i in 0..n {
            z[i] /= self.lu[(i, i)];
            let zi = z[i];
            for j in i + 1..n {
                z[j] -= self.lu[(i, j)] * zi;
            }
        }
        for i in (0..n).rev() {
            let zi = z[i];
            for j in 0..i {
                z[j] -= self.lu[(i, j)] * zi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        Ok(x)
    }
}

pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuFactorization::new(a)?.solve(b)
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Restarted GMRES with Jacobi (diagonal) scaling. Non-convergence is
/// reported in the outcome, not as an error.
pub fn gmres_solve(a: &DenseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<GmresOutcome> {
    if !a.is_square() {
        return Err(Error::invalid("GMRES needs a square matrix"));
    }
    let n = a.rows();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    let restart = n.clamp(1, 200);
    let dinv: Vec<f64> = (0..n)
        .map(|i| {
            let d = a[(i, i)];
            if d.abs() > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        a.matvec(x).into_iter().zip(&dinv).map(|(v, d)| v * d).collect()
    };
    let rhs: Vec<f64> = b.iter().zip(&dinv).map(|(v, d)| v * d).collect();
    let bnorm = norm_2(&rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut iterations = 0;
    let mut rel;
    while iterations < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let beta = norm_2(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let mut w = apply(&basis[k]);
            // Modified Gram–Schmidt.
            for (j, v) in basis.iter().enumerate() {
                let hj: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                h[j][k] = hj;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hj * vi;
                }
            }
            let wn = norm_2(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || wn == 0.0 {
                break;
            }
            basis.push(w.into_iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yj, v) in y.iter().zip(&basis) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += yj * vi;
            }
        }
    }
    let ax = apply(&x);
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
    rel = norm_2(&r) / bnorm;
    Ok(GmresOutcome {
        x,
        iterations,
        relative_residual: rel,
        converged: rel <= tol,
    })
}

/// Estimate of `‖A‖₁ ‖A⁻¹‖₁` (Hager's method with Higham's safeguard);
/// `+∞` when `A` is singular.
pub fn condition_estimate(a: &DenseMatrix) -> f64 {
    match LuFactorization::new(a) {
        Ok(lu) => a.norm_1() * inverse_norm1_estimate(&lu),
        Err(_) => f64::INFINITY,
    }
}

fn inverse_norm1_estimate(lu: &LuFactorization) -> f64 {
    let n = lu.dim();
    if n == 0 {
        return 0.0;
    }
    let solve = |v: &[f64]| lu.solve(v).expect("dimension checked");
    let solve_t = |v: &[f64]| lu.solve_transpose(v).expect("dimension checked");
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = solve(&x);
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = solve_t(&xi);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.abs()))
            .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        x = vec![0.0; n];
        x[j] = 1.0;
        last_j = j;
    }
    let alt: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        })
        .collect();
    let y = solve(&alt);
    let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    est.max(alt_est)
}

/// Smallest eigenvalue of the symmetric part `(A + Aᵀ) / 2`.
pub fn symmetric_min_eigenvalue(a: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("eigenvalues need a square matrix"));
    }
    let m = a.to_nalgebra();
    let sym = (&m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}
