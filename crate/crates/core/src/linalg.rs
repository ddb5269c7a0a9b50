//! Sparse symmetric matrices and Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from per-row `(col, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    let last = vals.len() - 1;
                    vals[last] = vals[last] + v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|&(c, _)| c == j).map_or(T::zero(), |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `out = (self + diag(shift)) x`
    pub fn mul_shifted(&self, shift: Option<&[T]>, x: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let mut acc = T::zero();
            for (c, v) in self.row(i) {
                acc = acc + v * x[c];
            }
            if let Some(s) = shift {
                acc = acc + s[i] * x[i];
            }
            out[i] = acc;
        }
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome<T> {
    pub iterations: usize,
    pub relative_residual: T,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Solves `(M + diag(shift)) x = b` by Jacobi-preconditioned CG from `x = 0`.
pub fn pcg<T: Real>(
    m: &CsrMatrix<T>,
    shift: Option<&[T]>,
    b: &[T],
    rel_tol: T,
    max_iters: usize,
) -> Result<(Vec<T>, CgOutcome<T>)> {
    let n = m.dim();
    let mut x = vec![T::zero(); n];
    let b_norm = dot(b, b).sqrt();
    if b_norm.is_zero() {
        return Ok((
            x,
            CgOutcome {
                iterations: 0,
                relative_residual: T::zero(),
            },
        ));
    }
    if !b_norm.is_finite() {
        return Err(Error::solver("cg", "right-hand side is not finite"));
    }
    let inv_diag: Vec<T> = m
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let d = d + shift.map_or(T::zero(), |s| s[i]);
            T::one() / d
        })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&r, &d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let target = rel_tol * b_norm;
    for it in 1..=max_iters {
        m.mul_shifted(shift, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::solver(
                "cg",
                format!("operator not positive definite (p'Ap = {pap})"),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let r_norm = dot(&r, &r).sqrt();
        if r_norm <= target {
            return Ok((
                x,
                CgOutcome {
                    iterations: it,
                    relative_residual: r_norm / b_norm,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r_norm = dot(&r, &r).sqrt();
    Err(Error::solver(
        "cg",
        format!(
            "no convergence in {max_iters} iterations (relative residual {})",
            r_norm / b_norm
        ),
    ))
}

/// Solves the dense symmetric system `a x = b` by Cholesky factorization.
/// Returns `None` when `a` is not numerically positive definite.
pub fn cholesky_solve<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = (0..j).fold(a[i][j], |s, k| s - l[i][k] * l[j][k]);
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
