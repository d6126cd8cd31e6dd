//! Minimal CSR storage and the two Krylov solvers used by the forward model:
//! Jacobi-preconditioned CG for the SPD flow system and Jacobi-preconditioned
//! BiCGStab for the upwinded transport system.

use crate::error::{ModelError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from per-row (column, value) entries; entries within a row are
    /// sorted and duplicates summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (col, val) in row {
                if last == Some(col) {
                    *values.last_mut().unwrap() += val;
                } else {
                    indices.push(col);
                    values.push(val);
                    last = Some(col);
                }
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for row in 0..self.n {
            let mut acc = 0.0;
            for p in self.indptr[row]..self.indptr[row + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            y[row] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for row in 0..self.n {
            for p in self.indptr[row]..self.indptr[row + 1] {
                if self.indices[p] == row {
                    d[row] = self.values[p];
                }
            }
        }
        d
    }

    /// Dense copy, row-major; intended for small-system oracles in tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for row in 0..self.n {
            for p in self.indptr[row]..self.indptr[row + 1] {
                dense[row][self.indices[p]] = self.values[p];
            }
        }
        dense
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Returns the solution and the iteration count; the convergence criterion is
/// `||b - Ax|| <= rel_tol * ||b||`.
pub fn pcg(a: &Csr, b: &[f64], x0: Option<&[f64]>, rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.n;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        if norm2(&r) <= rel_tol * b_norm {
            return Ok((x, it));
        }
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / b_norm;
    if res <= rel_tol {
        return Ok((x, max_iter));
    }
    Err(ModelError::NonConvergence { what: "pcg", iterations: max_iter, residual: res })
}

/// Jacobi-preconditioned BiCGStab for nonsymmetric systems.
pub fn bicgstab(a: &Csr, b: &[f64], x0: Option<&[f64]>, rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.n;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if norm2(&r) <= rel_tol * b_norm {
        return Ok((x, 0));
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut sh = vec![0.0; n];

    for it in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            let res = norm2(&r) / b_norm;
            return Err(ModelError::NonConvergence { what: "bicgstab (breakdown)", iterations: it, residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            ph[i] = p[i] * inv_diag[i];
        }
        a.matvec(&ph, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= rel_tol * b_norm {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return Ok((x, it + 1));
        }
        for i in 0..n {
            sh[i] = s[i] * inv_diag[i];
        }
        a.matvec(&sh, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= rel_tol * b_norm {
            return Ok((x, it + 1));
        }
        if omega == 0.0 {
            let res = norm2(&r) / b_norm;
            return Err(ModelError::NonConvergence { what: "bicgstab (stagnation)", iterations: it, residual: res });
        }
    }
    let res = norm2(&r) / b_norm;
    Err(ModelError::NonConvergence { what: "bicgstab", iterations: max_iter, residual: res })
}
