//! Compressed sparse rows and a Jacobi-preconditioned conjugate gradient
//! solver for symmetric positive definite systems.
//!
//! All reductions are sequential so results are bitwise reproducible.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-by-row builder; duplicate columns within a row are summed.
#[derive(Debug)]
pub struct CsrBuilder {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    row: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(n: usize, nnz_hint: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            n,
            row_ptr,
            cols: Vec::with_capacity(nnz_hint),
            vals: Vec::with_capacity(nnz_hint),
            row: Vec::with_capacity(8),
        }
    }

    pub fn add(&mut self, col: usize, val: f64) {
        debug_assert!(col < self.n);
        self.row.push((col, val));
    }

    pub fn finish_row(&mut self) {
        self.row.sort_by_key(|&(c, _)| c);
        let mut last = usize::MAX;
        for &(c, v) in &self.row {
            if c == last {
                *self.vals.last_mut().expect("previous entry") += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = c;
            }
        }
        self.row.clear();
        self.row_ptr.push(self.cols.len());
    }

    pub fn build(self) -> Result<CsrMatrix> {
        if self.row_ptr.len() != self.n + 1 {
            return Err(Error::Validation(format!(
                "CSR builder finished {} of {} rows",
                self.row_ptr.len() - 1,
                self.n
            )));
        }
        Ok(CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        })
    }
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// `‖b − Ax‖₂ / ‖b‖₂` at exit (recomputed from scratch).
    pub relative_residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` in place, starting from the incoming `x`, until
/// `‖b − Ax‖₂ ≤ tol ‖b‖₂`.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::Validation(format!(
            "pcg dimension mismatch: matrix {n}, rhs {}, x {}",
            b.len(),
            x.len()
        )));
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::Numerical(format!("non-positive diagonal entry {d} in SPD solve")))
            }
        })
        .collect::<Result<_>>()?;

    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = tol * b_norm;
    let mut r_norm = norm2(&r);
    if r_norm <= target {
        return Ok(CgStats { iterations: 0, relative_residual: r_norm / b_norm });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!(
                "conjugate gradient breakdown (p·Ap = {pap:e}) at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        r_norm = norm2(&r);
        if r_norm <= target {
            // Guard against drift of the recursive residual.
            let ax = a.mul_vec(x);
            let true_res = norm2(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
            if true_res <= target {
                return Ok(CgStats { iterations: it, relative_residual: true_res / b_norm });
            }
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
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
    Err(Error::NonConvergence {
        what: format!("conjugate gradient ({n} unknowns, {max_iter} iterations)"),
        residual: r_norm / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut b = CsrBuilder::new(n, 3 * n);
        for i in 0..n {
            if i > 0 {
                b.add(i - 1, -1.0);
            }
            b.add(i, 2.0 + shift);
            if i + 1 < n {
                b.add(i + 1, -1.0);
            }
            b.finish_row();
        }
        b.build().unwrap()
    }

    #[test]
    fn builder_sums_duplicates() {
        let mut b = CsrBuilder::new(2, 4);
        b.add(1, 1.0);
        b.add(0, 2.0);
        b.add(1, 0.5);
        b.finish_row();
        b.add(1, 3.0);
        b.finish_row();
        let m = b.build().unwrap();
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.mul_vec(&[1.0, 2.0]), vec![5.0, 6.0]);
    }

    #[test]
    fn pcg_solves_spd_system() {
        let a = laplacian_1d(200, 0.01);
        let exact: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.mul_vec(&exact);
        let mut x = vec![0.0; 200];
        let stats = pcg(&a, &b, &mut x, 1e-12, 1000).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        let err = x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn pcg_zero_rhs_and_warm_start() {
        let a = laplacian_1d(10, 1.0);
        let mut x = vec![1.0; 10];
        pcg(&a, &[0.0; 10], &mut x, 1e-10, 10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        let b = a.mul_vec(&[1.0; 10]);
        let mut x = vec![1.0; 10];
        assert_eq!(pcg(&a, &b, &mut x, 1e-10, 10).unwrap().iterations, 0);
    }

    #[test]
    fn pcg_reports_breakdown_and_nonconvergence() {
        let mut b = CsrBuilder::new(2, 2);
        b.add(0, 1.0);
        b.finish_row();
        b.add(1, -1.0);
        b.finish_row();
        let m = b.build().unwrap();
        let mut x = vec![0.0; 2];
        assert!(matches!(pcg(&m, &[1.0, 1.0], &mut x, 1e-10, 10), Err(Error::Numerical(_))));

        let a = laplacian_1d(100, 0.0);
        let mut x = vec![0.0; 100];
        let err = pcg(&a, &vec![1.0; 100], &mut x, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }
}
