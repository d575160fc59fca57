//! Compressed sparse row storage with a fixed pattern, and Jacobi-preconditioned CG.

use super::mesh::Mesh;
use super::SolverError;

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Symmetric pattern of the mesh connectivity with explicit diagonal entries.
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let n = mesh.node_count();
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for e in &mesh.elements {
            for a in 0..e.n_local {
                for b in 0..e.n_local {
                    adj[e.nodes[a]].push(e.nodes[b]);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Storage slot of `(i, j)`; panics if the entry is not in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i]
            + row
                .binary_search(&j)
                .expect("entry outside sparsity pattern")
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j)
            .map(|k| self.vals[self.row_ptr[i] + k])
            .unwrap_or(0.0)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// `max |A_ij - A_ji|`.
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

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub negative_curvature: bool,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Truncated preconditioned CG for `A x = b` starting from zero.
///
/// Stops at relative residual `rel_tol`, after `max_iter` iterations, or on
/// the first direction with non-positive curvature. In the last case the
/// iterate so far is returned, or the preconditioned right-hand side if no
/// step was taken yet, so the result is always a descent direction for a
/// quadratic model with gradient `-b`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgOutcome), SolverError> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = dot(b, b).sqrt();
    let mut outcome = CgOutcome {
        iterations: 0,
        negative_curvature: false,
        converged: true,
    };
    if b_norm == 0.0 {
        return Ok((x, outcome));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !rz.is_finite() {
            return Err(SolverError::SingularSystem(format!(
                "non-finite curvature at CG iteration {it}"
            )));
        }
        if pap <= 0.0 {
            outcome.negative_curvature = true;
            outcome.iterations = it;
            if it == 0 {
                x = z;
            }
            return Ok((x, outcome));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        outcome.iterations = it + 1;
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            return Ok((x, outcome));
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
    outcome.converged = false;
    Ok((x, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::mesh::Domain;

    fn laplacian(n: usize) -> CsrMatrix {
        let mesh = Mesh::new(&Domain::interval(0.0, 1.0, n).unwrap());
        let mut a = CsrMatrix::from_mesh(&mesh);
        for i in 0..n {
            let s = a.slot(i, i);
            a.values_mut()[s] = 2.0;
            if i + 1 < n {
                let s = a.slot(i, i + 1);
                a.values_mut()[s] = -1.0;
                let s = a.slot(i + 1, i);
                a.values_mut()[s] = -1.0;
            }
        }
        a
    }

    #[test]
    fn pattern_of_rectangle() {
        let mesh = Mesh::new(&Domain::rectangle(0.0, 1.0, 0.0, 1.0, 3, 3).unwrap());
        let a = CsrMatrix::from_mesh(&mesh);
        // interior node sees itself and six neighbours
        assert_eq!(a.row(4).count(), 7);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let a = laplacian(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&x_true);
        let (x, out) = pcg(&a, &b, 1e-12, 500).unwrap();
        assert!(out.converged && !out.negative_curvature);
        for (x, t) in x.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_stops_on_negative_curvature() {
        let mut a = laplacian(5);
        for v in a.values_mut() {
            *v = -*v;
        }
        let b = vec![1.0; 5];
        let (x, out) = pcg(&a, &b, 1e-12, 50).unwrap();
        assert!(out.negative_curvature);
        assert!(dot(&x, &b) > 0.0);
    }
}
