use super::{solve_dense, DenseMatrix, NumericsError};

/// Sparse square operator assembled from (row, col, value) triplets and
/// stored in CSR form. Duplicate triplets are summed during assembly.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Below this dimension `solve` falls back to dense elimination, which is
/// both a debugging aid and an exactness guarantee for tiny systems.
const DENSE_FALLBACK_DIM: usize = 600;

impl SparseOperator {
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut rows: Vec<usize> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            assert!(r < dim && c < dim, "triplet out of bounds");
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        crate::par::map_indexed(self.dim, |i| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            s
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m.add_to(i, self.col_idx[k], self.values[k]);
            }
        }
        m
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] += self.values[k];
                }
            }
        }
        d
    }

    /// Solve `A x = b` to relative residual `tol`.
    ///
    /// Jacobi-preconditioned BiCGSTAB; systems below
    /// [`DENSE_FALLBACK_DIM`] unknowns or stalled iterations fall back to
    /// dense Gaussian elimination.
    pub fn solve(&self, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, NumericsError> {
        if b.len() != self.dim {
            return Err(NumericsError::DimensionMismatch { expected: self.dim, got: b.len() });
        }
        if self.dim < DENSE_FALLBACK_DIM {
            return solve_dense(&self.to_dense(), b);
        }
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; self.dim]);
        }
        let inv_diag: Vec<f64> = self
            .diagonal()
            .iter()
            .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let precond = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&inv_diag).map(|(x, d)| x * d).collect()
        };

        let mut x = vec![0.0; self.dim];
        let mut r: Vec<f64> = b.to_vec();
        let r0 = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = vec![0.0; self.dim];
        let mut p = vec![0.0; self.dim];
        let mut best_res = norm(&r);
        for _ in 0..max_iter {
            let rho_next = dot(&r0, &r);
            if rho_next.abs() < 1e-300 {
                break; // breakdown
            }
            let beta = (rho_next / rho) * (alpha / omega);
            rho = rho_next;
            for i in 0..self.dim {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let ph = precond(&p);
            v = self.apply(&ph);
            alpha = rho / dot(&r0, &v);
            let s: Vec<f64> = (0..self.dim).map(|i| r[i] - alpha * v[i]).collect();
            if norm(&s) <= tol * b_norm {
                for i in 0..self.dim {
                    x[i] += alpha * ph[i];
                }
                return Ok(x);
            }
            let sh = precond(&s);
            let t = self.apply(&sh);
            let tt = dot(&t, &t);
            if tt.abs() < 1e-300 {
                break;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..self.dim {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            let res = norm(&r);
            best_res = best_res.min(res);
            if res <= tol * b_norm {
                return Ok(x);
            }
        }
        Err(NumericsError::NoConvergence { residual: best_res / b_norm })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
