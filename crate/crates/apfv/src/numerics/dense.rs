use super::NumericsError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self.get(i, j) * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= s;
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (v, w) in m.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// max |entry|
    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                d = d.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        d
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        assert_eq!(col.len(), self.rows);
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted ascending (so kernel vectors of a PSD matrix
/// come first) with the matching orthonormal eigenvector columns.
pub fn sym_eigendecompose(
    m: &DenseMatrix,
    tol: f64,
) -> Result<(Vec<f64>, DenseMatrix), NumericsError> {
    assert_eq!(m.rows, m.cols, "spectral op needs a square matrix");
    let defect = m.symmetry_defect();
    if defect > tol {
        return Err(NumericsError::NonSymmetric { defect, tol });
    }
    let n = m.rows;
    let mut a = m.clone();
    // symmetrize exactly so the sweep sees one consistent value per pair
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut q = DenseMatrix::identity(n);
    let scale = a.norm_inf().max(1e-300);
    let sweep_budget = 100;
    for _ in 0..sweep_budget {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off <= 1e-15 * scale {
            let mut pairs: Vec<(f64, usize)> =
                (0..n).map(|i| (a.get(i, i), i)).collect();
            pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
            let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let mut vectors = DenseMatrix::zeros(n, n);
            for (k, &(_, src)) in pairs.iter().enumerate() {
                vectors.set_column(k, &q.column(src));
            }
            return Ok((eigenvalues, vectors));
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = a.get(p, r);
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(r, r);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, r);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, r, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(r, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(r, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkq = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkq);
                    q.set(k, r, s * qkp + c * qkq);
                }
            }
        }
    }
    let mut off = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            off = off.max(a.get(i, j).abs());
        }
    }
    Err(NumericsError::NoConvergence { residual: off })
}

/// Split a symmetric matrix into its PSD and NSD parts via eigenvalue
/// clamping: `G = G_plus + G_minus`.
pub fn pos_neg_split(
    g: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix), NumericsError> {
    let (lambdas, q) = sym_eigendecompose(g, 1e-12 * g.norm_inf().max(1.0))?;
    let qt = q.transpose();
    let plus = q.matmul(&DenseMatrix::diag(
        &lambdas.iter().map(|&l| l.max(0.0)).collect::<Vec<_>>(),
    ))
    .matmul(&qt);
    let minus = q.matmul(&DenseMatrix::diag(
        &lambdas.iter().map(|&l| l.min(0.0)).collect::<Vec<_>>(),
    ))
    .matmul(&qt);
    Ok((plus, minus))
}

/// Dense Gaussian elimination with partial pivoting; `a` is consumed as the
/// working copy. Used directly for small solves and as the sparse-solver
/// fallback.
pub fn solve_dense(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    assert_eq!(a.rows, a.cols);
    if b.len() != a.rows {
        return Err(NumericsError::DimensionMismatch { expected: a.rows, got: b.len() });
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = m.get(col, col).abs();
        for r in (col + 1)..n {
            let v = m.get(r, col).abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Err(NumericsError::Singular);
        }
        if piv != col {
            for j in 0..n {
                let t = m.get(col, j);
                m.set(col, j, m.get(piv, j));
                m.set(piv, j, t);
            }
            x.swap(col, piv);
        }
        let d = m.get(col, col);
        for r in (col + 1)..n {
            let f = m.get(r, col) / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m.get(r, j) - f * m.get(col, j);
                m.set(r, j, v);
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in (col + 1)..n {
            s -= m.get(col, j) * x[j];
        }
        x[col] = s / m.get(col, col);
    }
    Ok(x)
}
