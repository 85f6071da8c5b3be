//! Symmetric matrix storage: dense or compressed sparse row.
//!
//! Models assemble into dense storage below [`SPARSE_THRESHOLD`] degrees of
//! freedom and into CSR above it. Factorizations densify on demand; matvecs
//! and norms run on the native storage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// DOF count above which generated models store their matrices in CSR form.
pub const SPARSE_THRESHOLD: usize = 2000;

/// Minimal CSR matrix. Column indices within each row are strictly
/// increasing, which makes assembly and serialization deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from unordered triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[k])] = self.values[k];
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> CsrMatrix {
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v.abs() > drop_tol {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: m.nrows(),
            ncols: m.ncols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Square symmetric matrix in dense or CSR storage.
#[derive(Debug, Clone)]
pub enum SymMatrix {
    Dense(DMatrix<f64>),
    Csr(CsrMatrix),
}

impl SymMatrix {
    pub fn zeros(n: usize) -> SymMatrix {
        SymMatrix::Dense(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> SymMatrix {
        SymMatrix::Dense(DMatrix::identity(n, n))
    }

    pub fn nrows(&self) -> usize {
        match self {
            SymMatrix::Dense(m) => m.nrows(),
            SymMatrix::Csr(m) => m.nrows,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, SymMatrix::Dense(_))
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SymMatrix::Dense(m) => m * x,
            SymMatrix::Csr(m) => m.matvec(x),
        }
    }

    /// `self * X` for a dense multi-column right-hand side.
    pub fn matmul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SymMatrix::Dense(m) => m * x,
            SymMatrix::Csr(m) => {
                let mut y = DMatrix::zeros(m.nrows, x.ncols());
                for j in 0..x.ncols() {
                    y.set_column(j, &m.matvec(&x.column(j).into_owned()));
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SymMatrix::Dense(m) => m.clone(),
            SymMatrix::Csr(m) => m.to_dense(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            SymMatrix::Dense(m) => m.norm(),
            SymMatrix::Csr(m) => m.frobenius_norm(),
        }
    }

    pub fn symmetry_defect(&self) -> f64 {
        let d = self.to_dense();
        (&d - d.transpose()).norm()
    }

    /// Dense linear combination `a*self + b*other + c*third`; all three must
    /// share the dimension. Used to form step matrices.
    pub fn lincomb_dense(&self, a: f64, other: &SymMatrix, b: f64, third: &SymMatrix, c: f64) -> DMatrix<f64> {
        let mut m = self.to_dense() * a;
        m += other.to_dense() * b;
        m += third.to_dense() * c;
        m
    }

    /// Cholesky factor check; errors with `context` when not SPD.
    pub fn cholesky_dense(&self, context: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.to_dense()
            .cholesky()
            .ok_or_else(|| Error::NotSpd(context.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_from_triplets_sums_duplicates_and_sorts() {
        let t = vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5), (1, 0, -1.0)];
        let m = CsrMatrix::from_triplets(2, 3, &t);
        assert_eq!(m.indptr, vec![0, 1, 3]);
        assert_eq!(m.indices, vec![0, 0, 2]);
        assert_eq!(m.values, vec![2.0, -1.0, 1.5]);
    }

    #[test]
    fn csr_matvec_matches_dense() {
        let d = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let s = CsrMatrix::from_dense(&d, 0.0);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.matvec(&x), &d * &x);
        assert_eq!(s.to_dense(), d);
    }
}
