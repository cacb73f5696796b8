use ndarray::prelude::*;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Compressed sparse row storage with complex entries.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, Complex64)],
    ) -> Self {
        let mut sorted: Vec<_> = triplets
            .iter()
            .copied()
            .filter(|(_, _, v)| v.norm_sqr() != 0.0)
            .collect();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        // merge duplicates
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<Complex64> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            debug_assert!(r < nrows && c < ncols);
            if indptr[r + 1] > indptr[r]
                && indices.len() > 0
                && *indices.last().unwrap() == c
                && indptr[r + 1] == indices.len()
            {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] = indices.len();
            }
        }
        // make indptr cumulative
        for r in 0..nrows {
            if indptr[r + 1] < indptr[r] {
                indptr[r + 1] = indptr[r];
            }
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Maximum number of nonzeros in any row.
    pub fn row_sparsity(&self) -> usize {
        (0..self.nrows)
            .map(|r| self.indptr[r + 1] - self.indptr[r])
            .max()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.data[p]))
        })
    }

    pub fn matvec(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = Array1::zeros(self.nrows);
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^dag x, computed from the CSR of A.
    pub fn adjoint_matvec(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = Array1::zeros(self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            for p in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[p]] += self.data[p].conj() * xr;
            }
        }
        y
    }

    pub fn transpose_conj(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut m = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.iter() {
            m[[r, c]] += v;
        }
        m
    }

    pub fn from_dense(m: &Array2<Complex64>) -> Self {
        let t: Vec<_> = m
            .indexed_iter()
            .filter(|(_, v)| v.norm_sqr() != 0.0)
            .map(|((r, c), v)| (r, c, *v))
            .collect();
        Self::from_triplets(m.nrows(), m.ncols(), &t)
    }

    /// Solves S x = b by forward substitution, requiring S to be lower
    /// triangular with an implicit-or-explicit unit diagonal.
    pub fn solve_unit_lower(&self, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if self.nrows != self.ncols {
            return Err(Error::Input("triangular solve needs a square matrix".into()));
        }
        let mut x = b.clone();
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut diag = Complex64::new(0.0, 0.0);
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                if c < r {
                    acc += self.data[p] * x[c];
                } else if c == r {
                    diag = self.data[p];
                } else {
                    return Err(Error::Numeric(
                        "matrix is not lower triangular".into(),
                    ));
                }
            }
            if (diag - Complex64::new(1.0, 0.0)).norm() > 1e-14 {
                return Err(Error::Numeric("diagonal is not unit".into()));
            }
            x[r] = b[r] - acc;
        }
        Ok(x)
    }

    /// Solves S^dag x = b by backward substitution (S as in
    /// `solve_unit_lower`, so S^dag is unit upper triangular).
    pub fn solve_unit_lower_adjoint(&self, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if self.nrows != self.ncols {
            return Err(Error::Input("triangular solve needs a square matrix".into()));
        }
        // (S^dag x)_c = conj(S_cc) x_c + sum_{r>c} conj(S_rc) x_r; iterate rows
        // of S from last to first and scatter.
        let mut x = b.clone();
        for r in (0..self.nrows).rev() {
            // at this point x[r] is final
            let xr = x[r];
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                if c < r {
                    x[c] -= self.data[p].conj() * xr;
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::Norm;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn matvec_matches_dense() {
        let t = vec![
            (0, 0, c(1.0, 0.0)),
            (1, 0, c(-2.0, 1.0)),
            (1, 1, c(1.0, 0.0)),
            (2, 1, c(0.5, 0.0)),
            (2, 2, c(1.0, 0.0)),
        ];
        let s = CsrMatrix::from_triplets(3, 3, &t);
        let x = array![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0)];
        let y = s.matvec(&x);
        let yd = s.to_dense().dot(&x);
        assert!((&y - &yd).norm_l2() < 1e-14);
        let z = s.adjoint_matvec(&x);
        let zd = s.to_dense().t().mapv(|v| v.conj()).dot(&x);
        assert!((&z - &zd).norm_l2() < 1e-14);
    }

    #[test]
    fn unit_lower_solve_roundtrip() {
        let t = vec![
            (0, 0, c(1.0, 0.0)),
            (1, 0, c(-2.0, 1.0)),
            (1, 1, c(1.0, 0.0)),
            (2, 0, c(3.0, 0.0)),
            (2, 1, c(0.5, -0.5)),
            (2, 2, c(1.0, 0.0)),
        ];
        let s = CsrMatrix::from_triplets(3, 3, &t);
        let b = array![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)];
        let x = s.solve_unit_lower(&b).unwrap();
        assert!((&s.matvec(&x) - &b).norm_l2() < 1e-13);
        let y = s.solve_unit_lower_adjoint(&b).unwrap();
        assert!((&s.adjoint_matvec(&y) - &b).norm_l2() < 1e-13);
    }

    #[test]
    fn duplicate_triplets_merge() {
        let t = vec![(0, 0, c(1.0, 0.0)), (0, 0, c(2.0, 0.0))];
        let s = CsrMatrix::from_triplets(1, 1, &t);
        assert_eq!(s.nnz(), 1);
        assert!((s.to_dense()[[0, 0]] - c(3.0, 0.0)).norm() < 1e-15);
    }
}
