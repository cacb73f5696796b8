use ndarray::prelude::*;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest dimension we allow for direct dense decompositions.
pub const DENSE_LIMIT: usize = 4096;

/// A square complex matrix together with its row/column sparsity counts.
#[derive(Debug, Clone)]
pub struct MatrixHandle {
    dense: Array2<Complex64>,
    dim: usize,
    row_sparsity: usize,
    col_sparsity: usize,
}

impl MatrixHandle {
    pub fn from_dense(dense: Array2<Complex64>) -> Result<Self> {
        let (r, c) = dense.dim();
        if r != c {
            return Err(Error::Input(format!("matrix must be square, got {r}x{c}")));
        }
        if dense.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        let mut row_nnz = vec![0usize; r];
        let mut col_nnz = vec![0usize; c];
        for ((i, j), z) in dense.indexed_iter() {
            if z.norm_sqr() != 0.0 {
                row_nnz[i] += 1;
                col_nnz[j] += 1;
            }
        }
        Ok(Self {
            dim: r,
            row_sparsity: row_nnz.into_iter().max().unwrap_or(0),
            col_sparsity: col_nnz.into_iter().max().unwrap_or(0),
            dense,
        })
    }

    pub fn from_real(dense: Array2<f64>) -> Result<Self> {
        Self::from_dense(dense.mapv(|x| Complex64::new(x, 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dense: Array2::zeros((dim, dim)),
            dim,
            row_sparsity: 0,
            col_sparsity: 0,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            m[[i, i]] = Complex64::new(1.0, 0.0);
        }
        Self::from_dense(m).expect("identity is finite")
    }

    /// The twisted-Toeplitz test family: diagonal -(j+1)/d, symmetric
    /// off-diagonals i*(j+1)/d.
    pub fn twisted_toeplitz(d: usize) -> Self {
        let mut m = Array2::zeros((d, d));
        let df = d as f64;
        for j in 0..d {
            m[[j, j]] = Complex64::new(-((j + 1) as f64) / df, 0.0);
        }
        for j in 0..d.saturating_sub(1) {
            let v = Complex64::new(0.0, (j + 1) as f64 / df);
            m[[j, j + 1]] = v;
            m[[j + 1, j]] = v;
        }
        Self::from_dense(m).expect("finite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_sparsity(&self) -> usize {
        self.row_sparsity
    }

    pub fn col_sparsity(&self) -> usize {
        self.col_sparsity
    }

    /// s = max{s_r, s_c}.
    pub fn sparsity(&self) -> usize {
        self.row_sparsity.max(self.col_sparsity)
    }

    pub fn dense(&self) -> &Array2<Complex64> {
        &self.dense
    }

    pub fn check_dense_limit(&self) -> Result<()> {
        if self.dim > DENSE_LIMIT {
            return Err(Error::Capacity {
                dim: self.dim,
                limit: DENSE_LIMIT,
            });
        }
        Ok(())
    }
}
