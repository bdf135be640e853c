//! Minimal sparse kernels for the P1 discretization: CSR storage with
//! symmetric matrix-vector products and a banded Cholesky factorization.
//! The structured mesh is numbered row by row, so the system matrix has a
//! small fixed bandwidth and a band factorization is the natural direct solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
}

/// Triplet accumulator; duplicate entries are summed on conversion.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut cur_row = 0;
        for (r, c, v) in self.entries {
            while cur_row < r {
                row_ptr.push(col_idx.len());
                cur_row += 1;
            }
            if let (Some(&last_c), Some(last_v)) = (col_idx.last(), values.last_mut()) {
                if row_ptr.len() - 1 == r && last_c == c && row_ptr[r] < col_idx.len() {
                    *last_v += v;
                    continue;
                }
            }
            col_idx.push(c);
            values.push(v);
        }
        while cur_row < self.n {
            row_ptr.push(col_idx.len());
            cur_row += 1;
        }
        CsrMatrix { n: self.n, row_ptr, col_idx, values }
    }
}

/// Square CSR matrix; symmetric matrices are stored in full.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// xᵀ A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += x[r] * row;
        }
        acc
    }

    /// Linear combination a·A + b·B of two matrices with arbitrary patterns.
    pub fn linear_combination(a: f64, ma: &CsrMatrix, b: f64, mb: &CsrMatrix) -> CsrMatrix {
        assert_eq!(ma.n, mb.n);
        let mut builder = CooBuilder::new(ma.n);
        for r in 0..ma.n {
            for k in ma.row_ptr[r]..ma.row_ptr[r + 1] {
                builder.push(r, ma.col_idx[k], a * ma.values[k]);
            }
            for k in mb.row_ptr[r]..mb.row_ptr[r + 1] {
                builder.push(r, mb.col_idx[k], b * mb.values[k]);
            }
        }
        builder.build()
    }

    pub fn iter_row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    /// Largest |i − j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                bw = bw.max(r.abs_diff(self.col_idx[k]));
            }
        }
        bw
    }
}

/// Cholesky factorization L Lᵀ of a symmetric positive definite matrix in
/// lower band storage. Column j holds entries (j..j+bw, j) contiguously.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    /// Factorizes the matrix given in CSR form. The bandwidth is taken from
    /// the sparsity pattern; fill-in stays inside the band.
    pub fn factor(a: &CsrMatrix) -> Result<Self, SparseError> {
        let n = a.dim();
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut data = vec![0.0; n * stride];
        for r in 0..n {
            for (c, v) in a.iter_row(r) {
                if r >= c {
                    data[c * stride + (r - c)] = v;
                }
            }
        }
        for j in 0..n {
            let start = j.saturating_sub(bw);
            for k in start..j {
                let l_jk = data[k * stride + (j - k)];
                if l_jk == 0.0 {
                    continue;
                }
                let top = (k + bw).min(n - 1);
                for i in j..=top {
                    data[j * stride + (i - j)] -= l_jk * data[k * stride + (i - k)];
                }
            }
            let pivot = data[j * stride];
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(SparseError::NotPositiveDefinite { col: j, pivot });
            }
            let inv = 1.0 / pivot.sqrt();
            let top = (j + bw).min(n - 1);
            for i in j..=top {
                data[j * stride + (i - j)] *= inv;
            }
        }
        Ok(Self { n, bw, data })
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let stride = self.bw + 1;
        // forward: L y = b
        for j in 0..self.n {
            let y = b[j] / self.data[j * stride];
            b[j] = y;
            let top = (j + self.bw).min(self.n - 1);
            for i in (j + 1)..=top {
                b[i] -= self.data[j * stride + (i - j)] * y;
            }
        }
        // backward: Lᵀ x = y
        for j in (0..self.n).rev() {
            let top = (j + self.bw).min(self.n - 1);
            let mut acc = b[j];
            for i in (j + 1)..=top {
                acc -= self.data[j * stride + (i - j)] * b[i];
            }
            b[j] = acc / self.data[j * stride];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }
}
