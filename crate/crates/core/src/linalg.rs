//! Dense row-major matrices and the factorizations the ridge solver needs.
//!
//! Row-parallel kernels keep every output entry's summation order fixed, so
//! results are bit-identical regardless of the rayon thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length rows. An empty iterator yields a 0×0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch {
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        if other.cols == 0 {
            return Ok(out);
        }
        let inner = self.cols;
        out.data
            .par_chunks_mut(other.cols)
            .enumerate()
            .for_each(|(i, out_row)| {
                let lhs = &self.data[i * inner..(i + 1) * inner];
                for (k, &a) in lhs.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let rhs = other.row(k);
                    for (o, &b) in out_row.iter_mut().zip(rhs) {
                        *o += a * b;
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · other`, without materializing the transpose of a tall matrix twice.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimMismatch {
                expected: self.rows,
                actual: other.rows,
            });
        }
        self.transpose().matmul(other)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn add_diagonal(&mut self, alpha: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += alpha;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch {
                expected: self.rows * self.cols,
                actual: other.rows * other.cols,
            });
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    /// Fails with [`Error::Singular`] when `a` is not numerically positive definite.
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows;
        if a.cols != n {
            return Err(Error::DimMismatch {
                expected: n,
                actual: a.cols,
            });
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let diag = a.get(j, j) - lj.iter().map(|v| v * v).sum::<f64>();
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Singular(format!(
                    "matrix not positive definite at pivot {j}"
                )));
            }
            let d = diag.sqrt();
            l.data[j * n + j] = d;
            let (head, tail) = l.data.split_at_mut((j + 1) * n);
            let lj = &head[j * n..j * n + j];
            tail.par_chunks_mut(n).enumerate().for_each(|(off, row)| {
                let i = j + 1 + off;
                let dot: f64 = row[..j].iter().zip(lj).map(|(x, y)| x * y).sum();
                row[j] = (a.get(i, j) - dot) / d;
            });
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `A·X = B` for every column of `b`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.lower.rows;
        if b.rows != n {
            return Err(Error::DimMismatch {
                expected: n,
                actual: b.rows,
            });
        }
        let upper = self.lower.transpose();
        let columns = b.transpose();
        let mut solved = Matrix::zeros(b.cols, n);
        solved
            .data
            .par_chunks_mut(n.max(1))
            .zip(columns.data.par_chunks(n.max(1)))
            .for_each(|(x, rhs)| {
                if n == 0 {
                    return;
                }
                // L z = b
                for i in 0..n {
                    let li = &self.lower.data[i * n..i * n + i];
                    let dot: f64 = li.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
                    x[i] = (rhs[i] - dot) / self.lower.data[i * n + i];
                }
                // Lᵀ x = z
                for i in (0..n).rev() {
                    let ui = &upper.data[i * n + i + 1..(i + 1) * n];
                    let dot: f64 = ui.iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
                    x[i] = (x[i] - dot) / upper.data[i * n + i];
                }
            });
        Ok(solved.transpose())
    }
}

/// Gaussian elimination with partial pivoting. Returns [`Error::Singular`]
/// when a pivot falls below `tol · max|A|`.
pub fn lu_solve(a: &Matrix, b: &Matrix, tol: f64) -> Result<Matrix> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimMismatch {
            expected: n,
            actual: a.cols,
        });
    }
    if b.rows != n {
        return Err(Error::DimMismatch {
            expected: n,
            actual: b.rows,
        });
    }
    let scale = a.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut m = a.clone();
    let mut x = b.clone();
    let w = x.cols;
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, m.get(r, col).abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > tol * scale) {
            return Err(Error::Singular(format!(
                "rank deficient at column {col} (pivot {pivot_abs:e})"
            )));
        }
        if pivot_row != col {
            for c in 0..n {
                m.data.swap(col * n + c, pivot_row * n + c);
            }
            for c in 0..w {
                x.data.swap(col * w + c, pivot_row * w + c);
            }
        }
        let p = m.get(col, col);
        for r in col + 1..n {
            let f = m.get(r, col) / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m.get(col, c);
                m.data[r * n + c] -= f * v;
            }
            for c in 0..w {
                let v = x.get(col, c);
                x.data[r * w + c] -= f * v;
            }
        }
    }
    for r in (0..n).rev() {
        let p = m.get(r, r);
        for c in 0..w {
            let mut acc = x.get(r, c);
            for k in r + 1..n {
                acc -= m.get(r, k) * x.get(k, c);
            }
            x.data[r * w + c] = acc / p;
        }
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
