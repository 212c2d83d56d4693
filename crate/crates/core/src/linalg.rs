//! Dense matrix support sized for regression problems: a row-major matrix
//! and a Householder QR least-squares solver.
//!
//! Design matrices here are tall and narrow (thousands of rows, tens of
//! columns), so a straightforward dense factorization is the right tool.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            assert_eq!(r.len(), p, "ragged row in matrix literal");
            data.extend_from_slice(r);
        }
        Matrix {
            data,
            rows: n,
            cols: p,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x` for a coefficient vector of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `A^T v` for a vector of length `rows`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }

    /// Scale each row by a weight, returning a new matrix.
    pub fn scale_rows(&self, w: &[f64]) -> Matrix {
        assert_eq!(w.len(), self.rows);
        let mut m = self.clone();
        for (row, &wi) in m.data.chunks_exact_mut(self.cols).zip(w) {
            for v in row {
                *v *= wi;
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solve of `min ||A x - b||_2` by Householder QR.
///
/// `labels` names the columns of `A` for the rank-deficiency diagnostic.
/// Rank deficiency is declared when a diagonal of `R` falls below
/// `RANK_TOL * max |R_kk|`.
pub fn qr_least_squares(a: &Matrix, b: &[f64], labels: &[String]) -> Result<Vec<f64>> {
    let (n, p) = (a.rows(), a.cols());
    assert_eq!(b.len(), n);
    assert_eq!(labels.len(), p);
    if n < p {
        return Err(Error::TooFewRows { rows: n, params: p });
    }

    let mut qr = a.clone();
    let mut rhs = b.to_vec();
    let mut r_diag = vec![0.0_f64; p];

    for k in 0..p {
        let mut norm_sq = 0.0;
        for i in k..n {
            let v = qr.get(i, k);
            norm_sq += v * v;
        }
        let mut norm = norm_sq.sqrt();
        if norm == 0.0 {
            r_diag[k] = 0.0;
            continue;
        }
        if qr.get(k, k) < 0.0 {
            norm = -norm;
        }
        for i in k..n {
            qr.set(i, k, qr.get(i, k) / norm);
        }
        qr.set(k, k, qr.get(k, k) + 1.0);

        // Apply the reflector to the remaining columns and to the rhs.
        for j in (k + 1)..p {
            let mut s = 0.0;
            for i in k..n {
                s += qr.get(i, k) * qr.get(i, j);
            }
            s = -s / qr.get(k, k);
            for i in k..n {
                let v = qr.get(i, j) + s * qr.get(i, k);
                qr.set(i, j, v);
            }
        }
        let mut s = 0.0;
        for i in k..n {
            s += qr.get(i, k) * rhs[i];
        }
        s = -s / qr.get(k, k);
        for i in k..n {
            rhs[i] += s * qr.get(i, k);
        }

        r_diag[k] = -norm;
    }

    let max_diag = r_diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    const RANK_TOL: f64 = 1e-10;
    for (k, d) in r_diag.iter().enumerate() {
        if d.abs() <= RANK_TOL * max_diag || *d == 0.0 {
            return Err(Error::RankDeficient(labels[k].clone()));
        }
    }

    // Back substitution against the upper triangle (diagonal in r_diag).
    let mut x = vec![0.0_f64; p];
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in (k + 1)..p {
            s -= qr.get(k, j) * x[j];
        }
        x[k] = s / r_diag[k];
    }
    Ok(x)
}
