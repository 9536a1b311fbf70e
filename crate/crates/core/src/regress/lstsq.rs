//! Dense least squares by Householder QR.

use crate::error::{Error, Result};

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Self {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged column");
            data.extend(c);
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }
}

/// Minimises `|A x - b|_2` for a full-column-rank `A` with `rows >= cols`.
///
/// A column whose diagonal entry in `R` falls below `rank_tol` times the
/// largest one is treated as dependent and reported as [`Error::DegenerateDesign`].
pub fn solve_least_squares(a: &Matrix, b: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.len(), m, "rhs length");
    if m < n {
        return Err(Error::InsufficientData { needed: n, got: m });
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut diag = vec![0.0; n];

    for k in 0..n {
        let col = &r.col(k)[k..];
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateDesign);
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place of the column below the diagonal
        let mut v: Vec<f64> = col.to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k + 1..n {
            let c = &mut r.col_mut(j)[k..];
            let s = 2.0 * v.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= s * vi;
            }
        }
        let tail = &mut qtb[k..];
        let s = 2.0 * v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
        for (ti, vi) in tail.iter_mut().zip(&v) {
            *ti -= s * vi;
        }
    }

    let max_diag = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= rank_tol * max_diag) {
        return Err(Error::DegenerateDesign);
    }

    // back substitution on R x = Q^T b
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for (j, xj) in x.iter().enumerate().skip(i + 1) {
            s -= r.get(i, j) * xj;
        }
        x[i] = s / diag[i];
    }
    Ok(x)
}
