//! Dense row-major matrices and the handful of products the estimators need.
//!
//! Products take a [`Tally`] so the complexity accounting can be checked against
//! what the inner loops actually execute. [`NoTally`] compiles away.

use std::cell::Cell;

use num_complex::Complex64;

pub type C64 = Complex64;

pub trait Tally {
    fn add(&self, multiplies: u64);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoTally;

impl Tally for NoTally {
    #[inline(always)]
    fn add(&self, _: u64) {}
}

/// Counts scalar multiplications (and divisions) executed by instrumented loops.
#[derive(Debug, Default)]
pub struct MulCounter(Cell<u64>);

impl MulCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.get()
    }
}

impl Tally for MulCounter {
    #[inline]
    fn add(&self, multiplies: u64) {
        self.0.set(self.0.get() + multiplies);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[C64], out: &mut [C64], tally: &impl Tally) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = C64::new(0.0, 0.0);
            for (a, xv) in row.iter().zip(x) {
                acc += xv * *a;
            }
            *o = acc;
        }
        tally.add((self.rows * self.cols) as u64);
    }

    pub fn mul_vec(&self, x: &[C64], tally: &impl Tally) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        self.mul_vec_into(x, &mut out, tally);
        out
    }

    /// `out = selfᵀ * x`
    pub fn tr_mul_vec_into(&self, x: &[C64], out: &mut [C64], tally: &impl Tally) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for (row, xv) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += xv * *a;
            }
        }
        tally.add((self.rows * self.cols) as u64);
    }

    pub fn tr_mul_vec(&self, x: &[C64], tally: &impl Tally) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        self.tr_mul_vec_into(x, &mut out, tally);
        out
    }

    pub fn transpose_complex(&self) -> ComplexMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(C64::new(self.get(r, c), 0.0));
            }
        }
        ComplexMatrix::from_row_major(self.cols, self.rows, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec_into(&self, x: &[C64], out: &mut [C64], tally: &impl Tally) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = C64::new(0.0, 0.0);
            for (a, xv) in row.iter().zip(x) {
                acc += a * xv;
            }
            *o = acc;
        }
        tally.add((self.rows * self.cols) as u64);
    }

    pub fn mul_vec(&self, x: &[C64], tally: &impl Tally) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        self.mul_vec_into(x, &mut out, tally);
        out
    }

    /// `out += selfᴴ * x`
    pub fn adj_mul_vec_acc(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (row, xv) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * xv;
            }
        }
    }

    /// `self += u vᴴ`
    pub fn add_outer_conj(&mut self, u: &[C64], v: &[C64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (row, uv) in self.data.chunks_exact_mut(self.cols).zip(u) {
            for (e, vv) in row.iter_mut().zip(v) {
                *e += uv * vv.conj();
            }
        }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c).conj());
            }
        }
        ComplexMatrix::from_row_major(self.cols, self.rows, data)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_transpose() {
        let a = RealMatrix::from_row_major(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let x = vec![C64::new(1.0, 1.0), C64::new(0.0, -2.0), C64::new(3.0, 0.0)];
        let bt = a.transpose_complex();
        let y = [C64::new(0.5, -1.0), C64::new(2.0, 0.25)];
        let via_real = a.tr_mul_vec(&y, &NoTally);
        let via_cplx = bt.mul_vec(&y, &NoTally);
        for (p, q) in via_real.iter().zip(&via_cplx) {
            assert!((p - q).norm() < 1e-15);
        }
        let counter = MulCounter::new();
        let ax = a.mul_vec(&x, &counter);
        assert_eq!(counter.get(), 6);
        assert!((ax[0] - C64::new(2.5, 5.0)).norm() < 1e-15);
    }

    #[test]
    fn adjoint_product_and_outer() {
        let b = ComplexMatrix::from_row_major(
            2,
            2,
            vec![
                C64::new(1.0, 2.0),
                C64::new(0.0, 1.0),
                C64::new(-1.0, 0.0),
                C64::new(2.0, -1.0),
            ],
        );
        let x = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let mut out = zeros(2);
        b.adj_mul_vec_acc(&x, &mut out);
        let expect = b.adjoint().mul_vec(&x, &NoTally);
        assert!((out[0] - expect[0]).norm() < 1e-15 && (out[1] - expect[1]).norm() < 1e-15);

        let mut z = ComplexMatrix::zeros(2, 2);
        z.add_outer_conj(&x, &x);
        assert_eq!(z.get(0, 1), C64::new(0.0, -1.0));
    }
}
