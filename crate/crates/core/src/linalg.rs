//! Small dense complex linear-algebra helpers shared by every module.
//!
//! Hermitian quantities are symmetrized as `(A + A^H) / 2` before any
//! factorization; floating-point drift otherwise breaks positive-definiteness
//! checks on long product chains.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Relative tolerance on the imaginary residue of quantities that are real by construction.
pub const IMAG_TOL: f64 = 1e-10;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// `max |A - A^H|` over all entries.
pub fn hermitian_residual(a: &CMat) -> f64 {
    let d = a - a.adjoint();
    max_abs(&d)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `tr(A A^H)`.
pub fn power(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Lower-triangular factor `L` with `A = L L^H` and a real positive diagonal.
#[derive(Debug, Clone)]
pub struct HermitianCholesky {
    l: CMat,
}

impl HermitianCholesky {
    pub fn l(&self) -> &CMat {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.nrows()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMat) -> CMat {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            // L y = b
            for i in 0..n {
                let mut acc = x[(i, c)];
                for j in 0..i {
                    acc -= self.l[(i, j)] * x[(j, c)];
                }
                x[(i, c)] = acc / self.l[(i, i)].re;
            }
            // L^H x = y
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for j in i + 1..n {
                    acc -= self.l[(j, i)].conj() * x[(j, c)];
                }
                x[(i, c)] = acc / self.l[(i, i)].re;
            }
        }
        x
    }

    pub fn inverse(&self) -> CMat {
        hermitian_part(&self.solve(&identity(self.l.nrows())))
    }
}

/// Cholesky factorization of the Hermitian part of `a`; fails unless every
/// pivot is strictly positive.
pub fn cholesky(a: &CMat, what: &str) -> Result<HermitianCholesky> {
    if !a.is_square() {
        return Err(Error::Contract(format!("{what}: matrix is not square")));
    }
    let a = hermitian_part(a);
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::Numerical(format!("{what}: matrix is not positive definite")));
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(HermitianCholesky { l })
}

/// `log |A|` of a Hermitian positive-definite matrix.
pub fn log_det_hpd(a: &CMat, what: &str) -> Result<f64> {
    Ok(cholesky(a, what)?.log_det())
}

pub fn inverse_hpd(a: &CMat, what: &str) -> Result<CMat> {
    Ok(cholesky(a, what)?.inverse())
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    Ok(cholesky(a, what)?.solve(b))
}

/// Real part of a quantity that must be real, after checking the imaginary residue.
pub fn real_value(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * (1.0 + z.re.abs()) {
        return Err(Error::Numerical(format!(
            "{what}: imaginary residue {:.3e} on real part {:.6e}",
            z.im, z.re
        )));
    }
    Ok(z.re)
}

pub fn real_trace(a: &CMat, what: &str) -> Result<f64> {
    real_value(a.trace(), what)
}

/// `tr(A^H B)`, computed without forming the product.
pub fn inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Horizontal concatenation `[A_1, ..., A_K]`.
pub fn hstack(blocks: &[CMat]) -> CMat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Splits the columns of `a` into consecutive blocks of `width`.
pub fn split_columns(a: &CMat, width: usize) -> Vec<CMat> {
    (0..a.ncols() / width)
        .map(|k| a.columns(k * width, width).into_owned())
        .collect()
}

/// Circularly-symmetric complex Gaussian matrix; real and imaginary parts are
/// i.i.d. `N(0, variance / 2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMat {
    let s = (variance / 2.0).sqrt();
    // Column-major fill order keeps draws reproducible across nalgebra versions.
    let mut m = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = C64::new(s * re, s * im);
        }
    }
    m
}

/// Numerically stable `log Σ exp(x_k)`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of `x`, evaluated in the log domain.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(x);
    x.iter().map(|v| (v - lse).exp()).collect()
}
