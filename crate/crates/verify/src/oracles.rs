//! Reference computations written without the production code paths: LU
//! determinants and inverses instead of Cholesky, explicit loops instead of
//! the closed forms, brute force instead of clever search.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rsma_core::linalg::{CMat, C64};
use rsma_core::rates::PrecoderSet;

pub fn lu_det(a: &CMat) -> C64 {
    a.clone().lu().determinant()
}

pub fn lu_inverse(a: &CMat) -> CMat {
    a.clone()
        .lu()
        .try_inverse()
        .expect("oracle inverse of a singular matrix")
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

fn gram(x: &CMat) -> CMat {
    x * x.adjoint()
}

/// `log2 det(S + Z) / det(Z)` through LU determinants.
fn rate_bits(signal_cov: &CMat, interference_cov: &CMat) -> f64 {
    let num = lu_det(&(signal_cov + interference_cov));
    let den = lu_det(interference_cov);
    (num / den).re.log2()
}

/// `(common, private)` per-user rates in bits from received covariances.
pub fn covariance_rates(h: &[CMat], p: &PrecoderSet, sigma_n2: f64) -> (Vec<f64>, Vec<f64>) {
    let n = p.common.ncols();
    let mut common = Vec::new();
    let mut private = Vec::new();
    for (k, hk) in h.iter().enumerate() {
        let r = |x: &CMat| gram(&(hk.adjoint() * x));
        let mut others = eye(n) * C64::new(sigma_n2, 0.0);
        for (j, pj) in p.private.iter().enumerate() {
            if j != k {
                others += r(pj);
            }
        }
        let own = r(&p.private[k]);
        common.push(rate_bits(&r(&p.common), &(&others + &own)).max(0.0));
        private.push(rate_bits(&own, &others).max(0.0));
    }
    (common, private)
}

/// Sum rate `min_k R_c,k + Σ_k R_p,k` from [`covariance_rates`].
pub fn covariance_sum_rate(h: &[CMat], p: &PrecoderSet, sigma_n2: f64) -> f64 {
    let (c, pr) = covariance_rates(h, p, sigma_n2);
    c.iter().copied().fold(f64::INFINITY, f64::min) + pr.iter().sum::<f64>()
}

/// `I + a^H Z^{-1} a` for user `k` with the error term written out as
/// `diag{Theta diag^{-1}{X}}` entry by entry.
pub fn generalized_sinr_plus_identity(
    h_hat_k: &CMat,
    sigma_e2_k: f64,
    p: &PrecoderSet,
    k: usize,
    sigma_n2: f64,
) -> (CMat, CMat) {
    let n = p.common.ncols();
    let m = p.common.nrows();
    let hh = h_hat_k.adjoint();
    let mut private_cov = CMat::zeros(m, m);
    for pj in &p.private {
        private_cov += gram(pj);
    }
    let full_cov = &private_cov + gram(&p.common);
    let error = |x: &CMat| {
        let mut e = CMat::zeros(n, n);
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..m {
                acc += x[(r, r)] * sigma_e2_k;
            }
            e[(i, i)] = acc;
        }
        e
    };
    let noise = eye(n) * C64::new(sigma_n2, 0.0);
    let mut z_c = &noise + error(&full_cov);
    let mut z_p = &noise + error(&private_cov);
    for (j, pj) in p.private.iter().enumerate() {
        let r = gram(&(&hh * pj));
        if j != k {
            z_p += &r;
        }
        z_c += r;
    }
    let a_c = &hh * &p.common;
    let a_p = &hh * &p.private[k];
    (
        eye(n) + a_c.adjoint() * lu_inverse(&z_c) * &a_c,
        eye(n) + a_p.adjoint() * lu_inverse(&z_p) * &a_p,
    )
}

/// Complex matrix with independent circular entries of the given variances.
pub fn sample_with_variances<R: Rng + ?Sized>(variances: &DMatrix<f64>, rng: &mut R) -> CMat {
    CMat::from_fn(variances.nrows(), variances.ncols(), |i, j| {
        let s = (variances[(i, j)] / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

/// Monte Carlo mean and standard error (real and imaginary separately) of `Y^H X Y`.
pub fn monte_carlo_quadratic<R: Rng + ?Sized>(
    variances: &DMatrix<f64>,
    x: &CMat,
    draws: usize,
    rng: &mut R,
) -> (CMat, DMatrix<f64>, DMatrix<f64>) {
    let n = variances.ncols();
    let mut sum = CMat::zeros(n, n);
    let mut sq_re = DMatrix::<f64>::zeros(n, n);
    let mut sq_im = DMatrix::<f64>::zeros(n, n);
    for _ in 0..draws {
        let y = sample_with_variances(variances, rng);
        let s = y.adjoint() * x * &y;
        for i in 0..n {
            for j in 0..n {
                sq_re[(i, j)] += s[(i, j)].re * s[(i, j)].re;
                sq_im[(i, j)] += s[(i, j)].im * s[(i, j)].im;
            }
        }
        sum += s;
    }
    let d = draws as f64;
    let mean = sum / C64::new(d, 0.0);
    let se = |sq: &DMatrix<f64>, part: &dyn Fn(C64) -> f64| {
        DMatrix::from_fn(n, n, |i, j| {
            let mu = part(mean[(i, j)]);
            ((sq[(i, j)] / d - mu * mu).max(0.0) * d / (d - 1.0) / d).sqrt()
        })
    };
    let se_re = se(&sq_re, &|z| z.re);
    let se_im = se(&sq_im, &|z| z.im);
    (mean, se_re, se_im)
}

/// Chordal distance from singular values: `N - Σ σ_i(X^H C)^2`.
pub fn chordal_distance_svd(x: &CMat, c: &CMat) -> f64 {
    let s = (x.adjoint() * c).singular_values();
    x.ncols() as f64 - s.iter().map(|v| v * v).sum::<f64>()
}

/// First index of the minimum chordal distance, scanning every codeword.
pub fn brute_force_quantize(h: &CMat, codebook: &[CMat]) -> usize {
    let n = h.ncols();
    let svd = h.clone().svd(true, false);
    let u = svd.u.unwrap();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let basis = CMat::from_fn(h.nrows(), n, |r, c| u[(r, idx[c])]);
    let mut best = (f64::INFINITY, 0);
    for (i, c) in codebook.iter().enumerate() {
        let d = chordal_distance_svd(&basis, c);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// `#{s <= x} / N` by counting after a sort.
pub fn sorted_rank_cdf(samples: &[f64], x: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().take_while(|&&v| v <= x).count() as f64 / s.len() as f64
}

/// Plain WMMSE for the MIMO broadcast channel with perfect CSIT, using the
/// closed-form multiplier and power normalization of the private update.
/// Returns the private precoders after `iters` iterations.
pub fn plain_wmmse(h: &[CMat], init: &[CMat], rho: f64, sigma_n2: f64, iters: usize) -> Vec<CMat> {
    let k = h.len();
    let m = h[0].nrows();
    let n = h[0].ncols();
    let mut v = init.to_vec();
    for _ in 0..iters {
        let mut filters = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for i in 0..k {
            let mut cov = eye(n) * C64::new(sigma_n2, 0.0);
            for vj in &v {
                cov += gram(&(h[i].adjoint() * vj));
            }
            let a = h[i].adjoint() * &v[i];
            let u = lu_inverse(&cov) * &a;
            let e = eye(n) - u.adjoint() * &a;
            filters.push(u);
            weights.push(lu_inverse(&e));
        }
        let mut b = CMat::zeros(m, m);
        let mut trace = 0.0;
        for i in 0..k {
            let hu = &h[i] * &filters[i];
            b += &hu * &weights[i] * hu.adjoint();
            trace += (&filters[i] * &weights[i] * filters[i].adjoint()).trace().re;
        }
        let mu = sigma_n2 * trace / rho;
        let inv = lu_inverse(&(b + eye(m) * C64::new(mu, 0.0)));
        let raw: Vec<CMat> = (0..k).map(|i| &inv * &h[i] * &filters[i] * &weights[i]).collect();
        let total: f64 = raw.iter().map(|x| x.norm_squared()).sum();
        let scale = C64::new((rho / total).sqrt(), 0.0);
        v = raw.into_iter().map(|x| x * scale).collect();
    }
    v
}

/// Five-point central-difference gradient over the real and imaginary parts of every
/// entry of the common and private precoders, in that order.
pub fn precoder_gradient(p: &PrecoderSet, step: f64, f: impl Fn(&PrecoderSet) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let blocks = 1 + p.private.len();
    for b in 0..blocks {
        let len = p.common.len();
        for i in 0..len {
            for dir in [C64::new(step, 0.0), C64::new(0.0, step)] {
                let at = |mult: f64| {
                    let mut q = p.clone();
                    let target = if b == 0 { &mut q.common } else { &mut q.private[b - 1] };
                    target[i] += dir * mult;
                    f(&q)
                };
                out.push((at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * step));
            }
        }
    }
    out
}

/// Norm of the gradient `g` (laid out as [`precoder_gradient`]) projected onto
/// the tangent space of the sphere through the selected precoder blocks
/// (block 0 is the common precoder), and the norm of the unprojected part.
pub fn tangent_gradient(p: &PrecoderSet, g: &[f64], blocks: std::ops::Range<usize>) -> (f64, f64) {
    let per = 2 * p.common.len();
    let mut x = Vec::with_capacity(g.len());
    for block in std::iter::once(&p.common).chain(&p.private) {
        for z in block.iter() {
            x.push(z.re);
            x.push(z.im);
        }
    }
    let range = blocks.start * per..blocks.end * per;
    let (x, g) = (&x[range.clone()], &g[range]);
    let along = g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
    let tangent = g
        .iter()
        .zip(x)
        .map(|(a, b)| (a - along * b).powi(2))
        .sum::<f64>()
        .sqrt();
    (tangent, g.iter().map(|v| v * v).sum::<f64>().sqrt())
}
