//! Rate and MSE algebra for one-layer rate splitting.
//!
//! Objectives are in nats; reported rates are in bits/s/Hz.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, hermitian_part, hstack, identity, inverse_hpd, log_det_hpd, log_sum_exp, power, real_trace, softmax,
    solve_hpd, CMat, C64,
};

/// Common precoder `Pc` and private precoders `P_1..P_K` under total power `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub common: CMat,
    pub private: Vec<CMat>,
    pub rho: f64,
}

impl PrecoderSet {
    pub fn new(common: CMat, private: Vec<CMat>, rho: f64) -> Result<Self> {
        if private.is_empty() {
            return Err(Error::Contract("no private precoders".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::parameter(
                "rho",
                format!("power budget must be positive, got {rho}"),
            ));
        }
        if private.iter().any(|p| p.shape() != common.shape()) {
            return Err(Error::Contract("precoder shapes differ".into()));
        }
        Ok(PrecoderSet { common, private, rho })
    }

    pub fn zeros(m: usize, n: usize, k: usize, rho: f64) -> Self {
        PrecoderSet {
            common: CMat::zeros(m, n),
            private: vec![CMat::zeros(m, n); k],
            rho,
        }
    }

    /// `(M, N, K)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (m, n) = self.common.shape();
        (m, n, self.private.len())
    }

    pub fn common_power(&self) -> f64 {
        power(&self.common)
    }

    pub fn private_power(&self) -> f64 {
        self.private.iter().map(power).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.common_power() + self.private_power()
    }

    /// `|tr(P P^H) - rho| / rho`.
    pub fn power_error(&self) -> f64 {
        (self.total_power() - self.rho).abs() / self.rho
    }

    /// `[P_1, ..., P_K]`.
    pub fn stacked_private(&self) -> CMat {
        hstack(&self.private)
    }
}

/// Instantaneous rates in bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub common: Vec<f64>,
    pub private: Vec<f64>,
    pub sum_rate: f64,
}

impl Rates {
    pub fn min_common(&self) -> f64 {
        self.common.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check_shapes(h: &[CMat], p: &PrecoderSet) -> Result<()> {
    let (m, n, k) = p.dims();
    if h.len() != k {
        return Err(Error::Contract(format!(
            "{} channels for {k} private precoders",
            h.len()
        )));
    }
    if let Some(bad) = h.iter().find(|h| h.shape() != (m, n)) {
        return Err(Error::Contract(format!(
            "channel shape {:?}, precoders are {m}x{n}",
            bad.shape()
        )));
    }
    Ok(())
}

/// `log |I + X^H Z^{-1} X|` for Hermitian positive-definite `Z`.
fn log_det_sinr(x: &CMat, z: &CMat, what: &str) -> Result<f64> {
    let zx = solve_hpd(z, x, what)?;
    let sinr = x.adjoint() * zx;
    log_det_hpd(&(identity(x.ncols()) + hermitian_part(&sinr)), what)
}

/// Common and private rates of every user over the true channels, with the
/// common rate limited by the weakest user.
pub fn instantaneous_rates(h: &[CMat], p: &PrecoderSet, sigma_n2: f64) -> Result<Rates> {
    check_shapes(h, p)?;
    if !(sigma_n2 > 0.0) {
        return Err(Error::parameter("sigma_n2", "noise variance must be positive"));
    }
    let n = p.common.ncols();
    let mut common = Vec::with_capacity(h.len());
    let mut private = Vec::with_capacity(h.len());
    for (k, hk) in h.iter().enumerate() {
        let hh = hk.adjoint();
        let received: Vec<CMat> = p.private.iter().map(|pj| &hh * pj).collect();
        let noise = identity(n).scale(sigma_n2);
        let mut others = noise.clone();
        for (j, r) in received.iter().enumerate() {
            if j != k {
                others += r * r.adjoint();
            }
        }
        let all_private = &others + &received[k] * received[k].adjoint();
        let rc = log_det_sinr(&(&hh * &p.common), &all_private, "common interference")?;
        let rp = log_det_sinr(&received[k], &others, "private interference")?;
        common.push((rc / LN_2).max(0.0));
        private.push((rp / LN_2).max(0.0));
    }
    let min_common = common.iter().copied().fold(f64::INFINITY, f64::min);
    let sum_rate = min_common + private.iter().sum::<f64>();
    Ok(Rates {
        common,
        private,
        sum_rate,
    })
}

/// `E[Y^H X Y] = diag{Theta diag^{-1}{X}}` for a random `M x N` matrix `Y` with
/// independent zero-mean entries of variance `variances[(m, n)]`.
pub fn expectation_quadratic(variances: &DMatrix<f64>, x: &CMat) -> Result<CMat> {
    let m = variances.nrows();
    if x.shape() != (m, m) {
        return Err(Error::Contract(format!(
            "X is {:?}, variance pattern has {m} rows",
            x.shape()
        )));
    }
    if variances.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Contract("negative variance".into()));
    }
    let theta = variances.transpose().map(|v| C64::new(v, 0.0));
    let d = theta * x.diagonal();
    Ok(CMat::from_diagonal(&d))
}

/// Equal-variance case: `sigma2 tr(X) I_N`.
pub fn expectation_quadratic_uniform(sigma2: f64, x: &CMat, n: usize) -> CMat {
    identity(n) * (x.trace() * sigma2)
}

/// Conditional-expectation receive filters and MMSE matrices of one user.
#[derive(Debug, Clone)]
pub struct MseBundle {
    /// Covariance seen when decoding the common stream.
    pub f: CMat,
    /// Covariance seen when decoding the private stream after SIC.
    pub g: CMat,
    pub m_common: CMat,
    pub m_private: CMat,
    pub d_common: CMat,
    pub d_private: CMat,
}

/// MMSE filters and matrices of every user for precoders `p` designed on `h_hat`.
pub fn mse_bundles(h_hat: &[CMat], sigma_e2: &[f64], p: &PrecoderSet, sigma_n2: f64) -> Result<Vec<MseBundle>> {
    check_shapes(h_hat, p)?;
    if sigma_e2.len() != h_hat.len() {
        return Err(Error::Contract("one error variance per user required".into()));
    }
    let n = p.common.ncols();
    let pp = p.stacked_private();
    let total = p.total_power();
    let private_power = p.private_power();
    h_hat
        .iter()
        .zip(sigma_e2)
        .enumerate()
        .map(|(k, (hk, &s2))| {
            let hh = hk.adjoint();
            let q = &hh * &pp;
            let interference = &q * q.adjoint();
            let a_c = &hh * &p.common;
            let a_p = &hh * &p.private[k];
            let f = hermitian_part(&(&interference + &a_c * a_c.adjoint() + identity(n).scale(s2 * total + sigma_n2)));
            let g = hermitian_part(&(&interference + identity(n).scale(s2 * private_power + sigma_n2)));
            let f_chol = cholesky(&f, "F_k")?;
            let g_chol = cholesky(&g, "G_k")?;
            let fa = f_chol.solve(&a_c);
            let ga = g_chol.solve(&a_p);
            Ok(MseBundle {
                m_common: hermitian_part(&(identity(n) - a_c.adjoint() * &fa)),
                m_private: hermitian_part(&(identity(n) - a_p.adjoint() * &ga)),
                d_common: fa.adjoint(),
                d_private: ga.adjoint(),
                f,
                g,
            })
        })
        .collect()
}

/// Conditional-expectation generalized SINR matrices `(common, private)` of
/// user `k`, with the CSIT-error terms resolved by [`expectation_quadratic`].
pub fn conditional_sinr(
    h_hat_k: &CMat,
    sigma_e2_k: f64,
    p: &PrecoderSet,
    k: usize,
    sigma_n2: f64,
) -> Result<(CMat, CMat)> {
    let (m, n, _) = p.dims();
    let hh = h_hat_k.adjoint();
    let pp = p.stacked_private();
    let variances = DMatrix::from_element(m, n, sigma_e2_k);
    let private_cov = &pp * pp.adjoint();
    let full_cov = &private_cov + &p.common * p.common.adjoint();
    let noise = identity(n).scale(sigma_n2);

    let j_c = &hh * &private_cov * h_hat_k;
    let z_c = j_c + expectation_quadratic(&variances, &full_cov)? + &noise;
    let mut j_p = CMat::zeros(n, n);
    for (j, pj) in p.private.iter().enumerate() {
        if j != k {
            let r = &hh * pj;
            j_p += &r * r.adjoint();
        }
    }
    let z_p = j_p + expectation_quadratic(&variances, &private_cov)? + &noise;

    let a_c = &hh * &p.common;
    let a_p = &hh * &p.private[k];
    let sinr_c = a_c.adjoint() * solve_hpd(&z_c, &a_c, "common interference")?;
    let sinr_p = a_p.adjoint() * solve_hpd(&z_p, &a_p, "private interference")?;
    Ok((hermitian_part(&sinr_c), hermitian_part(&sinr_p)))
}

/// `log Σ_k |M_c,k| + Σ_k log |M_p,k|` from precomputed bundles.
pub fn objective_f1_from(bundles: &[MseBundle]) -> Result<f64> {
    let mut common = Vec::with_capacity(bundles.len());
    let mut private = 0.0;
    for b in bundles {
        common.push(log_det_hpd(&b.m_common, "common MMSE matrix")?);
        private += log_det_hpd(&b.m_private, "private MMSE matrix")?;
    }
    Ok(log_sum_exp(&common) + private)
}

/// Smoothed negative rate surrogate (nats); lower is better.
pub fn objective_f1(h_hat: &[CMat], sigma_e2: &[f64], p: &PrecoderSet, sigma_n2: f64) -> Result<f64> {
    objective_f1_from(&mse_bundles(h_hat, sigma_e2, p, sigma_n2)?)
}

/// Rate-equivalent MSE weights of one user.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub w_common: CMat,
    pub w_private: CMat,
    pub mu: f64,
}

/// `mu` is the softmax of the common log-determinants; `W_c = mu M_c^{-1}`,
/// `W_p = M_p^{-1}`.
pub fn weights(bundles: &[MseBundle]) -> Result<Vec<WeightBundle>> {
    let log_dets = bundles
        .iter()
        .map(|b| log_det_hpd(&b.m_common, "common MMSE matrix"))
        .collect::<Result<Vec<_>>>()?;
    let mu = softmax(&log_dets);
    bundles
        .iter()
        .zip(mu)
        .map(|(b, mu)| {
            Ok(WeightBundle {
                w_common: inverse_hpd(&b.m_common, "common MMSE matrix")?.scale(mu),
                w_private: inverse_hpd(&b.m_private, "private MMSE matrix")?,
                mu,
            })
        })
        .collect()
}

/// Receive filters of every user.
#[derive(Debug, Clone)]
pub struct Filters {
    pub common: Vec<CMat>,
    pub private: Vec<CMat>,
}

impl Filters {
    pub fn from_bundles(bundles: &[MseBundle]) -> Self {
        Filters {
            common: bundles.iter().map(|b| b.d_common.clone()).collect(),
            private: bundles.iter().map(|b| b.d_private.clone()).collect(),
        }
    }
}

/// Conditional-expectation MSE matrices `(M_c,k, M_p,k)` at arbitrary filters.
pub fn mse_matrices(
    h_hat_k: &CMat,
    sigma_e2_k: f64,
    p: &PrecoderSet,
    k: usize,
    d_common: &CMat,
    d_private: &CMat,
    sigma_n2: f64,
) -> Result<(CMat, CMat)> {
    let (_, n, _) = p.dims();
    let hh = h_hat_k.adjoint();
    let pp = p.stacked_private();
    let private_cov = &pp * pp.adjoint();
    let full_cov = &private_cov + &p.common * p.common.adjoint();

    let mse = |d: &CMat, signal: &CMat, cov: &CMat| -> CMat {
        let cross = signal.adjoint() * h_hat_k * d.adjoint();
        let error_term = expectation_quadratic_uniform(sigma_e2_k, cov, n);
        let quad = d * (&hh * cov * h_hat_k + error_term + identity(n).scale(sigma_n2)) * d.adjoint();
        hermitian_part(&(identity(n) - &cross - cross.adjoint() + quad))
    };
    Ok((
        mse(d_common, &p.common, &full_cov),
        mse(d_private, &p.private[k], &private_cov),
    ))
}

/// Weighted MSE sum `Σ_k tr(W_c,k M_c,k + W_p,k M_p,k)`.
pub fn objective_f2(
    h_hat: &[CMat],
    sigma_e2: &[f64],
    p: &PrecoderSet,
    filters: &Filters,
    weights: &[WeightBundle],
    sigma_n2: f64,
) -> Result<f64> {
    check_shapes(h_hat, p)?;
    let k = h_hat.len();
    if filters.common.len() != k || filters.private.len() != k || weights.len() != k || sigma_e2.len() != k {
        return Err(Error::Contract(
            "filters, weights and variances need one entry per user".into(),
        ));
    }
    let mut total = 0.0;
    for (i, hk) in h_hat.iter().enumerate() {
        let (mc, mp) = mse_matrices(hk, sigma_e2[i], p, i, &filters.common[i], &filters.private[i], sigma_n2)?;
        total += real_trace(
            &(&weights[i].w_common * mc + &weights[i].w_private * mp),
            "weighted MSE",
        )?;
    }
    Ok(total)
}
