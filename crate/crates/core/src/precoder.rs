//! Robust rate-splitting precoder: block coordinate descent over private
//! precoders, common precoder and the private power fraction `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hstack, identity, inner, power, real_trace, real_value, solve_hpd, split_columns, CMat, C64};
use crate::rates::{mse_bundles, objective_f1_from, weights, PrecoderSet};

/// Power fraction above which a converged solution is snapped to pure SDMA.
pub const SDMA_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative objective change below which the loop stops.
    pub obj_tol: f64,
    /// Interval width at which bisection on `t` stops.
    pub bisect_tol: f64,
    /// `t` is confined to `[t_clamp, 1 - t_clamp]`.
    pub t_clamp: f64,
    pub track_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            obj_tol: 1e-4,
            bisect_tol: 1e-10,
            t_clamp: 1e-6,
            track_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::parameter("max_iters", "must be at least 1"));
        }
        if !(self.obj_tol > 0.0 && self.obj_tol < 0.1) {
            return Err(Error::parameter(
                "obj_tol",
                format!("{} outside (0, 0.1)", self.obj_tol),
            ));
        }
        if !(self.bisect_tol > 0.0 && self.bisect_tol < 0.1) {
            return Err(Error::parameter(
                "bisect_tol",
                format!("{} outside (0, 0.1)", self.bisect_tol),
            ));
        }
        if !(self.t_clamp > 0.0 && self.t_clamp <= 1e-3) {
            return Err(Error::parameter(
                "t_clamp",
                format!("{} outside (0, 1e-3]", self.t_clamp),
            ));
        }
        Ok(())
    }
}

/// Which side of the admissible `t` interval a power split ended on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Derivative already non-negative at `t_clamp`.
    Lower,
    /// Derivative still non-positive at `1 - t_clamp`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub t: f64,
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub precoders: PrecoderSet,
    pub t: f64,
    /// Objective after every iteration (nats).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub boundary_hits: usize,
    /// The common stream was dropped because the solution went all-private.
    pub sdma: bool,
}

fn check_inputs(h_hat: &[CMat], sigma_e2: &[f64], rho: f64, sigma_n2: f64) -> Result<(usize, usize, usize)> {
    let Some(first) = h_hat.first() else {
        return Err(Error::parameter("k", "need at least one user"));
    };
    let (m, n) = first.shape();
    if n == 0 || m < n {
        return Err(Error::parameter("m", format!("need M >= N >= 1, got {m}x{n}")));
    }
    if h_hat.iter().any(|h| h.shape() != (m, n)) {
        return Err(Error::Contract("channel shapes differ".into()));
    }
    if sigma_e2.len() != h_hat.len() {
        return Err(Error::Contract("one error variance per user required".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::parameter("rho", "power budget must be positive"));
    }
    if !(sigma_n2 > 0.0) {
        return Err(Error::parameter("sigma_n2", "noise variance must be positive"));
    }
    Ok((m, n, h_hat.len()))
}

/// Initial point: the common precoder spans the dominant left singular vectors
/// of `[H_1, ..., H_K]` with power `rho (1 - t)`, private precoders are MRT with
/// equal power, and `t = min(1, 1 / (rho sigma_e2))`.
pub fn initialize(h_hat: &[CMat], rho: f64, sigma_e2: f64) -> Result<(PrecoderSet, f64)> {
    let (m, n, k) = check_inputs(h_hat, &vec![sigma_e2; h_hat.len()], rho, 1.0)?;
    if h_hat.iter().any(|h| power(h) == 0.0) {
        return Err(Error::Degenerate("all-zero channel estimate".into()));
    }
    let t = if sigma_e2 > 0.0 {
        (1.0 / (rho * sigma_e2)).min(1.0)
    } else {
        1.0
    };

    let svd = hstack(h_hat).svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut common = CMat::zeros(m, n);
    for (c, &i) in order.iter().take(n).enumerate() {
        common.set_column(c, &u.column(i));
    }
    let common_power = rho * (1.0 - t);
    common *= C64::new((common_power / power(&common)).sqrt(), 0.0);

    let per_user = rho * t / k as f64;
    let private = h_hat
        .iter()
        .map(|h| h * C64::new((per_user / power(h)).sqrt(), 0.0))
        .collect();
    Ok((PrecoderSet::new(common, private, rho)?, t))
}

/// `Σ_k H_k D_k^H W_k D_k H_k^H + (Σ_k s2_k tr(W_k D_k D_k^H)) I` and the
/// `Σ_k tr(W_k D_k D_k^H)` term.
fn quadratic_form(h_hat: &[CMat], sigma_e2: &[f64], d: &[CMat], w: &[CMat]) -> Result<(CMat, f64)> {
    let m = h_hat[0].nrows();
    let mut q = CMat::zeros(m, m);
    let mut omega = 0.0;
    let mut noise_trace = 0.0;
    for (((h, &s2), d), w) in h_hat.iter().zip(sigma_e2).zip(d).zip(w) {
        let hd = h * d.adjoint();
        q += &hd * w * hd.adjoint();
        let tr = real_trace(&(w * d * d.adjoint()), "tr(W D D^H)")?;
        omega += s2 * tr;
        noise_trace += tr;
    }
    Ok((q + identity(m).scale(omega), noise_trace))
}

/// Solution of the private-precoder subproblem.
#[derive(Debug, Clone)]
pub struct PrivateSolution {
    /// `sqrt(rho t) * normalized`, split per user.
    pub precoders: Vec<CMat>,
    /// `(B + lambda I)^{-1} V`.
    pub unnormalized: CMat,
    /// Unit-power direction `[P_1, ..., P_K] / ||.||_F`.
    pub normalized: CMat,
    pub v: CMat,
    pub b: CMat,
    pub lambda: f64,
}

/// Private precoders for fixed filters `d_p`, weights `w_p` and power fraction `t`.
#[allow(clippy::too_many_arguments)]
pub fn solve_p1(
    h_hat: &[CMat],
    sigma_e2: &[f64],
    d_p: &[CMat],
    w_p: &[CMat],
    rho: f64,
    t: f64,
    sigma_n2: f64,
) -> Result<PrivateSolution> {
    let (_, n, k) = check_inputs(h_hat, sigma_e2, rho, sigma_n2)?;
    if d_p.len() != k || w_p.len() != k {
        return Err(Error::Contract(
            "one private filter and weight per user required".into(),
        ));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Contract(format!("private power fraction {t} outside (0, 1]")));
    }
    let v = hstack(
        &h_hat
            .iter()
            .zip(d_p)
            .zip(w_p)
            .map(|((h, d), w)| h * d.adjoint() * w)
            .collect::<Vec<_>>(),
    );
    let (b, noise_trace) = quadratic_form(h_hat, sigma_e2, d_p, w_p)?;
    let lambda = sigma_n2 * noise_trace / (rho * t);
    if !(lambda > 0.0) {
        return Err(Error::Contract(format!(
            "private multiplier must be positive, got {lambda}"
        )));
    }
    let m = b.nrows();
    let unnormalized = solve_hpd(&(&b + identity(m).scale(lambda)), &v, "B + lambda1 I")?;
    let norm = power(&unnormalized).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("private precoder direction vanished".into()));
    }
    let normalized = unnormalized.unscale(norm);
    let precoders = split_columns(&normalized.scale((rho * t).sqrt()), n);
    Ok(PrivateSolution {
        precoders,
        unnormalized,
        normalized,
        v,
        b,
        lambda,
    })
}

/// Solution of the common-precoder subproblem.
#[derive(Debug, Clone)]
pub struct CommonSolution {
    /// `sqrt(rho (1 - t)) * normalized`, or zero in the SDMA fallback.
    pub precoder: CMat,
    /// Unit-power direction; zero when no common direction exists.
    pub normalized: CMat,
    pub u: CMat,
    pub a: CMat,
    /// `None` in the SDMA fallback.
    pub lambda: Option<f64>,
}

/// Common precoder for fixed filters `d_c`, weights `w_c`, private precoders
/// `pp = [P_1, ..., P_K]` and power fraction `t`.
///
/// For `t >= 1 - t_clamp` the common precoder is zero; the returned direction
/// is then the `lambda -> inf` limit `U / ||U||_F`.
#[allow(clippy::too_many_arguments)]
pub fn solve_p2(
    h_hat: &[CMat],
    sigma_e2: &[f64],
    d_c: &[CMat],
    w_c: &[CMat],
    pp: &CMat,
    rho: f64,
    t: f64,
    sigma_n2: f64,
    t_clamp: f64,
) -> Result<CommonSolution> {
    let (m, n, k) = check_inputs(h_hat, sigma_e2, rho, sigma_n2)?;
    if d_c.len() != k || w_c.len() != k {
        return Err(Error::Contract("one common filter and weight per user required".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Contract(format!("private power fraction {t} outside (0, 1]")));
    }
    let mut u = CMat::zeros(m, n);
    for ((h, d), w) in h_hat.iter().zip(d_c).zip(w_c) {
        u += h * d.adjoint() * w;
    }
    let (a, noise_trace) = quadratic_form(h_hat, sigma_e2, d_c, w_c)?;
    let u_norm = power(&u).sqrt();

    if t >= 1.0 - t_clamp {
        let normalized = if u_norm > 0.0 {
            u.unscale(u_norm)
        } else {
            CMat::zeros(m, n)
        };
        return Ok(CommonSolution {
            precoder: CMat::zeros(m, n),
            normalized,
            u,
            a,
            lambda: None,
        });
    }
    let interference = real_value(inner(pp, &(&a * pp)), "tr(A Pp Pp^H)")?;
    let lambda = (sigma_n2 * noise_trace + interference) / (rho * (1.0 - t));
    let unnormalized = solve_hpd(&(&a + identity(m).scale(lambda)), &u, "A + lambda2 I")?;
    let norm = power(&unnormalized).sqrt();
    let normalized = if norm > 0.0 {
        unnormalized.unscale(norm)
    } else {
        CMat::zeros(m, n)
    };
    Ok(CommonSolution {
        precoder: normalized.scale((rho * (1.0 - t)).sqrt()),
        normalized,
        u,
        a,
        lambda: Some(lambda),
    })
}

/// Derivative of the weighted MSE with respect to the private power fraction,
/// for fixed unit-power precoder directions:
///
/// `sqrt(rho/(1-t)) c - sqrt(rho/t) p + rho (q_p - q_c)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplitDerivative {
    pub rho: f64,
    /// `Re tr(U^H Pc~)`
    pub common_gain: f64,
    /// `Re tr(V^H Pp~)`
    pub private_gain: f64,
    /// `Re tr((A + B) Pp~ Pp~^H)`
    pub private_quad: f64,
    /// `Re tr(A Pc~ Pc~^H)`
    pub common_quad: f64,
}

impl PowerSplitDerivative {
    pub fn new(u: &CMat, v: &CMat, a: &CMat, b: &CMat, pc: &CMat, pp: &CMat, rho: f64) -> Result<Self> {
        let ab = a + b;
        Ok(PowerSplitDerivative {
            rho,
            common_gain: real_value(inner(u, pc), "tr(U^H Pc)")?,
            private_gain: real_value(inner(v, pp), "tr(V^H Pp)")?,
            private_quad: real_value(inner(pp, &(ab * pp)), "tr((A+B) Pp Pp^H)")?,
            common_quad: real_value(inner(pc, &(a * pc)), "tr(A Pc Pc^H)")?,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let rho = self.rho;
        (rho / (1.0 - t)).sqrt() * self.common_gain - (rho / t).sqrt() * self.private_gain
            + rho * (self.private_quad - self.common_quad)
    }
}

/// Unique root of the power-split derivative in `[t_clamp, 1 - t_clamp]`, by bisection.
pub fn solve_p3(derivative: &PowerSplitDerivative, cfg: &SolverConfig) -> Result<PowerSplit> {
    if !(derivative.common_gain > 0.0 && derivative.private_gain > 0.0) {
        return Err(Error::Contract(format!(
            "power split needs positive gains, got common {:.3e}, private {:.3e}",
            derivative.common_gain, derivative.private_gain
        )));
    }
    let (mut lo, mut hi) = (cfg.t_clamp, 1.0 - cfg.t_clamp);
    if derivative.eval(lo) >= 0.0 {
        return Ok(PowerSplit {
            t: lo,
            boundary: Some(Boundary::Lower),
        });
    }
    if derivative.eval(hi) <= 0.0 {
        return Ok(PowerSplit {
            t: hi,
            boundary: Some(Boundary::Upper),
        });
    }
    while hi - lo > cfg.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if derivative.eval(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PowerSplit {
        t: 0.5 * (lo + hi),
        boundary: None,
    })
}

/// Which precoder blocks the loop optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Common and private precoders plus the power split.
    RateSplitting,
    /// Private precoders only, full power (`Pc = 0`, `t = 1`).
    PrivateOnly,
}

/// Runs the robust rate-splitting design from the standard initial point.
pub fn run(h_hat: &[CMat], sigma_e2: &[f64], rho: f64, sigma_n2: f64, cfg: &SolverConfig) -> Result<SolverState> {
    check_inputs(h_hat, sigma_e2, rho, sigma_n2)?;
    let representative = sigma_e2.iter().copied().fold(0.0, f64::max);
    let (p, t) = initialize(h_hat, rho, representative)?;
    run_from(h_hat, sigma_e2, sigma_n2, cfg, p, t, Mode::RateSplitting)
}

/// Runs the loop from an explicit starting point.
pub fn run_from(
    h_hat: &[CMat],
    sigma_e2: &[f64],
    sigma_n2: f64,
    cfg: &SolverConfig,
    init: PrecoderSet,
    t0: f64,
    mode: Mode,
) -> Result<SolverState> {
    let rho = init.rho;
    let (_, n, _) = check_inputs(h_hat, sigma_e2, rho, sigma_n2)?;
    cfg.validate()?;
    if !(t0 > 0.0 && t0 <= 1.0) {
        return Err(Error::Contract(format!("initial power fraction {t0} outside (0, 1]")));
    }
    let mut p = init;
    let mut t = if mode == Mode::PrivateOnly { 1.0 } else { t0 };
    let mut trace = Vec::new();
    let mut previous: Option<f64> = None;
    let mut state = SolverState {
        precoders: p.clone(),
        t,
        objective_trace: Vec::new(),
        iterations: 0,
        converged: false,
        boundary_hits: 0,
        sdma: false,
    };
    let mut last_direction = p.stacked_private();

    for iter in 1..=cfg.max_iters {
        let step = (|| -> Result<(PrecoderSet, f64, Option<Boundary>, CMat)> {
            let bundles = mse_bundles(h_hat, sigma_e2, &p, sigma_n2)?;
            let w = weights(&bundles)?;
            let d_p: Vec<_> = bundles.iter().map(|b| b.d_private.clone()).collect();
            let w_p: Vec<_> = w.iter().map(|w| w.w_private.clone()).collect();
            let private = solve_p1(h_hat, sigma_e2, &d_p, &w_p, rho, t, sigma_n2)?;

            if mode == Mode::PrivateOnly {
                let next = PrecoderSet::new(CMat::zeros(p.common.nrows(), n), private.precoders, rho)?;
                return Ok((next, 1.0, None, private.normalized));
            }

            let mid = PrecoderSet::new(p.common.clone(), private.precoders.clone(), rho)?;
            let bundles = mse_bundles(h_hat, sigma_e2, &mid, sigma_n2)?;
            let w = weights(&bundles)?;
            let d_c: Vec<_> = bundles.iter().map(|b| b.d_common.clone()).collect();
            let w_c: Vec<_> = w.iter().map(|w| w.w_common.clone()).collect();
            let pp = hstack(&private.precoders);
            let common = solve_p2(h_hat, sigma_e2, &d_c, &w_c, &pp, rho, t, sigma_n2, cfg.t_clamp)?;

            if power(&common.normalized) == 0.0 {
                // No common direction left to invest power in.
                let next = PrecoderSet::new(
                    CMat::zeros(p.common.nrows(), n),
                    split_columns(&private.normalized.scale(rho.sqrt()), n),
                    rho,
                )?;
                return Ok((next, 1.0, None, private.normalized));
            }
            let derivative = PowerSplitDerivative::new(
                &common.u,
                &private.v,
                &common.a,
                &private.b,
                &common.normalized,
                &private.normalized,
                rho,
            )?;
            let split = solve_p3(&derivative, cfg)?;
            let next = PrecoderSet::new(
                common.normalized.scale((rho * (1.0 - split.t)).sqrt()),
                split_columns(&private.normalized.scale((rho * split.t).sqrt()), n),
                rho,
            )?;
            Ok((next, split.t, split.boundary, private.normalized))
        })();
        let (next, next_t, boundary, direction) = step.map_err(|e| Error::Solver {
            iteration: iter,
            source: Box::new(e),
        })?;
        p = next;
        t = next_t;
        last_direction = direction;
        if boundary.is_some() {
            state.boundary_hits += 1;
        }
        let objective = objective_f1_from(&mse_bundles(h_hat, sigma_e2, &p, sigma_n2)?).map_err(|e| Error::Solver {
            iteration: iter,
            source: Box::new(e),
        })?;
        if cfg.track_trace {
            trace.push(objective);
        }
        state.iterations = iter;
        if let Some(prev) = previous {
            if (objective - prev).abs() <= cfg.obj_tol * prev.abs().max(1.0) {
                state.converged = true;
                break;
            }
        }
        previous = Some(objective);
    }

    if mode == Mode::RateSplitting && t > 1.0 - SDMA_THRESHOLD && t < 1.0 {
        p = PrecoderSet::new(
            CMat::zeros(p.common.nrows(), n),
            split_columns(&last_direction.scale(rho.sqrt()), n),
            rho,
        )?;
        t = 1.0;
    }
    state.sdma = mode == Mode::RateSplitting && t == 1.0;
    state.precoders = p;
    state.t = t;
    state.objective_trace = trace;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_estimation_channel;
    use crate::rates::{mse_matrices, Filters, MseBundle};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, s2: f64) -> (Vec<CMat>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = sample_estimation_channel(8, 2, 4, &[s2; 4], &mut rng).unwrap();
        (set.h_hat, set.sigma_e2)
    }

    fn split(bundles: &[MseBundle]) -> (Vec<CMat>, Vec<CMat>, Vec<CMat>, Vec<CMat>) {
        let w = weights(bundles).unwrap();
        (
            bundles.iter().map(|b| b.d_private.clone()).collect(),
            w.iter().map(|w| w.w_private.clone()).collect(),
            bundles.iter().map(|b| b.d_common.clone()).collect(),
            w.iter().map(|w| w.w_common.clone()).collect(),
        )
    }

    /// Central-difference gradient of `f` over the real and imaginary parts of `x`.
    fn fd_gradient(x: &CMat, f: impl Fn(&CMat) -> f64) -> f64 {
        let h = 1e-5;
        let mut sq = 0.0;
        for i in 0..x.len() {
            for dir in [C64::new(h, 0.0), C64::new(0.0, h)] {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += dir;
                b[i] -= dir;
                sq += ((f(&a) - f(&b)) / (2.0 * h)).powi(2);
            }
        }
        sq.sqrt()
    }

    #[test]
    fn perfect_csit_starts_from_mrt() {
        let (h, _) = instance(1, 0.0);
        let (p, t) = initialize(&h, 100.0, 0.0).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(p.common_power(), 0.0);
        assert!(p.power_error() <= 1e-12);
    }

    #[test]
    fn initial_power_split() {
        let (h, _) = instance(2, 0.1);
        let (p, t) = initialize(&h, 100.0, 0.1).unwrap();
        assert!((t - 0.1).abs() < 1e-15);
        assert!((p.common_power() - 90.0).abs() < 1e-10);
        assert!((p.private_power() - 10.0).abs() < 1e-10);
        for pk in &p.private {
            assert!((power(pk) - 2.5).abs() < 1e-12);
        }
        for seed in 0..20 {
            let (h, _) = instance(100 + seed, 0.2);
            let (p, _) = initialize(&h, 1000.0, 0.2).unwrap();
            assert!(p.power_error() <= 1e-12);
        }
    }

    #[test]
    fn zero_estimate_is_rejected() {
        let (mut h, _) = instance(3, 0.1);
        h[2] = CMat::zeros(8, 2);
        assert!(matches!(initialize(&h, 10.0, 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn private_subproblem_is_stationary() {
        for seed in 0..5 {
            let (h, s2) = instance(10 + seed, 0.1);
            let (p, t) = initialize(&h, 100.0, 0.1).unwrap();
            let bundles = mse_bundles(&h, &s2, &p, 1.0).unwrap();
            let (d_p, w_p, d_c, _) = split(&bundles);
            let sol = solve_p1(&h, &s2, &d_p, &w_p, 100.0, t, 1.0).unwrap();
            assert!((power(&hstack(&sol.precoders)) - 100.0 * t).abs() <= 1e-10 * 100.0);
            assert!(sol.lambda > 0.0);

            // Lagrangian built from the weighted private MSEs, not from B and V.
            let lagrangian = |pp: &CMat| {
                let set = PrecoderSet::new(p.common.clone(), split_columns(pp, 2), 100.0).unwrap();
                let mut g = 0.0;
                for k in 0..4 {
                    let (_, mp) = mse_matrices(&h[k], s2[k], &set, k, &d_c[k], &d_p[k], 1.0).unwrap();
                    g += (&w_p[k] * mp).trace().re;
                }
                g + sol.lambda * power(pp)
            };
            let grad = fd_gradient(&sol.unnormalized, lagrangian);
            let scale = power(&sol.v).sqrt();
            assert!(grad <= 1e-8 * scale, "seed {seed}: {grad:e} vs {scale:e}");
        }
    }

    #[test]
    fn error_term_matches_block_formula() {
        let (h, _) = instance(20, 0.0);
        let s2 = vec![0.05, 0.1, 0.2, 0.3];
        let (p, _) = initialize(&h, 100.0, 0.3).unwrap();
        let bundles = mse_bundles(&h, &s2, &p, 1.0).unwrap();
        let (d_p, w_p, _, _) = split(&bundles);
        let (b, _) = quadratic_form(&h, &s2, &d_p, &w_p).unwrap();
        let mut signal = CMat::zeros(8, 8);
        for k in 0..4 {
            let hd = &h[k] * d_p[k].adjoint();
            signal += &hd * &w_p[k] * hd.adjoint();
        }
        let omega = b - signal;

        // diag{Theta diag^{-1}{D^H W D}} with Theta = [s2_1 1_{MxN}, ..., s2_K 1_{MxN}].
        let (m, n, k) = (8, 2, 4);
        let theta = DMatrix::from_fn(m, n * k, |_, c| s2[c / n]);
        let mut x = CMat::zeros(n * k, n * k);
        for u in 0..k {
            let blk = d_p[u].adjoint() * &w_p[u] * &d_p[u];
            x.view_mut((u * n, u * n), (n, n)).copy_from(&blk);
        }
        let mut literal = CMat::zeros(m, m);
        for r in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..n * k {
                acc += x[(c, c)] * theta[(r, c)];
            }
            literal[(r, r)] = acc;
        }
        assert!(max_diff(&omega, &literal) < 1e-10);
        let via_closed_form = crate::rates::expectation_quadratic(&theta.transpose(), &x).unwrap();
        assert!(max_diff(&via_closed_form, &literal) < 1e-12);
    }

    fn max_diff(a: &CMat, b: &CMat) -> f64 {
        crate::linalg::max_abs(&(a - b))
    }

    #[test]
    fn common_subproblem_is_stationary() {
        for seed in 0..5 {
            let (h, s2) = instance(30 + seed, 0.1);
            let (p, t) = initialize(&h, 100.0, 0.1).unwrap();
            let bundles = mse_bundles(&h, &s2, &p, 1.0).unwrap();
            let (d_p, _, d_c, w_c) = split(&bundles);
            let pp = p.stacked_private();
            let sol = solve_p2(&h, &s2, &d_c, &w_c, &pp, 100.0, t, 1.0, 1e-6).unwrap();
            let lambda = sol.lambda.unwrap();
            assert!(lambda > 0.0);
            assert!((power(&sol.precoder) - 100.0 * (1.0 - t)).abs() <= 1e-10 * 100.0);

            let unnormalized = solve_hpd(&(&sol.a + identity(8).scale(lambda)), &sol.u, "test").unwrap();
            let lagrangian = |pc: &CMat| {
                let set = PrecoderSet::new(pc.clone(), p.private.clone(), 100.0).unwrap();
                let mut g = 0.0;
                for k in 0..4 {
                    let (mc, _) = mse_matrices(&h[k], s2[k], &set, k, &d_c[k], &d_p[k], 1.0).unwrap();
                    g += (&w_c[k] * mc).trace().re;
                }
                g + lambda * power(pc)
            };
            let grad = fd_gradient(&unnormalized, lagrangian);
            let scale = power(&sol.u).sqrt();
            assert!(grad <= 1e-8 * scale, "seed {seed}: {grad:e} vs {scale:e}");
        }
    }

    #[test]
    fn common_subproblem_falls_back_near_full_private_power() {
        let (h, s2) = instance(40, 0.1);
        let (p, _) = initialize(&h, 100.0, 0.1).unwrap();
        let bundles = mse_bundles(&h, &s2, &p, 1.0).unwrap();
        let (_, _, d_c, w_c) = split(&bundles);
        let sol = solve_p2(&h, &s2, &d_c, &w_c, &p.stacked_private(), 100.0, 1.0, 1.0, 1e-6).unwrap();
        assert_eq!(power(&sol.precoder), 0.0);
        assert!(sol.lambda.is_none());
        assert!((power(&sol.normalized) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_split_is_one_half() {
        let d = PowerSplitDerivative {
            rho: 100.0,
            common_gain: 0.7,
            private_gain: 0.7,
            private_quad: 0.3,
            common_quad: 0.3,
        };
        let s = solve_p3(&d, &SolverConfig::default()).unwrap();
        assert!((s.t - 0.5).abs() < 1e-9);
        assert!(s.boundary.is_none());
    }

    #[test]
    fn split_boundaries_are_flagged() {
        let cfg = SolverConfig::default();
        let base = PowerSplitDerivative {
            rho: 1.0,
            common_gain: 1e-9,
            private_gain: 1e-9,
            private_quad: 0.0,
            common_quad: 0.0,
        };
        let lower = PowerSplitDerivative {
            private_quad: 10.0,
            ..base
        };
        assert_eq!(solve_p3(&lower, &cfg).unwrap().boundary, Some(Boundary::Lower));
        let upper = PowerSplitDerivative {
            common_quad: 10.0,
            ..base
        };
        assert_eq!(solve_p3(&upper, &cfg).unwrap().boundary, Some(Boundary::Upper));
        let bad = PowerSplitDerivative {
            common_gain: 0.0,
            ..base
        };
        assert!(matches!(solve_p3(&bad, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn split_from_real_iterate_brackets_the_sign_change() {
        let cfg = SolverConfig::default();
        for seed in 0..5 {
            let (h, s2) = instance(50 + seed, 0.1);
            let (p, t) = initialize(&h, 100.0, 0.1).unwrap();
            let bundles = mse_bundles(&h, &s2, &p, 1.0).unwrap();
            let (d_p, w_p, _, _) = split(&bundles);
            let private = solve_p1(&h, &s2, &d_p, &w_p, 100.0, t, 1.0).unwrap();
            let mid = PrecoderSet::new(p.common.clone(), private.precoders.clone(), 100.0).unwrap();
            let bundles = mse_bundles(&h, &s2, &mid, 1.0).unwrap();
            let (_, _, d_c, w_c) = split(&bundles);
            let common = solve_p2(&h, &s2, &d_c, &w_c, &hstack(&private.precoders), 100.0, t, 1.0, 1e-6).unwrap();
            let d = PowerSplitDerivative::new(
                &common.u,
                &private.v,
                &common.a,
                &private.b,
                &common.normalized,
                &private.normalized,
                100.0,
            )
            .unwrap();
            assert!(d.eval(1e-6) < 0.0 && d.eval(1.0 - 1e-6) > 0.0);
            let s = solve_p3(&d, &cfg).unwrap();
            assert!(d.eval(s.t - 1e-8) < 0.0 && d.eval(s.t + 1e-8) > 0.0);
        }
    }

    #[test]
    fn run_respects_invariants_and_is_deterministic() {
        let cfg = SolverConfig::default();
        for seed in 0..5 {
            let (h, s2) = instance(60 + seed, 0.1);
            let a = run(&h, &s2, 1000.0, 1.0, &cfg).unwrap();
            let b = run(&h, &s2, 1000.0, 1.0, &cfg).unwrap();
            assert_eq!(a.objective_trace, b.objective_trace);
            assert_eq!(a.precoders, b.precoders);
            assert!(a.precoders.power_error() <= 1e-9);
            assert!(a.t >= cfg.t_clamp && a.t <= 1.0);
            assert_eq!(a.objective_trace.len(), a.iterations);
            assert!(a.converged);
            assert!(a.objective_trace.iter().all(|f| f.is_finite()));
        }
    }

    #[test]
    fn perfect_csit_stays_all_private() {
        let (h, s2) = instance(70, 0.0);
        let s = run(&h, &s2, 1000.0, 1.0, &SolverConfig::default()).unwrap();
        assert!(s.sdma);
        assert_eq!(s.precoders.common_power(), 0.0);
    }

    #[test]
    fn solver_errors_carry_the_iteration() {
        let (h, s2) = instance(80, 0.1);
        let cfg = SolverConfig {
            max_iters: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            run(&h, &s2, 100.0, 1.0, &cfg),
            Err(Error::Parameter { key: "max_iters", .. })
        ));
        assert!(matches!(
            run(&h, &s2, 100.0, 0.0, &SolverConfig::default()),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn filters_from_bundles_match_fields() {
        let (h, s2) = instance(90, 0.1);
        let (p, _) = initialize(&h, 100.0, 0.1).unwrap();
        let bundles = mse_bundles(&h, &s2, &p, 1.0).unwrap();
        let f = Filters::from_bundles(&bundles);
        assert_eq!(f.common[1], bundles[1].d_common);
    }
}
