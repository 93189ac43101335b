//! Acceptance checks. Each returns one [`Outcome`]; seeds are fixed so every
//! run sees the same instances.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsma_core::baselines::{mrt_precoder, Scheme};
use rsma_core::channel::{sample_estimation_channel, QuantizedFeedback};
use rsma_core::codebook::{quantize_channel, Codebook};
use rsma_core::evaluator::{
    mean_and_std_err, run_experiment, run_experiment_with_threads, snr_to_rho, write_csv, CsitModel, ExperimentConfig,
    ExperimentResult,
};
use rsma_core::linalg::{complex_gaussian, hstack, power, CMat, C64};
use rsma_core::precoder::{initialize, run, solve_p1, solve_p2, solve_p3, PowerSplitDerivative, SolverConfig};
use rsma_core::rates::{expectation_quadratic, mse_bundles, objective_f1, objective_f2, weights, Filters, PrecoderSet};

use crate::oracles::{generalized_sinr_plus_identity, lu_inverse, monte_carlo_quadratic, precoder_gradient};

pub const SEED: u64 = 1;
/// One-sided 95% normal quantile.
pub const Z95: f64 = 1.645;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.1} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

fn timed(id: u8, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = f();
    Outcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

fn random_precoders<R: Rng>(m: usize, n: usize, k: usize, rho: f64, rng: &mut R) -> PrecoderSet {
    let t: f64 = rng.random_range(0.1..0.9);
    let mut common = complex_gaussian(m, n, 1.0, rng);
    common *= C64::new((rho * (1.0 - t) / power(&common)).sqrt(), 0.0);
    let mut private: Vec<CMat> = (0..k).map(|_| complex_gaussian(m, n, 1.0, rng)).collect();
    let pp = private.iter().map(power).sum::<f64>();
    for p in &mut private {
        *p *= C64::new((rho * t / pp).sqrt(), 0.0);
    }
    PrecoderSet::new(common, private, rho).expect("valid shapes")
}

fn frob(a: &CMat) -> f64 {
    power(a).sqrt()
}

/// MMSE matrix inverses against `I + SINR` on 1000 random instances.
pub fn rate_identity() -> Outcome {
    timed(1, "MMSE inverse equals I + generalized SINR", || {
        let mut r = rng(1);
        let mut worst: f64 = 0.0;
        let combos: Vec<(usize, usize, f64)> = [4, 8]
            .into_iter()
            .flat_map(|m| [2, 4].into_iter().flat_map(move |k| [0.0, 0.1, 0.3].map(|s| (m, k, s))))
            .collect();
        for i in 0..1000 {
            let (m, k, s2) = combos[i % combos.len()];
            let rho = [1.0, 100.0, 1000.0][(i / combos.len()) % 3];
            let set = sample_estimation_channel(m, 2, k, &vec![s2; k], &mut r).expect("valid dims");
            let p = random_precoders(m, 2, k, rho, &mut r);
            let bundles = match mse_bundles(&set.h_hat, &set.sigma_e2, &p, 1.0) {
                Ok(b) => b,
                Err(e) => return (false, format!("instance {i}: {e}")),
            };
            for (u, b) in bundles.iter().enumerate() {
                let (oc, op) = generalized_sinr_plus_identity(&set.h_hat[u], s2, &p, u, 1.0);
                for (mmse, oracle) in [(&b.m_common, oc), (&b.m_private, op)] {
                    let err = frob(&(lu_inverse(mmse) - &oracle)) / frob(&oracle);
                    worst = worst.max(err);
                }
            }
        }
        (
            worst <= 1e-8,
            format!("max relative Frobenius error {worst:.2e} (limit 1e-8)"),
        )
    })
}

/// Monte Carlo check of `E[Y^H X Y] = diag{Theta diag^{-1}{X}}`.
pub fn error_expectation() -> Outcome {
    timed(2, "error-term expectation", || {
        let mut r = rng(2);
        let draws = 200_000;
        let mut details = Vec::new();
        let mut ok = true;
        // Rows of Y grouped per user, as for the stacked CSIT error.
        let per_user = DMatrix::from_fn(4, 3, |row, _| if row < 2 { 0.1 } else { 0.4 });
        let uniform = DMatrix::from_element(4, 3, 0.3);
        for (name, variances) in [("uniform", uniform), ("per-user", per_user)] {
            let x = complex_gaussian(4, 4, 1.0, &mut r);
            let expected = expectation_quadratic(&variances, &x).expect("square X");
            let (mean, se_re, se_im) = monte_carlo_quadratic(&variances, &x, draws, &mut r);
            let mut worst: f64 = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let d = mean[(i, j)] - expected[(i, j)];
                    worst = worst.max(d.re.abs() / se_re[(i, j)]).max(d.im.abs() / se_im[(i, j)]);
                }
            }
            ok &= worst <= 3.0;
            details.push(format!("{name}: max |dev| {worst:.2} SE"));
        }
        (ok, format!("{} over {draws} draws (limit 3 SE)", details.join(", ")))
    })
}

/// Coordinate-wise agreement of the gradients of the smoothed rate objective
/// and of the weighted MSE with optimum filters and weights held fixed.
pub fn gradient_equality() -> Outcome {
    timed(3, "rate and weighted-MSE gradients agree", || {
        let mut r = rng(3);
        let (m, n, k) = (4, 2, 3);
        let mut worst: f64 = 0.0;
        for point in 0..10 {
            let s2 = [0.0, 0.1, 0.3][point % 3];
            let rho = [10.0, 100.0][point % 2];
            let set = sample_estimation_channel(m, n, k, &vec![s2; k], &mut r).expect("valid dims");
            let p = random_precoders(m, n, k, rho, &mut r);
            let bundles = mse_bundles(&set.h_hat, &set.sigma_e2, &p, 1.0).expect("PD covariances");
            let filters = Filters::from_bundles(&bundles);
            let w = weights(&bundles).expect("PD MMSE matrices");
            let g1 = precoder_gradient(&p, 1e-3, |q| {
                objective_f1(&set.h_hat, &set.sigma_e2, q, 1.0).expect("f1")
            });
            let g2 = precoder_gradient(&p, 1e-3, |q| {
                objective_f2(&set.h_hat, &set.sigma_e2, q, &filters, &w, 1.0).expect("f2")
            });
            let scale = g1.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            for (a, b) in g1.iter().zip(&g2) {
                let denom = a.abs().max(b.abs()).max(1e-6 * scale);
                worst = worst.max((a - b).abs() / denom);
            }
        }
        (
            worst <= 1e-5,
            format!("max coordinate relative difference {worst:.2e} over 10 points (limit 1e-5)"),
        )
    })
}

/// Objective traces of the rate-splitting solver at 20 dB, sigma_e2 = 0.1.
pub fn descent_and_convergence() -> Outcome {
    timed(4, "objective descent and convergence speed", || {
        let cfg = SolverConfig::default();
        let rho = snr_to_rho(20.0);
        let mut increases = Vec::new();
        let mut iterations = Vec::new();
        let mut fast = 0;
        let mut failures = 0;
        for run_id in 0..100u64 {
            let mut r = rng(400 + run_id);
            let set = sample_estimation_channel(8, 2, 4, &[0.1; 4], &mut r).expect("valid dims");
            match run(&set.h_hat, &set.sigma_e2, rho, 1.0, &cfg) {
                Ok(s) => {
                    let rise = s
                        .objective_trace
                        .windows(2)
                        .map(|w| w[1] - w[0])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if rise > 1e-9 {
                        increases.push((run_id, rise));
                    }
                    if s.converged && s.iterations <= 50 {
                        fast += 1;
                    }
                    iterations.push(s.iterations);
                }
                Err(_) => failures += 1,
            }
        }
        iterations.sort_unstable();
        let median = iterations.get(iterations.len() / 2).copied().unwrap_or(usize::MAX);
        let worst = increases.iter().map(|x| x.1).fold(0.0f64, f64::max);
        let passed = failures == 0 && increases.is_empty() && fast >= 95 && median <= 30;
        (
            passed,
            format!(
                "{} of 100 traces rise by more than 1e-9 (largest {worst:.2e}, runs {:?}); \
                 {fast}/100 converged within 50 iterations (need 95); median {median} iterations (limit 30); \
                 {failures} solver failures",
                increases.len(),
                increases.iter().map(|x| x.0).collect::<Vec<_>>()
            ),
        )
    })
}

/// Bisection root of the power-split derivative against a dense grid scan.
pub fn power_split_oracle() -> Outcome {
    timed(5, "power-split root against grid scan", || {
        let mut r = rng(5);
        let cfg = SolverConfig::default();
        let eps = cfg.t_clamp;
        let grid = 1_000_000usize;
        let mut worst: f64 = 0.0;
        let mut bad_endpoints = 0;
        for _ in 0..100 {
            let s2 = [0.05, 0.1, 0.3][r.random_range(0..3)];
            let rho = snr_to_rho(r.random_range(10.0..40.0));
            let set = sample_estimation_channel(8, 2, 4, &[s2; 4], &mut r).expect("valid dims");
            let p = random_precoders(8, 2, 4, rho, &mut r);
            let t = p.private_power() / rho;
            let Some(d) = sweep_derivative(&set.h_hat, &set.sigma_e2, &p, rho, t, &cfg) else {
                return (false, "sweep failed on a random iterate".into());
            };
            if !(d.eval(eps) < 0.0 && d.eval(1.0 - eps) > 0.0) {
                bad_endpoints += 1;
                continue;
            }
            let split = match solve_p3(&d, &cfg) {
                Ok(s) => s,
                Err(e) => return (false, e.to_string()),
            };
            let step = (1.0 - 2.0 * eps) / grid as f64;
            let mut prev = eps;
            let mut root = f64::NAN;
            for i in 1..=grid {
                let x = eps + step * i as f64;
                if d.eval(x) >= 0.0 {
                    root = 0.5 * (prev + x);
                    break;
                }
                prev = x;
            }
            worst = worst.max((split.t - root).abs());
        }
        (
            bad_endpoints == 0 && worst <= 2e-6,
            format!(
                "max |bisection - grid| {worst:.2e} (limit 2e-6); {bad_endpoints}/100 iterates with wrong endpoint signs"
            ),
        )
    })
}

/// One P1 -> P2 pass at `p` and the resulting power-split derivative.
fn sweep_derivative(
    h_hat: &[CMat],
    s2: &[f64],
    p: &PrecoderSet,
    rho: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Option<PowerSplitDerivative> {
    let bundles = mse_bundles(h_hat, s2, p, 1.0).ok()?;
    let w = weights(&bundles).ok()?;
    let d_p: Vec<_> = bundles.iter().map(|b| b.d_private.clone()).collect();
    let w_p: Vec<_> = w.iter().map(|w| w.w_private.clone()).collect();
    let private = solve_p1(h_hat, s2, &d_p, &w_p, rho, t, 1.0).ok()?;
    let mid = PrecoderSet::new(p.common.clone(), private.precoders.clone(), rho).ok()?;
    let bundles = mse_bundles(h_hat, s2, &mid, 1.0).ok()?;
    let w = weights(&bundles).ok()?;
    let d_c: Vec<_> = bundles.iter().map(|b| b.d_common.clone()).collect();
    let w_c: Vec<_> = w.iter().map(|w| w.w_common.clone()).collect();
    let common = solve_p2(
        h_hat,
        s2,
        &d_c,
        &w_c,
        &hstack(&private.precoders),
        rho,
        t,
        1.0,
        cfg.t_clamp,
    )
    .ok()?;
    PowerSplitDerivative::new(
        &common.u,
        &private.v,
        &common.a,
        &private.b,
        &common.normalized,
        &private.normalized,
        rho,
    )
    .ok()
}

/// Power budget of every precoder the library emits across a parameter sweep.
pub fn power_conservation() -> Outcome {
    timed(6, "power conservation", || {
        let mut worst: f64 = 0.0;
        let mut count = 0usize;
        let cfg = ExperimentConfig {
            snr_db: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            sigma_e2: vec![0.0, 0.05, 0.1, 0.3],
            draws: 20,
            seed: SEED,
            ..ExperimentConfig::default()
        };
        let result = match run_experiment(&cfg) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        for rec in &result.records {
            match rec.power_error {
                Some(e) => {
                    worst = worst.max(e);
                    count += 1;
                }
                None => return (false, format!("draw {} of {} failed", rec.draw, rec.scheme)),
            }
        }
        let mut r = rng(6);
        for _ in 0..200 {
            let rho = snr_to_rho(r.random_range(0.0..40.0));
            let s2 = r.random_range(0.0..0.5);
            let set = sample_estimation_channel(8, 2, 4, &[s2; 4], &mut r).expect("valid dims");
            for p in [
                initialize(&set.h_hat, rho, s2).map(|x| x.0),
                mrt_precoder(&set.h_hat, rho),
            ] {
                match p {
                    Ok(p) => {
                        worst = worst.max(p.power_error());
                        count += 1;
                    }
                    Err(e) => return (false, e.to_string()),
                }
            }
        }
        (
            worst <= 1e-9,
            format!("{count} precoder sets, max |tr(PP^H) - rho| / rho = {worst:.2e} (limit 1e-9)"),
        )
    })
}

fn paired_differences(r: &ExperimentResult, a: Scheme, b: Scheme, snr_db: f64, sigma_e2: f64) -> Vec<f64> {
    let mut by_draw: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for rec in r
        .records
        .iter()
        .filter(|x| x.snr_db == snr_db && x.sigma_e2 == sigma_e2)
    {
        let e = by_draw.entry(rec.draw).or_default();
        if rec.scheme == a {
            e.0 = rec.sum_rate_bits;
        } else if rec.scheme == b {
            e.1 = rec.sum_rate_bits;
        }
    }
    by_draw.values().filter_map(|&(x, y)| Some(x? - y?)).collect()
}

fn esr(r: &ExperimentResult, s: Scheme, snr: f64, s2: f64) -> f64 {
    r.point(s, snr, s2).map(|p| p.esr_bits).unwrap_or(f64::NAN)
}

/// Ergodic sum rate ordering and saturation at M=8, N=2, K=4, sigma_e2 = 0.1.
pub fn esr_ordering() -> Outcome {
    timed(7, "ergodic sum rate ordering and saturation", || {
        let cfg = ExperimentConfig {
            m: 8,
            n: 2,
            k: 4,
            snr_db: vec![0.0, 10.0, 30.0, 40.0],
            sigma_e2: vec![0.1],
            draws: 200,
            schemes: vec![Scheme::Proposed, Scheme::Rwmmse, Scheme::Mrt],
            seed: SEED,
            ..ExperimentConfig::default()
        };
        let start = Instant::now();
        let result = match run_experiment(&cfg).and_then(|r| r.check_failures().map(|_| r)) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        let elapsed = start.elapsed().as_secs_f64();
        let mut ok = elapsed < 900.0;
        let mut parts = Vec::new();
        for snr in [30.0, 40.0] {
            let d = paired_differences(&result, Scheme::Proposed, Scheme::Rwmmse, snr, 0.1);
            let (mean, se) = mean_and_std_err(&d);
            let lower = mean - Z95 * se;
            ok &= d.len() == 200 && lower >= 0.0;
            parts.push(format!(
                "(a) {snr} dB: proposed - rwmmse = {mean:.3} +- {se:.3}, 95% lower bound {lower:.3}"
            ));
        }
        let rw = |s| esr(&result, Scheme::Rwmmse, s, 0.1);
        let low = (rw(10.0) - rw(0.0)) / 10.0;
        let high = (rw(40.0) - rw(30.0)) / 10.0;
        ok &= high < 0.35 * low;
        parts.push(format!(
            "(b) rwmmse slope {high:.3} vs {low:.3} bits/dB, ratio {:.2} (limit 0.35)",
            high / low
        ));
        let at30: Vec<(Scheme, f64)> = cfg.schemes.iter().map(|&s| (s, esr(&result, s, 30.0, 0.1))).collect();
        let mrt = esr(&result, Scheme::Mrt, 30.0, 0.1);
        ok &= at30.iter().all(|&(s, v)| s == Scheme::Mrt || v > mrt);
        parts.push(format!(
            "(c) 30 dB ESR {}",
            at30.iter()
                .map(|(s, v)| format!("{s} {v:.2}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        parts.push(format!("runtime {elapsed:.0} s (limit 900)"));
        (ok, parts.join("; "))
    })
}

/// With perfect CSIT the rate-splitting design reduces to the private-only one.
pub fn perfect_csit_reduction() -> Outcome {
    timed(8, "perfect-CSIT reduction", || {
        let cfg = ExperimentConfig {
            snr_db: vec![30.0],
            sigma_e2: vec![0.0],
            draws: 50,
            schemes: vec![Scheme::Proposed, Scheme::Rwmmse],
            seed: SEED,
            ..ExperimentConfig::default()
        };
        let result = match run_experiment(&cfg) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        let gap = (esr(&result, Scheme::Proposed, 30.0, 0.0) - esr(&result, Scheme::Rwmmse, 30.0, 0.0)).abs();
        let mut fractions: Vec<f64> = result
            .records
            .iter()
            .filter(|r| r.scheme == Scheme::Proposed)
            .filter_map(|r| r.common_fraction)
            .collect();
        fractions.sort_by(f64::total_cmp);
        let median = fractions.get(fractions.len() / 2).copied().unwrap_or(f64::NAN);
        (
            fractions.len() == 50 && gap <= 0.1 && median <= 0.05,
            format!(
                "|ESR gap| {gap:.2e} bits (limit 0.1), median common power {:.2}% of rho (limit 5%)",
                100.0 * median
            ),
        )
    })
}

/// Planted-codeword quantization and distortion decreasing in feedback bits.
pub fn quantization() -> Outcome {
    timed(9, "quantized CSIT", || {
        let mut r = rng(9);
        let cb = Codebook::random(4, 2, 4, &mut r).expect("valid codebook");
        let mix = complex_gaussian(2, 2, 1.0, &mut r);
        let planted = &cb.entries()[5] * mix;
        let q = match quantize_channel(&planted, &cb) {
            Ok(q) => q,
            Err(e) => return (false, e.to_string()),
        };
        let mut ok = q.index == 5 && q.distortion.abs() <= 1e-10;
        let mut parts = vec![format!("planted index {} distortion {:.1e}", q.index, q.distortion)];

        let mut stats = Vec::new();
        for bits in [2u32, 4, 6, 8] {
            let mut g = Vec::with_capacity(200);
            for _ in 0..200 {
                let fb = QuantizedFeedback::random(4, 2, 1, bits, &mut r).expect("valid feedback");
                let h = vec![complex_gaussian(4, 2, 1.0, &mut r)];
                let q = fb.quantize(&h).expect("full-rank channel");
                g.push(q[0].distortion / 2.0);
            }
            stats.push((bits, mean_and_std_err(&g)));
        }
        for w in stats.windows(2) {
            let ((b0, (m0, s0)), (b1, (m1, s1))) = (w[0], w[1]);
            let sep = (m0 - m1) / (s0 * s0 + s1 * s1).sqrt();
            ok &= sep > Z95;
            parts.push(format!("B={b0}->{b1}: {m0:.3} -> {m1:.3} ({sep:.1} SE)"));
        }
        (ok, parts.join("; "))
    })
}

/// Byte-identical CSV output across worker counts and reruns.
pub fn determinism() -> Outcome {
    timed(10, "reproducible output", || {
        let configs = [
            ExperimentConfig {
                m: 4,
                n: 2,
                k: 3,
                snr_db: vec![10.0, 30.0],
                sigma_e2: vec![0.0, 0.1],
                draws: 16,
                seed: SEED,
                ..ExperimentConfig::default()
            },
            ExperimentConfig {
                m: 4,
                n: 2,
                k: 2,
                snr_db: vec![20.0],
                draws: 8,
                csit: CsitModel::Quantized { bits: 6 },
                seed: SEED,
                ..ExperimentConfig::default()
            },
        ];
        let mut ok = true;
        let mut sizes = Vec::new();
        for cfg in &configs {
            let mut outputs = Vec::new();
            for threads in [1, 2, 4, 4] {
                let mut buf = Vec::new();
                let res = run_experiment_with_threads(cfg, threads).and_then(|r| write_csv(&mut buf, &r, "check"));
                if let Err(e) = res {
                    return (false, e.to_string());
                }
                outputs.push(buf);
            }
            ok &= outputs.windows(2).all(|w| w[0] == w[1]);
            sizes.push(outputs[0].len());
        }
        (
            ok,
            format!("CSV of {sizes:?} bytes identical for 1, 2, 4 threads and a rerun"),
        )
    })
}

pub fn run_all() -> Vec<Outcome> {
    vec![
        rate_identity(),
        error_expectation(),
        gradient_equality(),
        descent_and_convergence(),
        power_split_oracle(),
        power_conservation(),
        esr_ordering(),
        perfect_csit_reduction(),
        quantization(),
        determinism(),
    ]
}
