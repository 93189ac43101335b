//! Monte Carlo experiment engine: ergodic sum rates over channel draws,
//! empirical CDFs and convergence traces.
//!
//! Work items are `(sigma_e2 index, draw)` pairs. Each item owns a ChaCha8
//! generator seeded with the master seed and switched to stream
//! `(sigma_index << 32) | draw`, so results do not depend on scheduling. One
//! channel draw is shared by every SNR point and scheme (paired comparisons).

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{design, Scheme};
use crate::channel::{sample_estimation_channel, ChannelSet, QuantizedFeedback};
use crate::error::{Error, Result};
use crate::precoder::SolverConfig;
use crate::rates::instantaneous_rates;

/// Noise variance used by every experiment; SNR is `rho / sigma_n2`.
pub const NOISE_VARIANCE: f64 = 1.0;
/// Largest tolerated share of failed draws per operating point.
pub const MAX_FAILURE_RATE: f64 = 0.01;
/// Channel draws used to estimate the quantization distortion of the shared codebooks.
pub const CALIBRATION_DRAWS: usize = 1000;
/// Stream reserved for codebook generation and calibration.
const CODEBOOK_STREAM: u64 = u64::MAX;

pub fn snr_to_rho(snr_db: f64) -> f64 {
    NOISE_VARIANCE * 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CsitModel {
    /// Gaussian estimation error with the configured variances.
    Estimation,
    /// Random-vector quantization feedback with `bits` per user.
    Quantized { bits: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub snr_db: Vec<f64>,
    /// Ignored in quantized mode, where the variance follows from the feedback.
    pub sigma_e2: Vec<f64>,
    pub draws: usize,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
    pub solver: SolverConfig,
    pub csit: CsitModel,
    /// Keep per-draw objective traces.
    pub keep_traces: bool,
    /// Measure solver wall-clock time. Timing makes outputs non-reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m: 8,
            n: 2,
            k: 4,
            snr_db: vec![30.0],
            sigma_e2: vec![0.1],
            draws: 200,
            schemes: vec![Scheme::Proposed, Scheme::Rwmmse, Scheme::Mrt],
            seed: 1,
            solver: SolverConfig::default(),
            csit: CsitModel::Estimation,
            keep_traces: false,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m < self.n {
            return Err(Error::parameter(
                "m",
                format!("need M >= N >= 1, got M={} N={}", self.m, self.n),
            ));
        }
        if self.k == 0 {
            return Err(Error::parameter("k", "need at least one user"));
        }
        if self.draws == 0 {
            return Err(Error::parameter("draws", "must be at least 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::parameter("snr_db", "grid is empty"));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::parameter("snr_db", format!("{s} is not finite")));
        }
        if self.schemes.is_empty() {
            return Err(Error::parameter("schemes", "no scheme selected"));
        }
        if let Some(s) = self.schemes.iter().find(|s| !s.is_implemented()) {
            return Err(Error::parameter("schemes", format!("scheme `{s}` is not implemented")));
        }
        match self.csit {
            CsitModel::Estimation => {
                if self.sigma_e2.is_empty() {
                    return Err(Error::parameter("sigma_e2", "grid is empty"));
                }
                if let Some(s) = self.sigma_e2.iter().find(|s| !(0.0..1.0).contains(*s)) {
                    return Err(Error::parameter("sigma_e2", format!("{s} outside [0, 1)")));
                }
            }
            CsitModel::Quantized { bits } => {
                if self.m <= self.n {
                    return Err(Error::parameter("m", "quantized feedback needs M > N"));
                }
                if bits == 0 || bits > crate::codebook::MAX_BITS {
                    return Err(Error::parameter(
                        "bits",
                        format!("{bits} outside 1..={}", crate::codebook::MAX_BITS),
                    ));
                }
            }
        }
        self.solver.validate()
    }

    /// Number of error-variance points actually simulated.
    fn sigma_points(&self) -> usize {
        match self.csit {
            CsitModel::Estimation => self.sigma_e2.len(),
            CsitModel::Quantized { .. } => 1,
        }
    }
}

/// Outcome of one scheme on one draw at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub draw: usize,
    pub sum_rate_bits: Option<f64>,
    pub rc_min_bits: Option<f64>,
    pub iterations: usize,
    pub t_final: Option<f64>,
    pub converged: bool,
    pub boundary_hits: usize,
    /// Common-stream power as a fraction of the budget.
    pub common_fraction: Option<f64>,
    /// `|tr(PP^H) - rho| / rho` of the designed precoders.
    pub power_error: Option<f64>,
    pub solver_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DrawRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub esr_bits: f64,
    pub std_err_bits: f64,
    pub draws_ok: usize,
    pub failures: usize,
    pub not_converged: usize,
    pub boundary_hits: usize,
    pub mean_iterations: f64,
    pub mean_solver_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Effective error variance per simulated point (differs from the config in quantized mode).
    pub sigma_e2: Vec<f64>,
    /// Calibrated quantization distortion per column, quantized mode only.
    pub gamma_hat: Option<f64>,
    pub points: Vec<PointSummary>,
    /// Ordered by error variance, draw, SNR, scheme.
    pub records: Vec<DrawRecord>,
}

impl ExperimentResult {
    pub fn point(&self, scheme: Scheme, snr_db: f64, sigma_e2: f64) -> Option<&PointSummary> {
        self.points
            .iter()
            .find(|p| p.scheme == scheme && p.snr_db == snr_db && p.sigma_e2 == sigma_e2)
    }

    /// Successful per-draw sum rates in draw order.
    pub fn sum_rates(&self, scheme: Scheme, snr_db: f64, sigma_e2: f64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.scheme == scheme && r.snr_db == snr_db && r.sigma_e2 == sigma_e2)
            .filter_map(|r| r.sum_rate_bits)
            .collect()
    }

    /// Fails if any operating point lost more than 1% of its draws.
    pub fn check_failures(&self) -> Result<()> {
        for p in &self.points {
            let total = p.draws_ok + p.failures;
            if p.failures as f64 > MAX_FAILURE_RATE * total as f64 {
                let first = self
                    .records
                    .iter()
                    .find(|r| r.scheme == p.scheme && r.snr_db == p.snr_db && r.sigma_e2 == p.sigma_e2 && r.failed())
                    .and_then(|r| r.error.clone())
                    .unwrap_or_default();
                return Err(Error::Numerical(format!(
                    "{} of {} draws failed for {} at {} dB, sigma_e2 {}: {}",
                    p.failures, total, p.scheme, p.snr_db, p.sigma_e2, first
                )));
            }
        }
        Ok(())
    }
}

fn draw_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shared quantization codebooks and their calibrated distortion.
fn prepare_feedback(cfg: &ExperimentConfig, bits: u32) -> Result<(QuantizedFeedback, f64)> {
    let mut rng = draw_rng(cfg.seed, CODEBOOK_STREAM);
    let feedback = QuantizedFeedback::random(cfg.m, cfg.n, cfg.k, bits, &mut rng)?;
    let gamma = feedback.estimate_distortion(CALIBRATION_DRAWS, &mut rng)?;
    Ok((feedback, gamma))
}

/// The random codebooks an experiment with this configuration uses, if any.
pub fn experiment_codebooks(cfg: &ExperimentConfig) -> Result<Option<QuantizedFeedback>> {
    match cfg.csit {
        CsitModel::Estimation => Ok(None),
        CsitModel::Quantized { bits } => prepare_feedback(cfg, bits).map(|(f, _)| Some(f)),
    }
}

fn evaluate_draw(cfg: &ExperimentConfig, set: &Result<ChannelSet>, sigma_e2: f64, draw: usize) -> Vec<DrawRecord> {
    let mut out = Vec::with_capacity(cfg.snr_db.len() * cfg.schemes.len());
    for &snr_db in &cfg.snr_db {
        let rho = snr_to_rho(snr_db);
        for &scheme in &cfg.schemes {
            let mut rec = DrawRecord {
                scheme,
                snr_db,
                sigma_e2,
                draw,
                sum_rate_bits: None,
                rc_min_bits: None,
                iterations: 0,
                t_final: None,
                converged: false,
                boundary_hits: 0,
                common_fraction: None,
                power_error: None,
                solver_seconds: None,
                trace: None,
                error: None,
            };
            let set = match set {
                Ok(s) => s,
                Err(e) => {
                    rec.error = Some(e.to_string());
                    out.push(rec);
                    continue;
                }
            };
            let start = Instant::now();
            let designed = design(scheme, &set.h_hat, &set.sigma_e2, rho, NOISE_VARIANCE, &cfg.solver);
            let elapsed = start.elapsed().as_secs_f64();
            let outcome = designed.and_then(|d| {
                let rates = instantaneous_rates(&set.h, &d.precoders, NOISE_VARIANCE)?;
                Ok((d, rates))
            });
            match outcome {
                Ok((d, rates)) => {
                    rec.sum_rate_bits = Some(rates.sum_rate);
                    rec.rc_min_bits = Some(rates.min_common());
                    rec.iterations = d.iterations;
                    rec.t_final = Some(d.t);
                    rec.converged = d.converged;
                    rec.boundary_hits = d.boundary_hits;
                    rec.common_fraction = Some(d.precoders.common_power() / rho);
                    rec.power_error = Some(d.precoders.power_error());
                    if cfg.keep_traces {
                        rec.trace = Some(d.objective_trace);
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            if cfg.record_timing {
                rec.solver_seconds = Some(elapsed);
            }
            out.push(rec);
        }
    }
    out
}

fn summarize(cfg: &ExperimentConfig, sigmas: &[f64], records: &[DrawRecord]) -> Vec<PointSummary> {
    let mut points = Vec::new();
    for &sigma_e2 in sigmas {
        for &snr_db in &cfg.snr_db {
            for &scheme in &cfg.schemes {
                let recs: Vec<_> = records
                    .iter()
                    .filter(|r| r.scheme == scheme && r.snr_db == snr_db && r.sigma_e2 == sigma_e2)
                    .collect();
                let ok: Vec<_> = recs.iter().filter(|r| !r.failed()).collect();
                let rates: Vec<f64> = ok.iter().filter_map(|r| r.sum_rate_bits).collect();
                let (esr, se) = mean_and_std_err(&rates);
                let mean_iterations = if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.iterations as f64).sum::<f64>() / ok.len() as f64
                };
                let mean_solver_seconds = cfg.record_timing.then(|| {
                    let t: Vec<f64> = ok.iter().filter_map(|r| r.solver_seconds).collect();
                    t.iter().sum::<f64>() / t.len().max(1) as f64
                });
                points.push(PointSummary {
                    scheme,
                    snr_db,
                    sigma_e2,
                    esr_bits: esr,
                    std_err_bits: se,
                    draws_ok: ok.len(),
                    failures: recs.len() - ok.len(),
                    not_converged: ok.iter().filter(|r| !r.converged).count(),
                    boundary_hits: ok.iter().map(|r| r.boundary_hits).sum(),
                    mean_iterations,
                    mean_solver_seconds,
                });
            }
        }
    }
    points
}

/// Sample mean and `std / sqrt(n)` (zero for a single sample, NaN for none).
pub fn mean_and_std_err(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() == 1 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the full grid on the current rayon pool.
///
/// Failed draws are kept as records with an error message and excluded from the
/// means; use [`ExperimentResult::check_failures`] to enforce the 1% limit.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (feedback, gamma_hat, sigmas) = match cfg.csit {
        CsitModel::Estimation => (None, None, cfg.sigma_e2.clone()),
        CsitModel::Quantized { bits } => {
            let (feedback, gamma) = prepare_feedback(cfg, bits)?;
            let s2 = crate::channel::quantization_error_variance(cfg.m, cfg.n, gamma);
            if !(0.0..1.0).contains(&s2) {
                return Err(Error::parameter(
                    "bits",
                    format!("{bits} bits give error variance {s2:.3} outside [0, 1)"),
                ));
            }
            (Some(feedback), Some(gamma), vec![s2])
        }
    };
    let items: Vec<(usize, usize)> = (0..cfg.sigma_points())
        .flat_map(|s| (0..cfg.draws).map(move |d| (s, d)))
        .collect();
    let per_item: Vec<Vec<DrawRecord>> = items
        .par_iter()
        .map(|&(s, d)| {
            let mut rng = draw_rng(cfg.seed, ((s as u64) << 32) | d as u64);
            let set = match (&feedback, gamma_hat) {
                (Some(f), Some(g)) => {
                    let h: Vec<_> = (0..cfg.k)
                        .map(|_| crate::linalg::complex_gaussian(cfg.m, cfg.n, 1.0, &mut rng))
                        .collect();
                    f.observe(h, g)
                }
                _ => sample_estimation_channel(cfg.m, cfg.n, cfg.k, &vec![sigmas[s]; cfg.k], &mut rng),
            };
            evaluate_draw(cfg, &set, sigmas[s], d)
        })
        .collect();
    let records: Vec<DrawRecord> = per_item.into_iter().flatten().collect();
    let points = summarize(cfg, &sigmas, &records);
    Ok(ExperimentResult {
        config: cfg.clone(),
        sigma_e2: sigmas,
        gamma_hat,
        points,
        records,
    })
}

/// Runs the experiment on a dedicated pool with `threads` workers.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    if threads == 0 {
        return Err(Error::parameter("threads", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::parameter("threads", e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

/// Right-continuous empirical distribution function of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::parameter("samples", "empirical CDF of an empty sample"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::parameter("samples", "NaN in sample"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    /// `#{x_n <= x} / N`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `(x_(i), F(x_(i)))` at every distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &x in &self.sorted {
            if out.last().is_some_and(|&(prev, _)| prev == x) {
                continue;
            }
            out.push((x, self.eval(x)));
        }
        out
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the provenance header shared by every output file.
fn write_header<W: Write>(w: &mut W, cfg: &ExperimentConfig, version: &str) -> Result<()> {
    writeln!(w, "# rsma-sim {version}")?;
    writeln!(w, "# config: {}", serde_json::to_string(cfg)?)?;
    Ok(())
}

/// One row per scheme, SNR, error variance and draw. Rates in bits/s/Hz.
pub fn write_csv<W: Write>(mut w: W, result: &ExperimentResult, version: &str) -> Result<()> {
    write_header(&mut w, &result.config, version)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scheme",
        "snr_db",
        "sigma_e2",
        "draw",
        "sum_rate_bits",
        "rc_min_bits",
        "iterations",
        "t_final",
        "solver_seconds",
    ])?;
    for r in &result.records {
        out.write_record([
            r.scheme.name().to_owned(),
            r.snr_db.to_string(),
            r.sigma_e2.to_string(),
            r.draw.to_string(),
            opt(r.sum_rate_bits),
            opt(r.rc_min_bits),
            r.iterations.to_string(),
            opt(r.t_final),
            opt(r.solver_seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Objective traces, one row per draw and iteration.
pub fn write_trace_csv<W: Write>(mut w: W, result: &ExperimentResult, version: &str) -> Result<()> {
    write_header(&mut w, &result.config, version)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scheme", "snr_db", "sigma_e2", "draw", "iteration", "objective_nats"])?;
    for r in &result.records {
        for (i, f) in r.trace.iter().flatten().enumerate() {
            out.write_record([
                r.scheme.name().to_owned(),
                r.snr_db.to_string(),
                r.sigma_e2.to_string(),
                r.draw.to_string(),
                (i + 1).to_string(),
                f.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Empirical CDF of the sum rate per scheme and operating point.
pub fn write_cdf_csv<W: Write>(mut w: W, result: &ExperimentResult, version: &str) -> Result<()> {
    write_header(&mut w, &result.config, version)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scheme", "snr_db", "sigma_e2", "sum_rate_bits", "cdf"])?;
    for p in &result.points {
        let rates = result.sum_rates(p.scheme, p.snr_db, p.sigma_e2);
        if rates.is_empty() {
            continue;
        }
        for (x, f) in EmpiricalCdf::new(&rates)?.steps() {
            out.write_record([
                p.scheme.name().to_owned(),
                p.snr_db.to_string(),
                p.sigma_e2.to_string(),
                x.to_string(),
                f.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    sigma_e2: &'a [f64],
    gamma_hat: Option<f64>,
    points: &'a [PointSummary],
    failures: Vec<&'a DrawRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    traces: Vec<TraceEntry<'a>>,
}

#[derive(Serialize)]
struct TraceEntry<'a> {
    scheme: Scheme,
    snr_db: f64,
    sigma_e2: f64,
    draw: usize,
    objective_nats: &'a [f64],
}

/// Per-point means and standard errors, failed draws and (if kept) traces.
pub fn write_json<W: Write>(w: W, result: &ExperimentResult, version: &str) -> Result<()> {
    let summary = JsonSummary {
        version,
        config: &result.config,
        sigma_e2: &result.sigma_e2,
        gamma_hat: result.gamma_hat,
        points: &result.points,
        failures: result.records.iter().filter(|r| r.failed()).collect(),
        traces: result
            .records
            .iter()
            .filter_map(|r| {
                r.trace.as_deref().map(|t| TraceEntry {
                    scheme: r.scheme,
                    snr_db: r.snr_db,
                    sigma_e2: r.sigma_e2,
                    draw: r.draw,
                    objective_nats: t,
                })
            })
            .collect(),
    };
    serde_json::to_writer_pretty(w, &summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            m: 4,
            n: 2,
            k: 2,
            snr_db: vec![0.0, 10.0],
            sigma_e2: vec![0.0, 0.1],
            draws: 6,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_draw_mean_is_that_draw() {
        let cfg = ExperimentConfig {
            draws: 1,
            schemes: vec![Scheme::Mrt],
            sigma_e2: vec![0.0],
            ..small()
        };
        let r = run_experiment(&cfg).unwrap();
        let p = r.point(Scheme::Mrt, 10.0, 0.0).unwrap();
        assert_eq!(p.esr_bits, r.sum_rates(Scheme::Mrt, 10.0, 0.0)[0]);
        assert_eq!(p.std_err_bits, 0.0);
    }

    #[test]
    fn esr_is_mean_of_draws() {
        let r = run_experiment(&small()).unwrap();
        assert_eq!(r.records.len(), 2 * 6 * 2 * 3);
        for p in &r.points {
            let x = r.sum_rates(p.scheme, p.snr_db, p.sigma_e2);
            assert_eq!(x.len(), 6);
            let mean = x.iter().sum::<f64>() / 6.0;
            assert!((p.esr_bits - mean).abs() < 1e-12);
            assert!(p.esr_bits.is_finite() && p.esr_bits >= 0.0);
        }
        r.check_failures().unwrap();
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small();
        let a = run_experiment_with_threads(&cfg, 1).unwrap();
        let b = run_experiment_with_threads(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_csv(&mut ca, &a, "test").unwrap();
        write_csv(&mut cb, &b, "test").unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn failed_points_trip_the_limit() {
        let mut r = run_experiment(&small()).unwrap();
        r.points[0].failures = 1;
        assert!(matches!(r.check_failures(), Err(Error::Numerical(_))));
    }

    #[test]
    fn config_validation_names_the_key() {
        let bad = |c: ExperimentConfig| match c.validate() {
            Err(Error::Parameter { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(bad(ExperimentConfig { draws: 0, ..small() }), "draws");
        assert_eq!(
            bad(ExperimentConfig {
                snr_db: vec![],
                ..small()
            }),
            "snr_db"
        );
        assert_eq!(
            bad(ExperimentConfig {
                sigma_e2: vec![1.0],
                ..small()
            }),
            "sigma_e2"
        );
        assert_eq!(
            bad(ExperimentConfig {
                schemes: vec![Scheme::Sns],
                ..small()
            }),
            "schemes"
        );
        assert_eq!(
            bad(ExperimentConfig {
                m: 2,
                csit: CsitModel::Quantized { bits: 4 },
                ..small()
            }),
            "m"
        );
    }

    #[test]
    fn quantized_mode_reports_effective_variance() {
        let cfg = ExperimentConfig {
            m: 4,
            n: 2,
            k: 2,
            draws: 3,
            csit: CsitModel::Quantized { bits: 6 },
            schemes: vec![Scheme::Mrt, Scheme::Proposed],
            ..ExperimentConfig::default()
        };
        let r = run_experiment(&cfg).unwrap();
        let g = r.gamma_hat.unwrap();
        assert!(g > 0.0 && g < 1.0);
        assert_eq!(r.sigma_e2, vec![crate::channel::quantization_error_variance(4, 2, g)]);
        assert!(r.records.iter().all(|x| x.sum_rate_bits.is_some()));
    }

    #[test]
    fn cdf_boundaries() {
        let c = EmpiricalCdf::new(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(c.eval(3.0), 1.0);
        assert_eq!(c.eval(0.0), 0.0);
        assert_eq!(c.eval(2.0), 0.75);
        assert_eq!(c.eval(1.999), 0.25);
        assert_eq!(c.steps(), vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
        assert!(EmpiricalCdf::new(&[]).is_err());
    }

    #[test]
    fn timing_is_opt_in() {
        let r = run_experiment(&small()).unwrap();
        assert!(r.records.iter().all(|x| x.solver_seconds.is_none()));
        let r = run_experiment(&ExperimentConfig {
            record_timing: true,
            ..small()
        })
        .unwrap();
        assert!(r.records.iter().all(|x| x.solver_seconds.is_some()));
    }
}
