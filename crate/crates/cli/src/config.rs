//! Resolution of experiment settings: built-in defaults, then the TOML config
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use rsma_core::baselines::Scheme;
use rsma_core::evaluator::{CsitModel, ExperimentConfig};
use rsma_core::{Error, Result};
use serde::Deserialize;

/// A grid given either as text (`start:step:stop` or `a,b,c`) or as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Text(String),
    List(Vec<f64>),
    Single(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SchemeSpec {
    Text(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Csit {
    Estimation,
    Quantized,
}

/// Every setting that can come from a config file or a flag.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub snr_db: Option<GridSpec>,
    pub sigma_e2: Option<GridSpec>,
    pub draws: Option<usize>,
    pub schemes: Option<SchemeSpec>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub obj_tol: Option<f64>,
    pub bisect_tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub csit: Option<Csit>,
    pub bits: Option<u32>,
    pub threads: Option<usize>,
    pub timing: Option<bool>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parameter("config", format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::parameter("config", format!("{}: {e}", path.display())))
    }

    /// Values in `top` win over values in `self`.
    pub fn overlay(mut self, top: &Settings) -> Self {
        overlay!(
            self, top, m, n, k, snr_db, sigma_e2, draws, schemes, seed, max_iters, obj_tol, bisect_tol, out_dir,
            format, csit, bits, threads, timing
        );
        self
    }
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_grid(key: &'static str, text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parameter(key, format!("`{s}` is not a number")))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, step, stop] = parts[..] else {
            return Err(Error::parameter(key, format!("`{text}` is not start:step:stop")));
        };
        let (start, step, stop) = (number(start)?, number(step)?, number(stop)?);
        if step <= 0.0 || stop < start {
            return Err(Error::parameter(
                key,
                format!("`{text}` needs step > 0 and start <= stop"),
            ));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(Error::parameter(key, format!("`{text}` has {count} points")));
        }
        return Ok((0..count).map(|i| start + step * i as f64).collect());
    }
    let values = text.split(',').map(number).collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::parameter(key, "empty grid"));
    }
    Ok(values)
}

fn grid(key: &'static str, spec: &GridSpec) -> Result<Vec<f64>> {
    match spec {
        GridSpec::Text(t) => parse_grid(key, t),
        GridSpec::List(v) if v.is_empty() => Err(Error::parameter(key, "empty grid")),
        GridSpec::List(v) => Ok(v.clone()),
        GridSpec::Single(v) => Ok(vec![*v]),
    }
}

fn schemes(spec: &SchemeSpec) -> Result<Vec<Scheme>> {
    let names: Vec<String> = match spec {
        SchemeSpec::Text(t) => t.split(',').map(str::to_owned).collect(),
        SchemeSpec::List(v) => v.clone(),
    };
    let mut out = Vec::new();
    for name in names.iter().filter(|s| !s.trim().is_empty()) {
        let s: Scheme = name.parse()?;
        if !s.is_implemented() {
            return Err(Error::parameter("schemes", format!("scheme `{s}` is not implemented")));
        }
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Fully resolved run: experiment configuration plus output options.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
}

pub fn resolve(s: &Settings) -> Result<Resolved> {
    let d = ExperimentConfig::default();
    let mut solver = d.solver.clone();
    if let Some(v) = s.max_iters {
        solver.max_iters = v;
    }
    if let Some(v) = s.obj_tol {
        solver.obj_tol = v;
    }
    if let Some(v) = s.bisect_tol {
        solver.bisect_tol = v;
    }
    let csit = match (s.csit.unwrap_or(Csit::Estimation), s.bits) {
        (Csit::Estimation, _) => CsitModel::Estimation,
        (Csit::Quantized, Some(bits)) => CsitModel::Quantized { bits },
        (Csit::Quantized, None) => return Err(Error::parameter("bits", "--csit quantized needs --bits")),
    };
    let experiment = ExperimentConfig {
        m: s.m.unwrap_or(d.m),
        n: s.n.unwrap_or(d.n),
        k: s.k.unwrap_or(d.k),
        snr_db: s
            .snr_db
            .as_ref()
            .map(|g| grid("snr_db", g))
            .transpose()?
            .unwrap_or(d.snr_db),
        sigma_e2: s
            .sigma_e2
            .as_ref()
            .map(|g| grid("sigma_e2", g))
            .transpose()?
            .unwrap_or(d.sigma_e2),
        draws: s.draws.unwrap_or(d.draws),
        schemes: s.schemes.as_ref().map(schemes).transpose()?.unwrap_or(d.schemes),
        seed: s.seed.unwrap_or(d.seed),
        solver,
        csit,
        keep_traces: false,
        record_timing: s.timing.unwrap_or(false),
    };
    experiment.validate()?;
    let out_dir = s
        .out_dir
        .clone()
        .ok_or_else(|| Error::parameter("out_dir", "--out-dir is required"))?;
    if !out_dir.is_dir() {
        return Err(Error::parameter(
            "out_dir",
            format!("{} does not exist or is not a directory", out_dir.display()),
        ));
    }
    if s.threads == Some(0) {
        return Err(Error::parameter("threads", "must be at least 1"));
    }
    Ok(Resolved {
        experiment,
        out_dir,
        format: s.format.unwrap_or(Format::Csv),
        threads: s.threads,
    })
}
