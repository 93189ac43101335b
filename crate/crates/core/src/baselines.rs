//! Reference precoders and the scheme registry exposed to the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power, CMat, C64};
use crate::precoder::{self, Mode, SolverConfig, SolverState};
use crate::rates::PrecoderSet;

/// Maximum-ratio transmission: `P_k ∝ H_k` with power `rho / K` each, no common stream.
pub fn mrt_precoder(h_hat: &[CMat], rho: f64) -> Result<PrecoderSet> {
    let Some(first) = h_hat.first() else {
        return Err(Error::parameter("k", "need at least one user"));
    };
    let (m, n) = first.shape();
    let per_user = rho / h_hat.len() as f64;
    let private = h_hat
        .iter()
        .map(|h| {
            let p = power(h);
            if p == 0.0 {
                return Err(Error::Degenerate("all-zero channel estimate".into()));
            }
            Ok(h * C64::new((per_user / p).sqrt(), 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    PrecoderSet::new(CMat::zeros(m, n), private, rho)
}

/// Robust WMMSE without a common stream, started from MRT at full power.
pub fn rwmmse_precoder(
    h_hat: &[CMat],
    sigma_e2: &[f64],
    rho: f64,
    sigma_n2: f64,
    cfg: &SolverConfig,
) -> Result<SolverState> {
    let init = mrt_precoder(h_hat, rho)?;
    precoder::run_from(h_hat, sigma_e2, sigma_n2, cfg, init, 1.0, Mode::PrivateOnly)
}

/// Precoding schemes known to the harness. Only `proposed`, `rwmmse` and `mrt`
/// are implemented; the others are listed so that requests for them fail with a
/// clear message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scheme {
    Proposed,
    Rwmmse,
    Mrt,
    Rbd,
    Rrbd,
    Sns,
    WmmseSaa,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Proposed,
        Scheme::Rwmmse,
        Scheme::Mrt,
        Scheme::Rbd,
        Scheme::Rrbd,
        Scheme::Sns,
        Scheme::WmmseSaa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Rwmmse => "rwmmse",
            Scheme::Mrt => "mrt",
            Scheme::Rbd => "rbd",
            Scheme::Rrbd => "rrbd",
            Scheme::Sns => "sns",
            Scheme::WmmseSaa => "wmmse-saa",
        }
    }

    pub fn is_implemented(self) -> bool {
        matches!(self, Scheme::Proposed | Scheme::Rwmmse | Scheme::Mrt)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_owned()
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::parameter("schemes", format!("unknown scheme `{s}`")))
    }
}

/// Output of one precoder design.
#[derive(Debug, Clone)]
pub struct Design {
    pub precoders: PrecoderSet,
    pub iterations: usize,
    pub t: f64,
    pub converged: bool,
    pub boundary_hits: usize,
    pub objective_trace: Vec<f64>,
}

impl From<SolverState> for Design {
    fn from(s: SolverState) -> Self {
        Design {
            precoders: s.precoders,
            iterations: s.iterations,
            t: s.t,
            converged: s.converged,
            boundary_hits: s.boundary_hits,
            objective_trace: s.objective_trace,
        }
    }
}

/// Designs precoders for `scheme` from the transmitter's channel knowledge.
pub fn design(
    scheme: Scheme,
    h_hat: &[CMat],
    sigma_e2: &[f64],
    rho: f64,
    sigma_n2: f64,
    cfg: &SolverConfig,
) -> Result<Design> {
    match scheme {
        Scheme::Proposed => precoder::run(h_hat, sigma_e2, rho, sigma_n2, cfg).map(Design::from),
        Scheme::Rwmmse => rwmmse_precoder(h_hat, sigma_e2, rho, sigma_n2, cfg).map(Design::from),
        Scheme::Mrt => Ok(Design {
            precoders: mrt_precoder(h_hat, rho)?,
            iterations: 0,
            t: 1.0,
            converged: true,
            boundary_hits: 0,
            objective_trace: Vec::new(),
        }),
        other => Err(Error::NotImplemented(other.name().into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_estimation_channel;
    use crate::linalg::complex_gaussian;
    use crate::rates::instantaneous_rates;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mrt_meets_power_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = sample_estimation_channel(8, 2, 4, &[0.1; 4], &mut rng).unwrap();
        let p = mrt_precoder(&set.h_hat, 100.0).unwrap();
        assert!(p.power_error() <= 1e-12);
        assert_eq!(p.common_power(), 0.0);
    }

    #[test]
    fn single_antenna_mrt_reaches_matched_filter_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = complex_gaussian(4, 1, 1.0, &mut rng);
        let rho = 10.0;
        let p = mrt_precoder(std::slice::from_ref(&h), rho).unwrap();
        let r = instantaneous_rates(std::slice::from_ref(&h), &p, 1.0).unwrap();
        let bound = (1.0 + rho * power(&h)).log2();
        assert!((r.sum_rate - bound).abs() < 1e-12);
    }

    #[test]
    fn zero_channel_is_degenerate() {
        assert!(matches!(
            mrt_precoder(&[CMat::zeros(4, 2)], 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rwmmse_has_no_common_stream_and_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let set = sample_estimation_channel(8, 2, 4, &[0.1; 4], &mut rng).unwrap();
            let s = rwmmse_precoder(&set.h_hat, &set.sigma_e2, 100.0, 1.0, &SolverConfig::default()).unwrap();
            assert_eq!(s.precoders.common_power(), 0.0);
            assert_eq!(s.t, 1.0);
            assert!(s.precoders.power_error() <= 1e-9);
            for w in s.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", s.objective_trace);
            }
        }
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("zf".parse::<Scheme>().is_err());
    }

    #[test]
    fn external_baselines_are_stubs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let set = sample_estimation_channel(4, 2, 2, &[0.1; 2], &mut rng).unwrap();
        for s in [Scheme::Rbd, Scheme::Rrbd, Scheme::Sns, Scheme::WmmseSaa] {
            let r = design(s, &set.h_hat, &set.sigma_e2, 10.0, 1.0, &SolverConfig::default());
            assert!(matches!(r, Err(Error::NotImplemented(_))));
        }
    }
}
