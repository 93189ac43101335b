//! True channels and imperfect CSIT.
//!
//! Two CSIT models share one interface. In the estimation model the transmitter
//! sees `H_hat` with `H = H_hat + E`, where the entries of `H_hat` and `E` are
//! i.i.d. circularly-symmetric complex Gaussian with variances `1 - s2` and
//! `s2`. In the quantized model each user feeds back the index of the codeword
//! closest in chordal distance to its channel subspace; the transmitter treats
//! the scaled codeword as the known channel and the remainder as an error of
//! effective per-entry variance `M * gamma / (M - N)`.

use rand::Rng;

use crate::codebook::{quantize_channel, Codebook, Quantization};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMat};

/// One channel realization together with the transmitter's view of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// True channels, one `M x N` matrix per user.
    pub h: Vec<CMat>,
    /// Channels known at the transmitter.
    pub h_hat: Vec<CMat>,
    /// `h - h_hat`.
    pub err: Vec<CMat>,
    /// Per-user error variance.
    pub sigma_e2: Vec<f64>,
}

impl ChannelSet {
    /// `(M, N, K)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (m, n) = self.h[0].shape();
        (m, n, self.h.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.h.len();
        if k == 0 || self.h_hat.len() != k || self.err.len() != k || self.sigma_e2.len() != k {
            return Err(Error::Contract("inconsistent user count in channel set".into()));
        }
        let (m, n) = self.h[0].shape();
        if m <= n || n == 0 {
            return Err(Error::Contract(format!("channel shape {m}x{n} violates M > N >= 1")));
        }
        let all = self.h.iter().chain(&self.h_hat).chain(&self.err);
        if all.into_iter().any(|x| x.shape() != (m, n)) {
            return Err(Error::Contract("channel matrices differ in shape".into()));
        }
        if let Some(s) = self.sigma_e2.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::Contract(format!("error variance {s} outside [0, 1)")));
        }
        Ok(())
    }
}

fn check_dims(m: usize, n: usize, k: usize) -> Result<()> {
    if n == 0 || m <= n {
        return Err(Error::parameter("m", format!("need M > N >= 1, got M={m}, N={n}")));
    }
    if k == 0 {
        return Err(Error::parameter("k", "need at least one user"));
    }
    Ok(())
}

/// Draws one realization of the estimation-error model.
pub fn sample_estimation_channel<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    k: usize,
    sigma_e2: &[f64],
    rng: &mut R,
) -> Result<ChannelSet> {
    check_dims(m, n, k)?;
    if sigma_e2.len() != k {
        return Err(Error::parameter(
            "sigma_e2",
            format!("expected {k} values, got {}", sigma_e2.len()),
        ));
    }
    if let Some(s) = sigma_e2.iter().find(|s| !(0.0..1.0).contains(*s)) {
        return Err(Error::parameter("sigma_e2", format!("{s} outside [0, 1)")));
    }
    let mut set = ChannelSet {
        h: Vec::with_capacity(k),
        h_hat: Vec::with_capacity(k),
        err: Vec::with_capacity(k),
        sigma_e2: sigma_e2.to_vec(),
    };
    for &s2 in sigma_e2 {
        let h_hat = complex_gaussian(m, n, 1.0 - s2, rng);
        let err = complex_gaussian(m, n, s2, rng);
        set.h.push(&h_hat + &err);
        set.h_hat.push(h_hat);
        set.err.push(err);
    }
    Ok(set)
}

/// Effective per-entry error variance `M * gamma / (M - N)` of the quantized model.
pub fn quantization_error_variance(m: usize, n: usize, gamma: f64) -> f64 {
    m as f64 * gamma / (m - n) as f64
}

/// Mean gain `sqrt(M - M^2 gamma / (M - N))` applied to the selected codeword.
pub fn quantization_channel_gain(m: usize, n: usize, gamma: f64) -> f64 {
    let m_f = m as f64;
    (m_f - m_f * quantization_error_variance(m, n, gamma)).max(0.0).sqrt()
}

/// Per-user feedback codebooks.
#[derive(Debug, Clone)]
pub struct QuantizedFeedback {
    codebooks: Vec<Codebook>,
}

impl QuantizedFeedback {
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, k: usize, bits: u32, rng: &mut R) -> Result<Self> {
        check_dims(m, n, k)?;
        let codebooks = (0..k)
            .map(|_| Codebook::random(m, n, bits, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantizedFeedback { codebooks })
    }

    pub fn from_codebooks(codebooks: Vec<Codebook>) -> Result<Self> {
        let Some(first) = codebooks.first() else {
            return Err(Error::parameter("k", "need at least one user"));
        };
        if codebooks.iter().any(|c| c.shape() != first.shape()) {
            return Err(Error::Contract("codebooks differ in shape".into()));
        }
        Ok(QuantizedFeedback { codebooks })
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn quantize(&self, h: &[CMat]) -> Result<Vec<Quantization>> {
        if h.len() != self.codebooks.len() {
            return Err(Error::Contract(format!(
                "{} channels for {} codebooks",
                h.len(),
                self.codebooks.len()
            )));
        }
        h.iter()
            .zip(&self.codebooks)
            .map(|(h, cb)| quantize_channel(h, cb))
            .collect()
    }

    /// Mean of `distortion / N` over `draws` fresh channel draws and all users.
    pub fn estimate_distortion<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> Result<f64> {
        let (m, n) = self.codebooks[0].shape();
        let mut mean = 0.0;
        let mut count = 0usize;
        for _ in 0..draws {
            let h: Vec<_> = (0..self.codebooks.len())
                .map(|_| complex_gaussian(m, n, 1.0, rng))
                .collect();
            for q in self.quantize(&h)? {
                count += 1;
                mean += (q.distortion / n as f64 - mean) / count as f64;
            }
        }
        Ok(mean)
    }

    /// Builds the transmitter's view of true channels `h` given a distortion estimate.
    pub fn observe(&self, h: Vec<CMat>, gamma: f64) -> Result<ChannelSet> {
        let (m, n) = self.codebooks[0].shape();
        let s2 = quantization_error_variance(m, n, gamma);
        if !(0.0..1.0).contains(&s2) {
            return Err(Error::parameter(
                "bits",
                format!("distortion {gamma:.4} maps to error variance {s2:.4} outside [0, 1); use more feedback bits"),
            ));
        }
        let gain = quantization_channel_gain(m, n, gamma);
        let quantized = self.quantize(&h)?;
        let h_hat: Vec<CMat> = quantized.iter().map(|q| q.codeword.scale(gain)).collect();
        let err = h.iter().zip(&h_hat).map(|(h, hh)| h - hh).collect();
        Ok(ChannelSet {
            sigma_e2: vec![s2; h.len()],
            h,
            h_hat,
            err,
        })
    }
}

/// Draws one quantized-CSIT realization with fresh random codebooks. The
/// returned distortion estimate is the mean of `distortion / N` over the users
/// of this draw.
pub fn sample_quantized_csit<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    k: usize,
    bits: u32,
    rng: &mut R,
) -> Result<(ChannelSet, f64)> {
    let feedback = QuantizedFeedback::random(m, n, k, bits, rng)?;
    let h: Vec<_> = (0..k).map(|_| complex_gaussian(m, n, 1.0, rng)).collect();
    let q = feedback.quantize(&h)?;
    let gamma = q.iter().map(|q| q.distortion).sum::<f64>() / (k * n) as f64;
    let set = feedback.observe(h, gamma)?;
    Ok((set, gamma))
}
