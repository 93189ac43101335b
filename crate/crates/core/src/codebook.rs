//! Subspace codebooks for limited-feedback CSIT and chordal-distance quantization.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, identity, max_abs, real_trace, CMat, C64};

/// Orthonormality residual above which a matrix is not treated as semi-unitary.
pub const SEMI_UNITARY_TOL: f64 = 1e-8;
/// Residual every stored codeword must meet.
pub const CODEWORD_TOL: f64 = 1e-10;
pub const MAX_BITS: u32 = 14;
/// N-th singular value below which a channel is considered rank deficient.
pub const RANK_TOL: f64 = 1e-12;

const MAGIC: &[u8; 7] = b"RSMACB1";

/// `max |X^H X - I|`.
pub fn orthonormality_residual(x: &CMat) -> f64 {
    max_abs(&(x.adjoint() * x - identity(x.ncols())))
}

/// A set of `2^B` semi-unitary `M x N` codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Vec<CMat>,
    bits: u32,
}

impl Codebook {
    /// Random codebook: each codeword is the thin-QR `Q` factor of an i.i.d.
    /// complex Gaussian `M x N` matrix.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, bits: u32, rng: &mut R) -> Result<Self> {
        check_bits(bits)?;
        if m <= n || n == 0 {
            return Err(Error::parameter("m", format!("need M > N >= 1, got M={m}, N={n}")));
        }
        let entries = (0..1usize << bits)
            .map(|_| complex_gaussian(m, n, 1.0, rng).qr().q())
            .collect();
        Self::from_entries(entries, bits)
    }

    pub fn from_entries(entries: Vec<CMat>, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if entries.len() != 1usize << bits {
            return Err(Error::Contract(format!(
                "codebook with B={bits} needs {} entries, got {}",
                1usize << bits,
                entries.len()
            )));
        }
        let shape = entries[0].shape();
        for (i, c) in entries.iter().enumerate() {
            if c.shape() != shape {
                return Err(Error::Contract(format!("codeword {i} has shape {:?}", c.shape())));
            }
            let r = orthonormality_residual(c);
            if r > CODEWORD_TOL {
                return Err(Error::Contract(format!(
                    "codeword {i} is not semi-unitary (residual {r:.2e})"
                )));
            }
        }
        Ok(Codebook { entries, bits })
    }

    pub fn entries(&self) -> &[CMat] {
        &self.entries
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dimensions `(M, N)` of every codeword.
    pub fn shape(&self) -> (usize, usize) {
        self.entries[0].shape()
    }

    /// Writes the binary blob: magic `RSMACB1`, then little-endian `u32` M, N, B,
    /// `u64` seed, then every codeword row-major as `f32` (re, im) pairs.
    pub fn write_to<W: Write>(&self, mut w: W, seed: u64) -> Result<()> {
        let (m, n) = self.shape();
        w.write_all(MAGIC)?;
        w.write_all(&(m as u32).to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&self.bits.to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        for c in &self.entries {
            for r in 0..m {
                for col in 0..n {
                    let z = c[(r, col)];
                    w.write_all(&(z.re as f32).to_le_bytes())?;
                    w.write_all(&(z.im as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads a blob written by [`Codebook::write_to`]. Entries are re-orthonormalized
    /// since single precision storage does not meet [`CODEWORD_TOL`].
    pub fn read_from<R: Read>(mut r: R) -> Result<(Self, u64)> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad codebook magic".into()));
        }
        let m = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let bits = read_u32(&mut r)?;
        check_bits(bits)?;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let seed = u64::from_le_bytes(seed);
        let mut entries = Vec::with_capacity(1 << bits);
        for _ in 0..1usize << bits {
            let mut c = CMat::zeros(m, n);
            for row in 0..m {
                for col in 0..n {
                    let re = read_f32(&mut r)? as f64;
                    let im = read_f32(&mut r)? as f64;
                    c[(row, col)] = C64::new(re, im);
                }
            }
            entries.push(c.qr().q());
        }
        Ok((Self::from_entries(entries, bits)?, seed))
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::parameter(
            "bits",
            format!("B must be in 1..={MAX_BITS}, got {bits}"),
        ));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

/// Chordal distance `N - tr(X^H C C^H X)` between two semi-unitary matrices.
pub fn chordal_distance(x: &CMat, c: &CMat) -> Result<f64> {
    if x.shape() != c.shape() {
        return Err(Error::Contract(format!(
            "shape mismatch {:?} vs {:?}",
            x.shape(),
            c.shape()
        )));
    }
    for (name, a) in [("first", x), ("second", c)] {
        let r = orthonormality_residual(a);
        if r > SEMI_UNITARY_TOL {
            return Err(Error::Contract(format!(
                "{name} argument is not semi-unitary (residual {r:.2e})"
            )));
        }
    }
    let xc = x.adjoint() * c;
    let overlap = real_trace(&(&xc * xc.adjoint()), "chordal overlap")?;
    let n = x.ncols() as f64;
    Ok((n - overlap).clamp(0.0, n))
}

/// Orthonormal basis of the column space of a rank-N `M x N` channel, i.e. the
/// eigenvectors of `H H^H` for its N non-zero eigenvalues.
pub fn dominant_subspace(h: &CMat) -> Result<CMat> {
    let svd = h.clone().svd(true, false);
    let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest >= RANK_TOL) {
        return Err(Error::Degenerate(format!(
            "channel is rank deficient (smallest singular value {smallest:.2e})"
        )));
    }
    Ok(svd.u.expect("left singular vectors requested"))
}

/// Outcome of quantizing one user's channel.
#[derive(Debug, Clone)]
pub struct Quantization {
    pub index: usize,
    pub codeword: CMat,
    pub distortion: f64,
}

/// Selects the codeword closest in chordal distance to the channel subspace.
/// Ties go to the lowest index.
pub fn quantize_channel(h: &CMat, codebook: &Codebook) -> Result<Quantization> {
    if codebook.is_empty() {
        return Err(Error::Contract("empty codebook".into()));
    }
    if h.shape() != codebook.shape() {
        return Err(Error::Contract(format!(
            "channel shape {:?} does not match codebook {:?}",
            h.shape(),
            codebook.shape()
        )));
    }
    let subspace = dominant_subspace(h)?;
    let mut best = (0, f64::INFINITY);
    for (i, c) in codebook.entries().iter().enumerate() {
        let d = chordal_distance(&subspace, c)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(Quantization {
        index: best.0,
        codeword: codebook.entries()[best.0].clone(),
        distortion: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn semi_unitary(m: usize, n: usize, rng: &mut ChaCha8Rng) -> CMat {
        complex_gaussian(m, n, 1.0, rng).qr().q()
    }

    #[test]
    fn random_codebook_is_semi_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cb = Codebook::random(8, 2, 5, &mut rng).unwrap();
        assert_eq!(cb.len(), 32);
        for c in cb.entries() {
            assert!(orthonormality_residual(c) <= CODEWORD_TOL);
        }
    }

    #[test]
    fn bits_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            Codebook::random(4, 2, 0, &mut rng),
            Err(Error::Parameter { key: "bits", .. })
        ));
        assert!(matches!(
            Codebook::random(4, 2, 15, &mut rng),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn distance_to_self_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = semi_unitary(8, 2, &mut rng);
        assert!(chordal_distance(&x, &x).unwrap() < 1e-12);
    }

    #[test]
    fn orthogonal_subspaces_are_at_distance_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = semi_unitary(6, 4, &mut rng);
        let x = q.columns(0, 2).into_owned();
        let y = q.columns(2, 2).into_owned();
        assert!((chordal_distance(&x, &y).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = semi_unitary(8, 2, &mut rng);
            let y = semi_unitary(8, 2, &mut rng);
            let d1 = chordal_distance(&x, &y).unwrap();
            let d2 = chordal_distance(&y, &x).unwrap();
            assert!((d1 - d2).abs() <= 1e-12);
        }
    }

    #[test]
    fn non_semi_unitary_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = semi_unitary(8, 2, &mut rng);
        let y = complex_gaussian(8, 2, 1.0, &mut rng);
        assert!(matches!(chordal_distance(&x, &y), Err(Error::Contract(_))));
    }

    #[test]
    fn self_quantization_has_zero_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cb = Codebook::random(4, 2, 3, &mut rng).unwrap();
        // Any channel spanning codeword 5 quantizes to it.
        let mix = complex_gaussian(2, 2, 1.0, &mut rng);
        let h = &cb.entries()[5] * mix;
        let q = quantize_channel(&h, &cb).unwrap();
        assert_eq!(q.index, 5);
        assert!(q.distortion < 1e-12);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = semi_unitary(4, 2, &mut rng);
        let cb = Codebook::from_entries(vec![c.clone(), c.clone()], 1).unwrap();
        assert_eq!(quantize_channel(&c, &cb).unwrap().index, 0);
    }

    #[test]
    fn rank_deficient_channel_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cb = Codebook::random(4, 2, 2, &mut rng).unwrap();
        let col = complex_gaussian(4, 1, 1.0, &mut rng);
        let h = crate::linalg::hstack(&[col.clone(), col]);
        assert!(matches!(quantize_channel(&h, &cb), Err(Error::Degenerate(_))));
    }

    #[test]
    fn blob_roundtrip_preserves_codewords() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cb = Codebook::random(4, 2, 3, &mut rng).unwrap();
        let mut buf = Vec::new();
        cb.write_to(&mut buf, 77).unwrap();
        assert_eq!(&buf[..7], b"RSMACB1");
        assert_eq!(buf.len(), 7 + 12 + 8 + 8 * 4 * 2 * 8);
        let (back, seed) = Codebook::read_from(buf.as_slice()).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(back.bits(), 3);
        for (a, b) in cb.entries().iter().zip(back.entries()) {
            // Same subspace up to single-precision storage.
            assert!(chordal_distance(a, b).unwrap() < 1e-6);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        assert!(matches!(
            Codebook::read_from(&b"RSMACB0xxxxxxxxxxxxxxxxxxxx"[..]),
            Err(Error::Format(_))
        ));
    }
}
