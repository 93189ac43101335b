use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsma_core::baselines::{design, Scheme};
use rsma_core::channel::{sample_estimation_channel, QuantizedFeedback};
use rsma_core::codebook::{chordal_distance, Codebook};
use rsma_core::precoder::SolverConfig;
use rsma_core::rates::instantaneous_rates;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_scheme_meets_the_power_budget(
        seed in any::<u64>(),
        k in 1usize..=3,
        snr_db in 0.0f64..30.0,
        sigma_e2 in 0.0f64..0.5,
    ) {
        let (m, n) = (4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = sample_estimation_channel(m, n, k, &vec![sigma_e2; k], &mut rng).unwrap();
        let rho = 10f64.powf(snr_db / 10.0);
        let cfg = SolverConfig { max_iters: 30, ..SolverConfig::default() };
        for scheme in [Scheme::Proposed, Scheme::Rwmmse, Scheme::Mrt] {
            let d = design(scheme, &ch.h_hat, &ch.sigma_e2, rho, 1.0, &cfg).unwrap();
            prop_assert!(d.precoders.power_error() <= 1e-9 * rho, "{scheme}: {}", d.precoders.power_error());
            prop_assert!((0.0..=1.0).contains(&d.t));
            let r = instantaneous_rates(&ch.h, &d.precoders, 1.0).unwrap();
            prop_assert!(r.sum_rate.is_finite() && r.sum_rate >= 0.0);
            prop_assert!(r.private.iter().all(|&x| x >= -1e-12));
        }
    }
}

#[test]
fn codebook_blob_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cb = Codebook::random(6, 2, 4, &mut rng).unwrap();
    let mut blob = Vec::new();
    cb.write_to(&mut blob, 42).unwrap();
    assert_eq!(blob.len(), 7 + 4 * 3 + 8 + 16 * 6 * 2 * 8);
    let (back, seed) = Codebook::read_from(blob.as_slice()).unwrap();
    assert_eq!(seed, 42);
    assert_eq!(back.shape(), (6, 2));
    assert_eq!(back.bits(), 4);
    for (a, b) in cb.entries().iter().zip(back.entries()) {
        // same subspace up to single-precision storage
        assert!(chordal_distance(a, b).unwrap() < 1e-5);
    }
    blob[0] ^= 0xff;
    assert!(Codebook::read_from(blob.as_slice()).is_err());
    assert!(Codebook::read_from(&blob[..20]).is_err());
}

#[test]
fn quantization_picks_the_closest_codeword() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fb = QuantizedFeedback::random(4, 1, 2, 3, &mut rng).unwrap();
    let ch = sample_estimation_channel(4, 1, 2, &[0.0, 0.0], &mut rng).unwrap();
    let q = fb.quantize(&ch.h).unwrap();
    for (k, qk) in q.iter().enumerate() {
        let u = rsma_core::codebook::dominant_subspace(&ch.h[k]).unwrap();
        let best = fb.codebooks()[k]
            .entries()
            .iter()
            .map(|c| chordal_distance(&u, c).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((qk.distortion - best).abs() < 1e-12);
    }
}
