use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use subnyq_core::bounds::{
    amplitude_crb, fisher_information, freq_crb_dual, gradient_check, ratio_relvar,
    OperatingPoint,
};
use subnyq_core::linalg::{coeffs_to_amp_phase, least_squares, tone_basis};
use subnyq_core::signal::ToneParams;

#[test]
fn ls_amplitude_variance_matches_bound() {
    // Matched-filter LS on 1e5 noise draws, A = 1, SNR = 100, N = 1024.
    let n = 1024;
    let snr: f64 = 100.0;
    let sigma = (0.5 / snr).sqrt();
    let f = 0.1234;
    let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let basis = tone_basis(&times, &[f]);
    let clean: Vec<f64> = times.iter().map(|&t| (TAU * f * t + 0.4).cos()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, sigma).unwrap();
    let draws = 100_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        let y = nalgebra::DVector::from_iterator(n, clean.iter().map(|c| c + normal.sample(&mut rng)));
        let c = least_squares(&basis, &y, 1e-12).unwrap();
        let (a, _) = coeffs_to_amp_phase(c[0], c[1]);
        sum += (a - 1.0).powi(2);
    }
    let op = OperatingPoint::new(n, snr, f, 1.0).unwrap();
    let bound = amplitude_crb(&op, sigma).relative;
    assert!((bound - 9.765625e-6).abs() < 1e-12);
    let ratio = sum / draws as f64 / bound;
    assert!((ratio - 1.0).abs() < 0.03, "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn three_db_structure(n in 2usize..1_000_000, snr in 1e-3f64..1e8, f in 1.0f64..1e10, a in 1e-3f64..1e3) {
        let r = freq_crb_dual(&OperatingPoint::new(n, snr, f, a).unwrap());
        prop_assert_eq!(r.freq_relvar_bound, 2.0 * r.freq_relvar_single_channel);
        prop_assert!((r.penalty_db - 3.0103).abs() < 1e-4);
        let rr = 1.0 / (TAU * f);
        prop_assert!((r.ratio_var_bound / (r.ratio_relvar_bound * rr * rr) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance_and_monotonicity(n in 2usize..100_000, snr in 1e-2f64..1e6, f in 1e3f64..1e9) {
        let a = freq_crb_dual(&OperatingPoint::new(2 * n, snr / 2.0, f, 1.0).unwrap());
        let b = freq_crb_dual(&OperatingPoint::new(n, snr, f, 1.0).unwrap());
        prop_assert!((a.freq_relvar_bound / b.freq_relvar_bound - 1.0).abs() < 1e-12);
        let more_n = freq_crb_dual(&OperatingPoint::new(n + 1, snr, f, 1.0).unwrap());
        let more_snr = freq_crb_dual(&OperatingPoint::new(n, snr * 1.01, f, 1.0).unwrap());
        for c in [&more_n, &more_snr] {
            prop_assert!(c.freq_relvar_bound < b.freq_relvar_bound);
            prop_assert!(c.amp_relvar_bound < b.amp_relvar_bound);
            prop_assert!(c.ratio_relvar_bound < b.ratio_relvar_bound);
        }
    }

    #[test]
    fn ratio_relvar_symmetric_additive(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        prop_assert_eq!(ratio_relvar(a, b), ratio_relvar(b, a));
        prop_assert!((ratio_relvar(a + b, c) - (ratio_relvar(a, c) + b)).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences(
        a in 0.1f64..10.0,
        f in 1e6f64..1e9,
        phase in -3.1f64..3.1,
        n in 8usize..64,
    ) {
        // Keep f·duration moderate so the 1e-6 central step is not
        // truncation-limited.
        let fs = 133e6;
        prop_assume!(f * n as f64 / fs < 250.0);
        let tone = ToneParams::new(a, f, phase).unwrap();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        prop_assert!(gradient_check(&tone, &times, 1e-6) < 1e-6);
    }

    #[test]
    fn fim_is_symmetric(a in 0.1f64..10.0, f in 1e6f64..1e9, phase in -3.1f64..3.1) {
        let tone = ToneParams::new(a, f, phase).unwrap();
        let times: Vec<f64> = (0..256).map(|i| i as f64 / 133e6).collect();
        let r = fisher_information(&tone, &times, 0.1, TAU * f * 0.1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let scale = (r.matrix[i][i] * r.matrix[j][j]).sqrt();
                prop_assert!((r.matrix[i][j] - r.matrix[j][i]).abs() <= 1e-12 * scale);
            }
        }
    }
}
