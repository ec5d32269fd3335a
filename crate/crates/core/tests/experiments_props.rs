use std::collections::HashSet;
use std::f64::consts::PI;

use proptest::prelude::*;
use subnyq_core::bounds::freq_rmse_rel_bound;
use subnyq_core::experiments::{
    match_tones, run_sweep, run_trial, sweep_points, trial_seed, ExperimentConfig, Method, SnrDb,
    ToneOutcome,
};

fn single_tone(snr_db: f64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        tone_frequencies: Some(vec![1e8]),
        sample_rate_grid: Some(vec![133e6]),
        snr_db_grid: vec![SnrDb(snr_db)],
        trials_per_point: trials,
        master_seed: 7,
        methods: vec![Method::Sngem],
        ..ExperimentConfig::default()
    }
}

#[test]
fn noiseless_omp_error_is_nearest_grid_distance() {
    let cfg = ExperimentConfig {
        tone_count_range: [1, 1],
        compression_grid: Some(vec![1.0]),
        snr_db_grid: vec![SnrDb(f64::INFINITY)],
        trials_per_point: 20,
        master_seed: 3,
        methods: vec![Method::Omp],
        ..ExperimentConfig::default()
    };
    let point = sweep_points(&cfg)[0];
    let spacing = cfg.band_limit / cfg.omp.grid_size as f64;
    for trial in 0..cfg.trials_per_point {
        let rec = &run_trial(&cfg, &point, trial).unwrap()[0];
        let t = &rec.tones[0];
        let f = t.f_true;
        let nearest = (f / spacing).round() * spacing;
        let err = (t.f_hat.unwrap() - f).abs();
        assert!(
            (err - (nearest - f).abs()).abs() < 1e-6,
            "trial {trial}: f {f} err {err}"
        );
    }
}

#[test]
fn single_tone_rmse_tracks_bound() {
    let cfg = single_tone(30.0, 500);
    let (summary, _) = run_sweep(&cfg).unwrap();
    let row = &summary.rows[0];
    let bound = freq_rmse_rel_bound(1024, 1e3);
    assert!((row.crb_rel - bound).abs() < 1e-15);
    let ratio = row.rmse_f_rel / bound;
    // 500 trials give a ~3% standard error on the RMSE.
    assert!((0.9..=1.3).contains(&ratio), "rmse/crb {ratio}");
}

#[test]
fn doubling_trials_is_standard_error_consistent() {
    let t = 200;
    let (a, _) = run_sweep(&single_tone(25.0, t)).unwrap();
    let (b, _) = run_sweep(&single_tone(25.0, 2 * t)).unwrap();
    let (ra, rb) = (a.rows[0].rmse_f_rel, b.rows[0].rmse_f_rel);
    assert!((ra - rb).abs() < 3.0 * ra / (t as f64).sqrt(), "{ra} vs {rb}");
}

#[test]
fn sweep_is_a_pure_function_of_config() {
    let cfg = ExperimentConfig {
        tone_count_range: [2, 4],
        snr_db_grid: vec![SnrDb(20.0), SnrDb(40.0)],
        compression_grid: Some(vec![8.0, 12.0]),
        trials_per_point: 3,
        n_samples: 256,
        master_seed: 11,
        ..ExperimentConfig::default()
    };
    let strip = |mut v: Vec<subnyq_core::experiments::TrialRecord>| {
        v.iter_mut().for_each(|r| r.wall_time_s = None);
        v
    };
    let (sa, ra) = run_sweep(&cfg).unwrap();
    let (sb, rb) = run_sweep(&cfg).unwrap();
    assert_eq!(strip(ra), strip(rb));
    assert_eq!(format!("{sa:?}"), format!("{sb:?}"));
}

#[test]
fn trial_seeds_pairwise_distinct() {
    let mut seen = HashSet::new();
    for point in 0..50 {
        for trial in 0..2000 {
            assert!(seen.insert(trial_seed(1, point, trial)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matching_is_relabel_symmetric(
        truth in prop::collection::vec(0.0f64..1e9, 1..8),
        est in prop::collection::vec(0.0f64..1e9, 0..10),
        rot_t in 0usize..8,
        rot_e in 0usize..10,
    ) {
        let pairs = |t: &[f64], e: &[f64]| {
            let mut p: Vec<(u64, u64)> = match_tones(t, e)
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.map(|j| (t[i].to_bits(), e[j].to_bits())))
                .collect();
            p.sort_unstable();
            p
        };
        let m = match_tones(&truth, &est);
        let used: Vec<usize> = m.iter().flatten().copied().collect();
        prop_assert_eq!(used.iter().collect::<HashSet<_>>().len(), used.len());
        prop_assert_eq!(used.len(), truth.len().min(est.len()));

        let mut t2 = truth.clone();
        t2.rotate_left(rot_t % truth.len());
        t2.reverse();
        let mut e2 = est.clone();
        if !e2.is_empty() {
            e2.rotate_left(rot_e % est.len());
        }
        prop_assert_eq!(pairs(&truth, &est), pairs(&t2, &e2));
    }

    #[test]
    fn phase_error_is_wrapped(phi in -50.0f64..50.0, hat in -50.0f64..50.0) {
        let o = ToneOutcome {
            f_true: 1.0,
            a_true: 1.0,
            phi_true: phi,
            f_hat: Some(1.0),
            a_hat: Some(1.0),
            phi_hat: Some(hat),
        };
        let e = o.phase_error().unwrap();
        prop_assert!((-PI..PI).contains(&e));
        let k = ((hat - phi) - e) / (2.0 * PI);
        prop_assert!((k - k.round()).abs() < 1e-9);
    }
}
