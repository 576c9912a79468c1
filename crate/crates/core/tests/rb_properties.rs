use proptest::prelude::*;

use repump_core::rb::{
    bootstrap_ci, bootstrap_ci_with_baseline, expected_survival, fit_decay, interleaved_error, simulate_rb, RbConfig,
};

#[test]
fn fitted_rate_matches_depolarizing_oracle() {
    for (eps, seed) in [(1e-3, 1), (3e-3, 2)] {
        let cfg = RbConfig {
            shots: 100_000,
            error_per_clifford: eps,
            seed,
            ..RbConfig::default()
        };
        let fit = fit_decay(&simulate_rb(&cfg, false).unwrap()).unwrap();
        let p = 1.0 - 2.0 * eps;
        assert!((fit.rate - p).abs() <= 3.0 * fit.rate_err, "eps {eps}: {fit:?}");
        assert!(fit.amplitude + fit.baseline <= 1.0 + 1e-3);
    }
}

#[test]
fn simulated_survival_matches_its_expectation() {
    let cfg = RbConfig {
        shots: 20_000,
        error_per_clifford: 2e-3,
        interleaved_extra_error: 1e-3,
        interleaved_leak_rate: 1e-3,
        sequences_per_length: 4,
        seed: 8,
        ..RbConfig::default()
    };
    for interleaved in [false, true] {
        for row in simulate_rb(&cfg, interleaved).unwrap().rows {
            let e = expected_survival(&cfg, row.length, interleaved);
            let sigma = (e * (1.0 - e) / row.shots as f64).sqrt();
            assert!((row.survival - e).abs() <= 4.5 * sigma, "{row:?} vs {e}");
        }
    }
}

#[test]
fn interleaved_estimate_is_consistent() {
    let injected = 1e-3;
    let cfg = RbConfig {
        shots: 100_000,
        error_per_clifford: 1e-3,
        interleaved_extra_error: injected,
        seed: 4,
        ..RbConfig::default()
    };
    let r = fit_decay(&simulate_rb(&cfg, false).unwrap()).unwrap();
    let i = fit_decay(&simulate_rb(&cfg, true).unwrap()).unwrap();
    let eps = interleaved_error(r.rate, i.rate).unwrap();
    let sigma = 0.5 * ((i.rate_err / r.rate).powi(2) + (i.rate * r.rate_err / r.rate.powi(2)).powi(2)).sqrt();
    assert!((eps - injected).abs() <= 4.0 * sigma, "{eps} ± {sigma}");
    assert!(sigma < 1e-4);
}

#[test]
fn bootstrap_is_deterministic() {
    let cfg = RbConfig {
        shots: 50,
        error_per_clifford: 1e-3,
        interleaved_extra_error: 5e-4,
        ..RbConfig::default()
    };
    let a = simulate_rb(&cfg, false).unwrap();
    let b = simulate_rb(&cfg, true).unwrap();
    let first = bootstrap_ci(&a, &b, 120, 0.68, 9).unwrap();
    let second = bootstrap_ci(&a, &b, 120, 0.68, 9).unwrap();
    assert_eq!(first, second);
    let other = bootstrap_ci(&a, &b, 120, 0.68, 10).unwrap();
    assert_ne!(first, other);
}

#[test]
fn bootstrap_coverage_is_near_nominal() {
    let injected = 5e-4;
    let mut covered = 0;
    for seed in 0..50 {
        let cfg = RbConfig {
            shots: 200,
            error_per_clifford: 5e-4,
            interleaved_extra_error: injected,
            seed: 300 + seed,
            ..RbConfig::default()
        };
        let a = simulate_rb(&cfg, false).unwrap();
        let b = simulate_rb(&cfg, true).unwrap();
        let ci = bootstrap_ci_with_baseline(&a, &b, 200, 0.68, seed, Some(0.5)).unwrap();
        covered += ci.contains(injected) as u32;
    }
    assert!((25..=43).contains(&covered), "{covered}/50");
}

proptest! {
    #[test]
    fn expected_survival_never_increases_with_length(
        eps in 0.0..0.5f64,
        extra in 0.0..0.5f64,
        leak in 0.0..0.5f64,
        m in 1usize..2000,
    ) {
        let cfg = RbConfig {
            error_per_clifford: eps,
            interleaved_extra_error: extra,
            interleaved_leak_rate: leak,
            ..RbConfig::default()
        };
        for interleaved in [false, true] {
            prop_assert!(expected_survival(&cfg, m + 1, interleaved) <= expected_survival(&cfg, m, interleaved));
        }
    }
}
