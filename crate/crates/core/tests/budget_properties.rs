use proptest::prelude::*;

use repump_core::budget::{leakage_after_cycles, min_cycles, total_error};
use repump_core::Error;

#[test]
fn leakage_monotonicity_over_grid() {
    for i in 0..=40 {
        for j in 0..=40 {
            let eps0 = i as f64 / 40.0 * 1e-2;
            let eps_l = j as f64 / 40.0 * 1e-2;
            let series: Vec<f64> = (0..40).map(|n| leakage_after_cycles(eps0, eps_l, n)).collect();
            let falling = eps0 >= 1.5 * eps_l;
            for w in series.windows(2) {
                // At eps0 = 1.5 eps_l the series is flat up to rounding.
                let slack = 4.0 * f64::EPSILON * w[0];
                if falling {
                    assert!(w[1] <= w[0] + slack, "eps0={eps0} eps_l={eps_l}");
                } else {
                    assert!(w[1] >= w[0] - slack, "eps0={eps0} eps_l={eps_l}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn min_cycles_is_the_first_passing_count(
        eps0 in 1e-6..1.0f64,
        ratio in 0.0..0.99f64,
        target in 1.0..1e6f64,
    ) {
        // eps_l chosen below the feasibility floor.
        let eps_l = ratio * eps0 / target / 1.5;
        let n = min_cycles(eps0, eps_l, target).unwrap();
        let level = eps0 / target;
        prop_assert!(leakage_after_cycles(eps0, eps_l, n) <= level);
        if n > 0 {
            prop_assert!(leakage_after_cycles(eps0, eps_l, n - 1) > level);
        }
    }

    #[test]
    fn floor_above_level_is_infeasible(eps0 in 1e-6..1.0f64, target in 1.5..1e6f64) {
        let eps_l = (eps0 / target / 1.5 * 1.01).min(1.0);
        prop_assert!(
            matches!(min_cycles(eps0, eps_l, target), Err(Error::Infeasible { .. })),
            "feasible at eps_l={}", eps_l
        );
    }

    #[test]
    fn total_error_is_linear_in_cycles(
        eps0 in 0.0..1e-2f64,
        eps_q in 0.0..1e-3f64,
        eps_l in 0.0..1e-3f64,
        n in 0u32..1000,
    ) {
        let step = total_error(eps0, eps_q, eps_l, n + 1) - total_error(eps0, eps_q, eps_l, n);
        prop_assert!((step - (eps_q + eps_l)).abs() <= 1e-15);
        prop_assert_eq!(total_error(eps0, eps_q, eps_l, 0), eps0);
    }
}
