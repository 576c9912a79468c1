use repump_core::atomic::{AtomicConstants, BranchingTable};
use repump_core::repump::{
    apply_cycles, run_monte_carlo, EventModel, Level, PopulationVector, RepumpConfig, TransferOrder,
};

fn max_pull(config: &RepumpConfig, constants: &AtomicConstants) -> f64 {
    let table = BranchingTable::default();
    let exact = EventModel::new(config, constants, &table).unwrap().expected_trajectory();
    let mc = run_monte_carlo(config, constants, &table).unwrap();
    let n = config.trials as f64;
    let mut worst: f64 = 0.0;
    for (p, e) in mc.points.iter().zip(&exact) {
        assert!((p.populations.iter().sum::<f64>() + mc.shelf[p.cycle] - 1.0).abs() < 1e-12);
        for k in 0..4 {
            let sigma = (e[k] * (1.0 - e[k]) / n).sqrt();
            let dev = (p.populations[k] - e[k]).abs();
            if sigma == 0.0 {
                assert_eq!(dev, 0.0, "cycle {} level {k}", p.cycle);
            } else {
                worst = worst.max(dev / sigma);
            }
        }
    }
    worst
}

#[test]
fn monte_carlo_matches_exact_expectation() {
    let noisy = RepumpConfig {
        transfer_fidelity: 0.85,
        pol_impurity_935: 0.3,
        n_cycles: 8,
        trials: 100_000,
        seed: 21,
        prep_error: 0.02,
        readout_error: 0.01,
        ..RepumpConfig::default()
    };
    for order in [TransferOrder::Sequential, TransferOrder::Simultaneous] {
        for cleanup in [true, false] {
            let cfg = RepumpConfig {
                transfer_order: order,
                shelf_cleanup: cleanup,
                ..noisy.clone()
            };
            let pull = max_pull(&cfg, &AtomicConstants::default());
            assert!(pull <= 4.0, "{order:?} cleanup={cleanup}: {pull:.2} sigma");
        }
    }
}

#[test]
fn effective_matrix_reproduces_monte_carlo() {
    let constants = AtomicConstants::without_d_branch();
    let table = BranchingTable::default();
    let cfg = RepumpConfig {
        transfer_fidelity: 0.9,
        pol_impurity_935: 0.2,
        n_cycles: 8,
        trials: 100_000,
        seed: 5,
        transfer_order: TransferOrder::Simultaneous,
        ..RepumpConfig::default()
    };
    let r = EventModel::new(&cfg, &constants, &table).unwrap().pump_matrix().unwrap();
    let det = apply_cycles(&r, &PopulationVector::pure(Level::LeakMinus), cfg.n_cycles, 1.0, 0.0);
    let mc = run_monte_carlo(&cfg, &constants, &table).unwrap();
    for (p, e) in mc.points.iter().zip(&det) {
        for k in 0..4 {
            let sigma = (e[k] * (1.0 - e[k]) / cfg.trials as f64).sqrt().max(1e-12);
            assert!((p.populations[k] - e[k]).abs() <= 4.0 * sigma, "cycle {} level {k}", p.cycle);
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = RepumpConfig {
        transfer_fidelity: 0.9,
        pol_impurity_935: 0.1,
        trials: 20_000,
        seed: 77,
        ..RepumpConfig::default()
    };
    let constants = AtomicConstants::default();
    let table = BranchingTable::default();
    let runs: Vec<_> = [1, 2, 7]
        .iter()
        .map(|&n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| run_monte_carlo(&cfg, &constants, &table).unwrap())
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}
