use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repump_core::atomic::{AtomicConstants, BranchingTable};
use repump_core::fit::{fit_pump_model, noiseless_dataset, predict, synthetic_dataset, PumpModelParams};
use repump_core::repump::{
    fig2_synthetic_dataset, EventModel, Level, PopulationVector, RepumpConfig, TrajectoryPoint, TransferOrder,
};

fn chi2(params: &PumpModelParams, p0: &PopulationVector, data: &[TrajectoryPoint]) -> f64 {
    let cycles: Vec<usize> = data.iter().map(|p| p.cycle).collect();
    let pred = predict(params, p0, &cycles).unwrap();
    data.iter()
        .zip(pred)
        .flat_map(|(p, m)| (0..4).map(move |k| ((m[k] - p.populations[k]) / p.std_errors[k]).powi(2)))
        .sum()
}

#[test]
fn ninety_five_percent_intervals_cover_the_truth() {
    let truth = PumpModelParams::reported();
    let p0 = PopulationVector::pure(Level::LeakMinus);
    let mut covered = [0; 5];
    for seed in 0..50 {
        let data = synthetic_dataset(&truth, &p0, 10, 1000, 500 + seed).unwrap();
        let fit = fit_pump_model(&data, &p0, &PumpModelParams::ideal()).unwrap();
        let (est, unc) = (fit.params.to_array(), fit.param_uncertainties.to_array());
        for k in 0..5 {
            if (est[k] - truth.to_array()[k]).abs() <= 1.96 * unc[k] {
                covered[k] += 1;
            }
        }
    }
    for (k, c) in covered.iter().enumerate() {
        assert!(*c >= 40, "{}: {c}/50", PumpModelParams::NAMES[k]);
    }
}

#[test]
fn generating_parameters_minimize_the_residual() {
    let truth = PumpModelParams::reported();
    let p0 = PopulationVector::pure(Level::LeakMinus);
    let data = noiseless_dataset(&truth, &p0, 10, 0.01).unwrap();
    let at_truth = chi2(&truth, &p0, &data);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tried = 0;
    while tried < 100 {
        let r: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        if r.iter().sum::<f64>() > 1.0 {
            continue;
        }
        let candidate = PumpModelParams {
            r_to0: r[0],
            r_stay: r[1],
            r_to1: r[2],
            scale_a: rng.random_range(0.5..1.2),
            offset_b: rng.random_range(-0.1..0.1),
        };
        assert!(at_truth <= chi2(&candidate, &p0, &data));
        tried += 1;
    }
}

#[test]
fn monte_carlo_pumping_data_recovers_the_effective_matrix() {
    let constants = AtomicConstants::without_d_branch();
    let table = BranchingTable::default();
    let cfg = RepumpConfig {
        transfer_fidelity: 0.9,
        pol_impurity_935: 0.15,
        transfer_order: TransferOrder::Simultaneous,
        ..RepumpConfig::default()
    };
    let r = EventModel::new(&cfg, &constants, &table).unwrap().pump_matrix().unwrap();
    let p0 = PopulationVector::pure(Level::LeakMinus);
    let data = fig2_synthetic_dataset(&cfg, &constants, &table, 8).unwrap();
    let fit = fit_pump_model(&data, &p0, &PumpModelParams::ideal()).unwrap();
    assert!(fit.converged);
    let expected = [
        r.get(Level::Zero, Level::LeakMinus),
        r.get(Level::LeakMinus, Level::LeakMinus),
        r.get(Level::One, Level::LeakMinus),
        1.0,
        0.0,
    ];
    let (est, unc) = (fit.params.to_array(), fit.param_uncertainties.to_array());
    for k in 0..5 {
        assert!(
            (est[k] - expected[k]).abs() <= 4.0 * unc[k],
            "{}: {} vs {} ± {}",
            PumpModelParams::NAMES[k],
            est[k],
            expected[k],
            unc[k]
        );
    }
}
