//! Five-parameter pump model `P⁽ⁿ⁾ = A·Rⁿ·P⁽⁰⁾ + B` and its weighted
//! least-squares fit.
//!
//! The leakage columns of `R` are fixed by three probabilities: `r_to0`
//! (to |0⟩), `r_stay` (same leakage state) and `r_to1` (to |1⟩). The remainder
//! `1 - r_to0 - r_stay - r_to1` is the cross-leakage probability |L∓⟩ → |L±⟩.
//! `B` is a scalar added to every population component.

use rand_distr::{Binomial, Distribution};

use crate::error::{domain, Error, Result};
use crate::lsq::{self, LeastSquares, LmOptions};
use crate::repump::{PopulationVector, PumpMatrix, TrajectoryPoint};
use crate::rng::{substream, Domain};

pub const SCALE_MAX: f64 = 1.2;
pub const OFFSET_MAX: f64 = 0.1;
const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpModelParams {
    pub r_to0: f64,
    pub r_stay: f64,
    pub r_to1: f64,
    pub scale_a: f64,
    pub offset_b: f64,
}

impl PumpModelParams {
    pub fn ideal() -> Self {
        let third = 1.0 / 3.0;
        Self {
            r_to0: third,
            r_stay: third,
            r_to1: third,
            scale_a: 1.0,
            offset_b: 0.0,
        }
    }

    /// Parameters reported for the trapped-ion pumping measurement.
    pub fn reported() -> Self {
        Self {
            r_to0: 0.323,
            r_stay: 0.27,
            r_to1: 0.225,
            scale_a: 0.952,
            offset_b: 0.026,
        }
    }

    /// Reported one-sigma uncertainties of [`PumpModelParams::reported`].
    pub fn reported_uncertainties() -> Self {
        Self {
            r_to0: 0.009,
            r_stay: 0.02,
            r_to1: 0.005,
            scale_a: 0.006,
            offset_b: 0.001,
        }
    }

    pub fn cross_leakage(&self) -> f64 {
        1.0 - self.r_to0 - self.r_stay - self.r_to1
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.r_to0, self.r_stay, self.r_to1, self.scale_a, self.offset_b]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            r_to0: a[0],
            r_stay: a[1],
            r_to1: a[2],
            scale_a: a[3],
            offset_b: a[4],
        }
    }

    pub const NAMES: [&'static str; 5] = ["r_to0", "r_stay", "r_to1", "scale_a", "offset_b"];

    fn check_matrix_part(&self) -> Result<()> {
        for (name, v) in [("r_to0", self.r_to0), ("r_stay", self.r_stay), ("r_to1", self.r_to1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Constraint(format!("{name} must be a non-negative probability, got {v}")));
            }
        }
        if self.cross_leakage() < -SIMPLEX_TOL {
            return Err(Error::Constraint(format!(
                "r_to0 + r_stay + r_to1 = {} exceeds 1",
                self.r_to0 + self.r_stay + self.r_to1
            )));
        }
        Ok(())
    }

    /// Checks the matrix constraints and the fit box on `A` and `B`.
    pub fn validate(&self) -> Result<()> {
        self.check_matrix_part()?;
        if !(self.scale_a > 0.0 && self.scale_a <= SCALE_MAX) {
            return Err(Error::Constraint(format!("scale_a must be in (0, {SCALE_MAX}], got {}", self.scale_a)));
        }
        if !(self.offset_b.abs() <= OFFSET_MAX) {
            return Err(Error::Constraint(format!(
                "offset_b must be in [-{OFFSET_MAX}, {OFFSET_MAX}], got {}",
                self.offset_b
            )));
        }
        Ok(())
    }
}

fn matrix_entries(r_to0: f64, r_stay: f64, r_to1: f64) -> [[f64; 4]; 4] {
    let cross = (1.0 - r_to0 - r_stay - r_to1).max(0.0);
    [
        [1.0, r_to0, 0.0, r_to0],
        [0.0, r_stay, 0.0, cross],
        [0.0, r_to1, 1.0, r_to1],
        [0.0, cross, 0.0, r_stay],
    ]
}

/// Pump matrix with identity qubit columns and mirrored leakage columns.
pub fn build_pump_matrix(params: &PumpModelParams) -> Result<PumpMatrix> {
    params.check_matrix_part()?;
    PumpMatrix::new(matrix_entries(params.r_to0, params.r_stay, params.r_to1))
}

/// Evaluates `A·Rⁿ·p0 + B` at each requested cycle index.
pub fn predict(params: &PumpModelParams, p0: &PopulationVector, cycle_indices: &[usize]) -> Result<Vec<[f64; 4]>> {
    build_pump_matrix(params)?;
    Ok(predict_unchecked(&params.to_array(), &p0.as_array(), cycle_indices))
}

fn predict_unchecked(x: &[f64], p0: &[f64; 4], cycles: &[usize]) -> Vec<[f64; 4]> {
    // Unclamped entries so finite differences see a smooth model.
    let cross = 1.0 - x[0] - x[1] - x[2];
    let r = [
        [1.0, x[0], 0.0, x[0]],
        [0.0, x[1], 0.0, cross],
        [0.0, x[2], 1.0, x[2]],
        [0.0, cross, 0.0, x[1]],
    ];
    let max = cycles.iter().copied().max().unwrap_or(0);
    let mut powers = Vec::with_capacity(max + 1);
    let mut p = *p0;
    powers.push(p);
    for _ in 0..max {
        let mut next = [0.0; 4];
        for (i, n) in next.iter_mut().enumerate() {
            *n = (0..4).map(|j| r[i][j] * p[j]).sum();
        }
        p = next;
        powers.push(p);
    }
    cycles
        .iter()
        .map(|&k| powers[k].map(|v| x[3] * v + x[4]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: PumpModelParams,
    pub param_uncertainties: PumpModelParams,
    /// Square root of the weighted sum of squared residuals.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Number of data values that entered the fit.
    pub n_values: usize,
}

struct PumpProblem {
    p0: [f64; 4],
    cycles: Vec<usize>,
    /// (row, component, value, std error)
    values: Vec<(usize, usize, f64, f64)>,
}

impl LeastSquares for PumpProblem {
    fn n_params(&self) -> usize {
        5
    }

    fn n_residuals(&self) -> usize {
        self.values.len()
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        let pred = predict_unchecked(x, &self.p0, &self.cycles);
        for (o, &(row, comp, value, se)) in out.iter_mut().zip(&self.values) {
            *o = (pred[row][comp] - value) / se;
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![
            (0.0, 1.0),
            (0.0, 1.0),
            (0.0, 1.0),
            (1e-9, SCALE_MAX),
            (-OFFSET_MAX, OFFSET_MAX),
        ]
    }

    fn project(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.bounds()) {
            *v = v.clamp(lo, hi);
        }
        project_onto_capped_simplex(&mut x[..3]);
    }
}

/// Euclidean projection of non-negative `v` onto `{v ≥ 0, Σv ≤ 1}`.
fn project_onto_capped_simplex(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total <= 1.0 {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if s - candidate > 0.0 {
            shift = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - shift).max(0.0);
    }
}

/// Feasible starting points on a coarse grid of the probability simplex.
fn grid_starts() -> Vec<[f64; 5]> {
    let mut starts = Vec::with_capacity(9);
    for stay in [0.1, 0.3, 0.5] {
        for (to0, to1) in [(0.2, 0.2), (0.3, 0.15), (0.15, 0.3)] {
            starts.push([to0, stay, to1, 1.0, 0.0]);
        }
    }
    starts
}

/// Weighted least-squares fit of the pump model to a population trajectory.
///
/// Values with a zero standard error carry no usable weight and are left out.
/// Uncertainties are the unscaled curvature estimates `sqrt(diag((JᵀJ)⁻¹))`
/// of the error-weighted residuals.
pub fn fit_pump_model(
    dataset: &[TrajectoryPoint],
    p0: &PopulationVector,
    initial_guess: &PumpModelParams,
) -> Result<FitResult> {
    initial_guess
        .validate()
        .map_err(|e| domain(format!("initial guess is infeasible: {e}")))?;
    let mut values = Vec::new();
    let mut cycles = Vec::with_capacity(dataset.len());
    for (row, point) in dataset.iter().enumerate() {
        cycles.push(point.cycle);
        for comp in 0..4 {
            let (v, se) = (point.populations[comp], point.std_errors[comp]);
            if !v.is_finite() || !se.is_finite() || se < 0.0 {
                return Err(domain(format!(
                    "cycle {}: population {v} with standard error {se} is not usable",
                    point.cycle
                )));
            }
            if se > 0.0 {
                values.push((row, comp, v, se));
            }
        }
    }
    let mut distinct: Vec<usize> = values.iter().map(|&(row, ..)| cycles[row]).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 || values.len() <= 5 {
        return Err(Error::InsufficientData(format!(
            "{} distinct cycle indices and {} weighted values; need at least 3 and more than 5",
            distinct.len(),
            values.len()
        )));
    }
    let problem = PumpProblem {
        p0: p0.as_array(),
        cycles,
        values,
    };

    let opts = LmOptions::default();
    let mut best: Option<lsq::LmReport> = None;
    let starts = std::iter::once(initial_guess.to_array()).chain(grid_starts());
    for start in starts {
        let report = lsq::minimize(&problem, &start, opts);
        if best.as_ref().is_none_or(|b| report.chi2 < b.chi2) {
            best = Some(report);
        }
    }
    let best = best.expect("at least one start");
    let unc = lsq::curvature_uncertainties(&best.jacobian);
    let x: [f64; 5] = best.x.clone().try_into().expect("five parameters");
    Ok(FitResult {
        params: PumpModelParams::from_array(x),
        param_uncertainties: PumpModelParams::from_array(unc.try_into().expect("five uncertainties")),
        residual_norm: best.chi2.sqrt(),
        converged: best.converged,
        iterations: best.iterations,
        n_values: problem.values.len(),
    })
}

/// Binomial standard error of `successes / shots`, using the add-one
/// estimate so that 0 and `shots` successes still carry a finite weight.
pub fn binomial_std_error(successes: u64, shots: u64) -> f64 {
    let n = shots as f64;
    let p = (successes as f64 + 1.0) / (n + 2.0);
    (p * (1.0 - p) / n).sqrt()
}

/// Model trajectory resampled with `shots` binomial trials per population.
///
/// Each population is an independent measurement, as in state-selective
/// fluorescence read-out of one sublevel at a time.
pub fn synthetic_dataset(
    params: &PumpModelParams,
    p0: &PopulationVector,
    max_cycle: usize,
    shots: u64,
    seed: u64,
) -> Result<Vec<TrajectoryPoint>> {
    if shots == 0 {
        return Err(domain("shots must be at least 1"));
    }
    let cycles: Vec<usize> = (0..=max_cycle).collect();
    let expected = predict(params, p0, &cycles)?;
    let mut rng = substream(seed, Domain::Synthetic, 0);
    Ok(cycles
        .iter()
        .zip(expected)
        .map(|(&cycle, pred)| {
            let mut populations = [0.0; 4];
            let mut std_errors = [0.0; 4];
            for comp in 0..4 {
                let p = pred[comp].clamp(0.0, 1.0);
                let k = Binomial::new(shots, p).expect("probability in [0, 1]").sample(&mut rng);
                populations[comp] = k as f64 / shots as f64;
                std_errors[comp] = binomial_std_error(k, shots);
            }
            TrajectoryPoint {
                cycle,
                populations,
                std_errors,
            }
        })
        .collect())
}

/// Noise-free model trajectory with the given per-value standard errors.
pub fn noiseless_dataset(
    params: &PumpModelParams,
    p0: &PopulationVector,
    max_cycle: usize,
    std_error: f64,
) -> Result<Vec<TrajectoryPoint>> {
    let cycles: Vec<usize> = (0..=max_cycle).collect();
    Ok(predict(params, p0, &cycles)?
        .into_iter()
        .zip(cycles)
        .map(|(populations, cycle)| TrajectoryPoint {
            cycle,
            populations,
            std_errors: [std_error; 4],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repump::{apply_cycles, ideal_pump_matrix, Level};

    fn lm() -> PopulationVector {
        PopulationVector::pure(Level::LeakMinus)
    }

    #[test]
    fn ideal_params_build_ideal_matrix() {
        let r = build_pump_matrix(&PumpModelParams::ideal()).unwrap();
        let ideal = ideal_pump_matrix();
        for (a, b) in r.entries().iter().flatten().zip(ideal.entries().iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(PumpModelParams::ideal().cross_leakage().abs() < 1e-15);
    }

    #[test]
    fn reported_params_cross_leakage() {
        let p = PumpModelParams::reported();
        assert!((p.cross_leakage() - 0.182).abs() < 1e-12);
        let r = build_pump_matrix(&p).unwrap();
        assert!((r.get(Level::LeakPlus, Level::LeakMinus) - 0.182).abs() < 1e-12);
        assert!((r.get(Level::LeakMinus, Level::LeakPlus) - 0.182).abs() < 1e-12);
    }

    #[test]
    fn disabled_pump_is_identity() {
        let p = PumpModelParams {
            r_to0: 0.0,
            r_stay: 1.0,
            r_to1: 0.0,
            ..PumpModelParams::ideal()
        };
        let r = build_pump_matrix(&p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.entries()[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn oversubscribed_column_is_rejected() {
        let p = PumpModelParams {
            r_to0: 0.5,
            r_stay: 0.4,
            r_to1: 0.2,
            ..PumpModelParams::ideal()
        };
        assert!(matches!(build_pump_matrix(&p), Err(Error::Constraint(_))));
    }

    #[test]
    fn predict_examples() {
        let one = predict(&PumpModelParams::ideal(), &lm(), &[1]).unwrap();
        for (a, b) in one[0].iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = predict(&PumpModelParams::reported(), &lm(), &[0]).unwrap();
        assert_eq!(zero.len(), 1);
        for (a, b) in zero[0].iter().zip([0.026, 0.978, 0.026, 0.026]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn predict_agrees_with_apply_cycles() {
        let params = PumpModelParams::reported();
        let r = build_pump_matrix(&params).unwrap();
        let via_sim = apply_cycles(&r, &lm(), 12, params.scale_a, params.offset_b);
        let cycles: Vec<usize> = (0..=12).collect();
        let via_fit = predict(&params, &lm(), &cycles).unwrap();
        for (a, b) in via_sim.iter().zip(&via_fit) {
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_ideal_fit_is_exact() {
        let truth = PumpModelParams::ideal();
        let data = noiseless_dataset(&truth, &lm(), 8, 0.01).unwrap();
        let guess = PumpModelParams {
            r_to0: 0.2,
            r_stay: 0.2,
            r_to1: 0.2,
            scale_a: 0.9,
            offset_b: 0.01,
        };
        let fit = fit_pump_model(&data, &lm(), &guess).unwrap();
        for (a, b) in fit.params.to_array().iter().zip(truth.to_array()) {
            assert!((a - b).abs() < 1e-6, "{:?}", fit.params);
        }
    }

    #[test]
    fn two_cycle_indices_is_insufficient() {
        let data = noiseless_dataset(&PumpModelParams::ideal(), &lm(), 1, 0.01).unwrap();
        let err = fit_pump_model(&data, &lm(), &PumpModelParams::ideal());
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn infeasible_guess_is_a_domain_error() {
        let data = noiseless_dataset(&PumpModelParams::ideal(), &lm(), 5, 0.01).unwrap();
        let guess = PumpModelParams {
            scale_a: 2.0,
            ..PumpModelParams::ideal()
        };
        assert!(matches!(fit_pump_model(&data, &lm(), &guess), Err(Error::Domain(_))));
    }

    #[test]
    fn negative_std_error_rejected() {
        let mut data = noiseless_dataset(&PumpModelParams::ideal(), &lm(), 5, 0.01).unwrap();
        data[2].std_errors[1] = -0.01;
        assert!(matches!(
            fit_pump_model(&data, &lm(), &PumpModelParams::ideal()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_std_error_values_are_dropped() {
        let mut data = noiseless_dataset(&PumpModelParams::ideal(), &lm(), 5, 0.01).unwrap();
        data[3].std_errors = [0.0; 4];
        let fit = fit_pump_model(&data, &lm(), &PumpModelParams::ideal()).unwrap();
        assert_eq!(fit.n_values, 20);
    }

    #[test]
    fn simplex_projection() {
        let mut v = [0.6, 0.5, 0.2];
        project_onto_capped_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(v.iter().all(|x| *x >= 0.0));
        let mut inside = [0.2, 0.3, 0.1];
        project_onto_capped_simplex(&mut inside);
        assert_eq!(inside, [0.2, 0.3, 0.1]);
    }

    #[test]
    fn std_error_scaling_leaves_estimates_unchanged() {
        let data = synthetic_dataset(&PumpModelParams::reported(), &lm(), 10, 1000, 11).unwrap();
        let scaled: Vec<TrajectoryPoint> = data
            .iter()
            .map(|p| TrajectoryPoint {
                std_errors: p.std_errors.map(|s| s * 3.0),
                ..*p
            })
            .collect();
        let a = fit_pump_model(&data, &lm(), &PumpModelParams::ideal()).unwrap();
        let b = fit_pump_model(&scaled, &lm(), &PumpModelParams::ideal()).unwrap();
        for k in 0..5 {
            let (pa, pb) = (a.params.to_array()[k], b.params.to_array()[k]);
            assert!((pa - pb).abs() < 1e-6, "param {k}: {pa} vs {pb}");
            let (ua, ub) = (a.param_uncertainties.to_array()[k], b.param_uncertainties.to_array()[k]);
            assert!((ub / ua - 3.0).abs() < 1e-4, "uncertainty {k}: {ua} vs {ub}");
        }
    }
}
