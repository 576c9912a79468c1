//! Python bindings for the leakage-repump toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use repump_core::atomic::{self, AtomicConstants, BranchingTable, TransitionGeometry};
use repump_core::fit;
use repump_core::pulse::{self, PulseEnvelope};
use repump_core::rb::{self, DecayPoint, RbConfig, RbDataset, RbRow};
use repump_core::repump::{self as pump, Level, PopulationVector, PumpMatrix, RepumpConfig, TrajectoryPoint, TransferOrder};
use repump_core::{budget, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Convergence(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for repump_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn level(name: &str) -> PyResult<Level> {
    name.parse().map_err(py_err)
}

#[pyfunction]
fn geometric_factor(delta_m: i32, theta: f64, phi: f64) -> PyResult<f64> {
    atomic::geometric_factor(delta_m, TransitionGeometry::new(theta, phi).py()?).py()
}

#[pyfunction]
#[pyo3(signature = (theta, phi, threshold = 1e-12))]
fn selection_table(theta: f64, phi: f64, threshold: f64) -> PyResult<Vec<(i32, f64)>> {
    atomic::selection_table(TransitionGeometry::new(theta, phi).py()?, threshold).py()
}

#[pyfunction]
fn coupling_ratio() -> f64 {
    pulse::coupling_ratio()
}

#[pyfunction]
fn square_pulse_offres_error(tau_pi: f64, delta_hf: f64) -> PyResult<f64> {
    pulse::square_pulse_offres_error(tau_pi, delta_hf).py()
}

#[pyfunction]
fn scattering_error_floor(tau_pi: f64, delta_hf: f64, gamma: f64) -> PyResult<f64> {
    pulse::scattering_error_floor(tau_pi, delta_hf, gamma).py()
}

#[pyfunction]
fn ac_stark_phase(tau_pi: f64, delta_hf: f64) -> PyResult<f64> {
    pulse::ac_stark_phase(tau_pi, delta_hf).py()
}

fn envelope(tau_pi: f64, edge_time: f64) -> PyResult<PulseEnvelope> {
    if edge_time == 0.0 {
        PulseEnvelope::square(tau_pi).py()
    } else {
        PulseEnvelope::raised_cosine(tau_pi, edge_time).py()
    }
}

/// Final off-resonant population after a pulse; `edge_time = 0` is square.
#[pyfunction]
#[pyo3(signature = (tau_pi, edge_time, delta_hf, averaging_samples = 1))]
fn offres_error(tau_pi: f64, edge_time: f64, delta_hf: f64, averaging_samples: usize) -> PyResult<f64> {
    let env = envelope(tau_pi, edge_time)?;
    if averaging_samples > 1 {
        pulse::averaged_offres_error(&env, delta_hf, averaging_samples).py()
    } else {
        pulse::shaped_pulse_offres_error(&env, delta_hf).py()
    }
}

#[pyfunction]
fn ideal_pump_matrix() -> [[f64; 4]; 4] {
    pump::ideal_pump_matrix().entries()
}

#[pyfunction]
#[pyo3(signature = (matrix, p0, n, scale = 1.0, offset = 0.0))]
fn apply_cycles(matrix: [[f64; 4]; 4], p0: [f64; 4], n: usize, scale: f64, offset: f64) -> PyResult<Vec<[f64; 4]>> {
    let r = PumpMatrix::new(matrix).py()?;
    let p = PopulationVector::new(p0).py()?;
    Ok(pump::apply_cycles(&r, &p, n, scale, offset))
}

/// Five-parameter phenomenological pump model.
#[pyclass(name = "PumpModelParams", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    r_to0: f64,
    r_stay: f64,
    r_to1: f64,
    scale_a: f64,
    offset_b: f64,
}

impl From<fit::PumpModelParams> for PyParams {
    fn from(p: fit::PumpModelParams) -> Self {
        Self {
            r_to0: p.r_to0,
            r_stay: p.r_stay,
            r_to1: p.r_to1,
            scale_a: p.scale_a,
            offset_b: p.offset_b,
        }
    }
}

impl PyParams {
    fn core(&self) -> fit::PumpModelParams {
        fit::PumpModelParams {
            r_to0: self.r_to0,
            r_stay: self.r_stay,
            r_to1: self.r_to1,
            scale_a: self.scale_a,
            offset_b: self.offset_b,
        }
    }
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(r_to0: f64, r_stay: f64, r_to1: f64, scale_a: f64, offset_b: f64) -> Self {
        Self {
            r_to0,
            r_stay,
            r_to1,
            scale_a,
            offset_b,
        }
    }

    #[staticmethod]
    fn ideal() -> Self {
        fit::PumpModelParams::ideal().into()
    }

    #[staticmethod]
    fn reported() -> Self {
        fit::PumpModelParams::reported().into()
    }

    #[staticmethod]
    fn reported_uncertainties() -> Self {
        fit::PumpModelParams::reported_uncertainties().into()
    }

    fn cross_leakage(&self) -> f64 {
        self.core().cross_leakage()
    }

    fn pump_matrix(&self) -> PyResult<[[f64; 4]; 4]> {
        Ok(fit::build_pump_matrix(&self.core()).py()?.entries())
    }

    fn __repr__(&self) -> String {
        format!(
            "PumpModelParams(r_to0={}, r_stay={}, r_to1={}, scale_a={}, offset_b={})",
            self.r_to0, self.r_stay, self.r_to1, self.scale_a, self.offset_b
        )
    }
}

type PointTuple = (usize, [f64; 4], [f64; 4]);

fn to_tuples(points: &[TrajectoryPoint]) -> Vec<PointTuple> {
    points.iter().map(|p| (p.cycle, p.populations, p.std_errors)).collect()
}

#[pyfunction]
#[pyo3(signature = (params, cycles, initial = "L-"))]
fn predict(params: PyRef<'_, PyParams>, cycles: Vec<usize>, initial: &str) -> PyResult<Vec<[f64; 4]>> {
    fit::predict(&params.core(), &PopulationVector::pure(level(initial)?), &cycles).py()
}

/// Binomially sampled trajectory: list of (cycle, populations, std_errors).
#[pyfunction]
#[pyo3(signature = (params, max_cycle, shots, seed, initial = "L-"))]
fn synthetic_dataset(
    params: PyRef<'_, PyParams>,
    max_cycle: usize,
    shots: u64,
    seed: u64,
    initial: &str,
) -> PyResult<Vec<PointTuple>> {
    let p0 = PopulationVector::pure(level(initial)?);
    Ok(to_tuples(&fit::synthetic_dataset(&params.core(), &p0, max_cycle, shots, seed).py()?))
}

/// Fits the pump model to (cycle, populations, std_errors) tuples.
#[pyfunction]
#[pyo3(signature = (dataset, initial = "L-", initial_guess = None))]
fn fit_pump_model<'py>(
    py: Python<'py>,
    dataset: Vec<PointTuple>,
    initial: &str,
    initial_guess: Option<PyRef<'_, PyParams>>,
) -> PyResult<Bound<'py, PyDict>> {
    let points: Vec<TrajectoryPoint> = dataset
        .into_iter()
        .map(|(cycle, populations, std_errors)| TrajectoryPoint {
            cycle,
            populations,
            std_errors,
        })
        .collect();
    let guess = initial_guess.map_or_else(fit::PumpModelParams::ideal, |g| g.core());
    let result = fit::fit_pump_model(&points, &PopulationVector::pure(level(initial)?), &guess).py()?;
    let out = PyDict::new(py);
    out.set_item("params", PyParams::from(result.params))?;
    out.set_item("uncertainties", PyParams::from(result.param_uncertainties))?;
    out.set_item("residual_norm", result.residual_norm)?;
    out.set_item("converged", result.converged)?;
    out.set_item("iterations", result.iterations)?;
    Ok(out)
}

/// Monte Carlo of the repump cycle; returns populations per cycle.
#[pyfunction]
#[pyo3(signature = (
    n_cycles = 10, trials = 1000, seed = 0, transfer_fidelity = 1.0, pol_impurity_935 = 0.0,
    initial = "L-", simultaneous = false, shelf_cleanup = true, d_branch = true
))]
#[allow(clippy::too_many_arguments)]
fn simulate_repump<'py>(
    py: Python<'py>,
    n_cycles: usize,
    trials: usize,
    seed: u64,
    transfer_fidelity: f64,
    pol_impurity_935: f64,
    initial: &str,
    simultaneous: bool,
    shelf_cleanup: bool,
    d_branch: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let config = RepumpConfig {
        transfer_fidelity,
        pol_impurity_935,
        shelf_cleanup,
        n_cycles,
        trials,
        seed,
        transfer_order: if simultaneous {
            TransferOrder::Simultaneous
        } else {
            TransferOrder::Sequential
        },
        initial: level(initial)?,
        ..RepumpConfig::default()
    };
    let constants = if d_branch {
        AtomicConstants::default()
    } else {
        AtomicConstants::without_d_branch()
    };
    let run = pump::run_monte_carlo(&config, &constants, &BranchingTable::default()).py()?;
    let out = PyDict::new(py);
    out.set_item("points", to_tuples(&run.points))?;
    out.set_item("shelf", run.shelf)?;
    out.set_item("trials", run.trials)?;
    Ok(out)
}

type RbTuple = (usize, usize, f64, u64);

fn rb_dataset(rows: Vec<RbTuple>) -> PyResult<RbDataset> {
    RbDataset::new(
        rows.into_iter()
            .map(|(length, seq_index, survival, shots)| RbRow {
                length,
                seq_index,
                survival,
                shots,
            })
            .collect(),
    )
    .py()
}

/// Simulated RB rows (length, seq_index, survival, shots).
#[pyfunction]
#[pyo3(signature = (
    interleaved, sequence_lengths = vec![2, 50, 150], sequences_per_length = 10, shots = 100,
    error_per_clifford = 0.0, interleaved_extra_error = 0.0, interleaved_leak_rate = 0.0, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn simulate_rb(
    interleaved: bool,
    sequence_lengths: Vec<usize>,
    sequences_per_length: usize,
    shots: u64,
    error_per_clifford: f64,
    interleaved_extra_error: f64,
    interleaved_leak_rate: f64,
    seed: u64,
) -> PyResult<Vec<RbTuple>> {
    let config = RbConfig {
        sequence_lengths,
        sequences_per_length,
        shots,
        error_per_clifford,
        interleaved_extra_error,
        interleaved_leak_rate,
        seed,
    };
    Ok(rb::simulate_rb(&config, interleaved)
        .py()?
        .rows
        .iter()
        .map(|r| (r.length, r.seq_index, r.survival, r.shots))
        .collect())
}

/// Fits survival = A·p^m + B; pass `baseline` to hold B fixed.
#[pyfunction]
#[pyo3(signature = (rows, baseline = None))]
fn fit_decay(py: Python<'_>, rows: Vec<RbTuple>, baseline: Option<f64>) -> PyResult<Bound<'_, PyDict>> {
    let f = rb::fit_decay_with_baseline(&rb_dataset(rows)?, baseline).py()?;
    let out = PyDict::new(py);
    for (k, v) in [
        ("amplitude", f.amplitude),
        ("rate", f.rate),
        ("baseline", f.baseline),
        ("amplitude_err", f.amplitude_err),
        ("rate_err", f.rate_err),
        ("baseline_err", f.baseline_err),
    ] {
        out.set_item(k, v)?;
    }
    out.set_item("converged", f.converged)?;
    Ok(out)
}

#[pyfunction]
fn interleaved_error(p_ref: f64, p_int: f64) -> PyResult<f64> {
    rb::interleaved_error(p_ref, p_int).py()
}

/// Bootstrap interval for the interleaved-gate error.
#[pyfunction]
#[pyo3(signature = (reference, interleaved, resamples = 500, confidence = 0.68, seed = 0, baseline = None))]
fn bootstrap_ci(
    py: Python<'_>,
    reference: Vec<RbTuple>,
    interleaved: Vec<RbTuple>,
    resamples: usize,
    confidence: f64,
    seed: u64,
    baseline: Option<f64>,
) -> PyResult<Bound<'_, PyDict>> {
    let (r, i) = (rb_dataset(reference)?, rb_dataset(interleaved)?);
    let ci = py
        .detach(|| rb::bootstrap_ci_with_baseline(&r, &i, resamples, confidence, seed, baseline))
        .py()?;
    let out = PyDict::new(py);
    out.set_item("estimate", ci.estimate)?;
    out.set_item("lower", ci.lower)?;
    out.set_item("upper", ci.upper)?;
    out.set_item("confidence", ci.confidence)?;
    out.set_item("shot_only_fallback", ci.shot_only_fallback)?;
    Ok(out)
}

/// Fits survival = exp(−λ n) to (cycles, survival, shots or None) tuples.
#[pyfunction]
fn fit_population_decay(points: Vec<(f64, f64, Option<u64>)>) -> PyResult<(f64, f64)> {
    let points: Vec<DecayPoint> = points
        .into_iter()
        .map(|(cycles, survival, shots)| DecayPoint {
            cycles,
            survival,
            shots,
        })
        .collect();
    let fit = rb::fit_population_decay(&points).py()?;
    Ok((fit.rate, fit.rate_err))
}

#[pyfunction]
fn leakage_after_cycles(eps0: f64, eps_l: f64, n: u32) -> f64 {
    budget::leakage_after_cycles(eps0, eps_l, n)
}

#[pyfunction]
fn total_error(eps0: f64, eps_q: f64, eps_l: f64, n: u32) -> f64 {
    budget::total_error(eps0, eps_q, eps_l, n)
}

#[pyfunction]
fn min_cycles(eps0: f64, eps_l: f64, suppression_target: f64) -> PyResult<u32> {
    budget::min_cycles(eps0, eps_l, suppression_target).py()
}

#[pyfunction]
fn schedule_time(n: u32, cycle_time: f64) -> f64 {
    budget::schedule_time(n, cycle_time)
}

#[pymodule]
fn repump(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(geometric_factor, m)?)?;
    m.add_function(wrap_pyfunction!(selection_table, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(square_pulse_offres_error, m)?)?;
    m.add_function(wrap_pyfunction!(scattering_error_floor, m)?)?;
    m.add_function(wrap_pyfunction!(ac_stark_phase, m)?)?;
    m.add_function(wrap_pyfunction!(offres_error, m)?)?;
    m.add_function(wrap_pyfunction!(ideal_pump_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(apply_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pump_model, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_repump, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_rb, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(interleaved_error, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(fit_population_decay, m)?)?;
    m.add_function(wrap_pyfunction!(leakage_after_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(total_error, m)?)?;
    m.add_function(wrap_pyfunction!(min_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_time, m)?)?;
    Ok(())
}
