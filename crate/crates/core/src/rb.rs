//! Reference and interleaved randomized benchmarking of the single-qubit
//! identity, with the repump modeled as an extra error channel on the
//! interleaved gate.
//!
//! Gates are drawn from the 24-element single-qubit Clifford group, stored as
//! signed permutation matrices acting on the Bloch vector. Errors are Pauli
//! frames, so every shot is simulated exactly without amplitudes.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;

use crate::error::{domain, ensure_probability, Error, Result};
use crate::fit::binomial_std_error;
use crate::lsq::{self, LeastSquares, LmOptions};
use crate::rng::{substream, Domain};

type Rotation = [[i8; 3]; 3];

fn compose(a: &Rotation, b: &Rotation) -> Rotation {
    let mut out = [[0i8; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn determinant(m: &Rotation) -> i32 {
    let m = m.map(|row| row.map(i32::from));
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// The single-qubit Clifford group modulo phase: the 24 proper rotations of
/// the cube.
pub fn clifford_group() -> &'static [[[i8; 3]; 3]] {
    static GROUP: OnceLock<Vec<Rotation>> = OnceLock::new();
    GROUP.get_or_init(|| {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut group = Vec::with_capacity(24);
        for perm in perms {
            for signs in 0..8u8 {
                let mut m = [[0i8; 3]; 3];
                for (row, &col) in perm.iter().enumerate() {
                    m[row][col] = if signs >> row & 1 == 1 { -1 } else { 1 };
                }
                if determinant(&m) == 1 {
                    group.push(m);
                }
            }
        }
        group
    })
}

/// Bloch axis (0 = x, 1 = y, 2 = z) that a rotation maps +z onto.
fn image_of_z(m: &Rotation) -> usize {
    (0..3).find(|&i| m[i][2] != 0).expect("signed permutation")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbConfig {
    pub sequence_lengths: Vec<usize>,
    pub sequences_per_length: usize,
    pub shots: u64,
    /// Average infidelity of every random Clifford.
    pub error_per_clifford: f64,
    /// Average infidelity added by the interleaved gate.
    pub interleaved_extra_error: f64,
    /// Probability that the interleaved gate moves the ion to a dark state.
    pub interleaved_leak_rate: f64,
    pub seed: u64,
}

impl Default for RbConfig {
    fn default() -> Self {
        Self {
            sequence_lengths: vec![2, 50, 150],
            sequences_per_length: 10,
            shots: 100,
            error_per_clifford: 0.0,
            interleaved_extra_error: 0.0,
            interleaved_leak_rate: 0.0,
            seed: 0,
        }
    }
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("error_per_clifford", self.error_per_clifford),
            ("interleaved_extra_error", self.interleaved_extra_error),
            ("interleaved_leak_rate", self.interleaved_leak_rate),
        ] {
            if !(0.0..=0.5).contains(&v) {
                return Err(domain(format!("{name} must lie in [0, 1/2], got {v}")));
            }
        }
        if self.sequence_lengths.is_empty() {
            return Err(domain("at least one sequence length is required"));
        }
        if self.sequence_lengths[0] == 0 || self.sequence_lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("sequence lengths must be positive and strictly increasing"));
        }
        if self.sequences_per_length == 0 || self.shots == 0 {
            return Err(domain("sequences_per_length and shots must be at least 1"));
        }
        Ok(())
    }
}

/// Survival frequency of one random sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbRow {
    pub length: usize,
    pub seq_index: usize,
    pub survival: f64,
    pub shots: u64,
}

impl RbRow {
    fn successes(&self) -> u64 {
        (self.survival * self.shots as f64).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RbDataset {
    pub rows: Vec<RbRow>,
}

impl RbDataset {
    pub fn new(rows: Vec<RbRow>) -> Result<Self> {
        for r in &rows {
            if !(0.0..=1.0).contains(&r.survival) || r.shots == 0 {
                return Err(domain(format!(
                    "row (length {}, sequence {}) has survival {} over {} shots",
                    r.length, r.seq_index, r.survival, r.shots
                )));
            }
        }
        Ok(Self { rows })
    }

    fn by_length(&self) -> BTreeMap<usize, Vec<RbRow>> {
        let mut map: BTreeMap<usize, Vec<RbRow>> = BTreeMap::new();
        for r in &self.rows {
            map.entry(r.length).or_default().push(*r);
        }
        map
    }

    /// Mean survival per length.
    pub fn mean_survival(&self) -> Vec<(usize, f64)> {
        self.by_length()
            .into_iter()
            .map(|(m, rows)| (m, rows.iter().map(|r| r.survival).sum::<f64>() / rows.len() as f64))
            .collect()
    }
}

/// Pauli error probability giving average infidelity `r` for one qubit.
fn pauli_probability(r: f64) -> f64 {
    1.5 * r
}

/// Positions (0-based gate index) of independent Bernoulli(`p`) events among `m` gates.
fn event_positions<R: Rng>(p: f64, m: usize, rng: &mut R, out: &mut Vec<usize>) {
    if p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        out.extend(0..m);
        return;
    }
    let geom = Geometric::new(p).expect("p in (0, 1)");
    let mut pos = 0u64;
    loop {
        pos += geom.sample(rng);
        if pos >= m as u64 {
            break;
        }
        out.push(pos as usize);
        pos += 1;
    }
}

fn simulate_sequence(config: &RbConfig, length: usize, interleaved: bool, unit: u64) -> u64 {
    let mut rng = substream(config.seed, Domain::RbSequence, unit);
    let group = clifford_group();
    // Axis holding the ideal state after each gate.
    let mut axes = Vec::with_capacity(length);
    let mut prefix: Rotation = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    for _ in 0..length {
        let gate = &group[rng.random_range(0..group.len())];
        prefix = compose(gate, &prefix);
        axes.push(image_of_z(&prefix));
    }
    // The final inversion element returns the ideal state to +z; an error
    // after gate k flips the outcome iff it anticommutes with the Pauli along
    // that gate's state axis.
    let q_ref = pauli_probability(config.error_per_clifford);
    let q_int = if interleaved {
        pauli_probability(config.interleaved_extra_error)
    } else {
        0.0
    };
    let p_dark = if interleaved {
        1.0 - (1.0 - config.interleaved_leak_rate).powi(length as i32)
    } else {
        0.0
    };
    let mut survived = 0;
    let mut positions = Vec::new();
    for _ in 0..config.shots {
        if p_dark > 0.0 && rng.random::<f64>() < p_dark {
            continue;
        }
        positions.clear();
        event_positions(q_ref, length, &mut rng, &mut positions);
        event_positions(q_int, length, &mut rng, &mut positions);
        let mut flipped = false;
        for &k in &positions {
            // Uniform X, Y or Z: pauli `e` leaves axis `e` alone and flips the others.
            let pauli = rng.random_range(0..3usize);
            if pauli != axes[k] {
                flipped = !flipped;
            }
        }
        if !flipped {
            survived += 1;
        }
    }
    survived
}

/// Gate-level simulation of one RB experiment.
///
/// With `interleaved`, each random Clifford is followed by the interleaved
/// identity carrying `interleaved_extra_error` and `interleaved_leak_rate`.
/// Dark-state ions count as failures.
pub fn simulate_rb(config: &RbConfig, interleaved: bool) -> Result<RbDataset> {
    config.validate()?;
    let n_seq = config.sequences_per_length;
    let units: Vec<(usize, usize)> = config
        .sequence_lengths
        .iter()
        .flat_map(|&m| (0..n_seq).map(move |s| (m, s)))
        .collect();
    let rows = units
        .par_iter()
        .enumerate()
        .map(|(unit, &(length, seq_index))| {
            let tag = (interleaved as u64) << 40 | unit as u64;
            let survived = simulate_sequence(config, length, interleaved, tag);
            RbRow {
                length,
                seq_index,
                survival: survived as f64 / config.shots as f64,
                shots: config.shots,
            }
        })
        .collect();
    RbDataset::new(rows)
}

/// Exact expected survival of the simulated channel.
pub fn expected_survival(config: &RbConfig, length: usize, interleaved: bool) -> f64 {
    let mut p = (1.0 - 2.0 * config.error_per_clifford).powi(length as i32);
    let mut alive = 1.0;
    if interleaved {
        p *= (1.0 - 2.0 * config.interleaved_extra_error).powi(length as i32);
        alive = (1.0 - config.interleaved_leak_rate).powi(length as i32);
    }
    alive * (0.5 + 0.5 * p)
}

/// Fit of survival = `amplitude · rate^m + baseline`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    pub baseline: f64,
    pub amplitude_err: f64,
    pub rate_err: f64,
    pub baseline_err: f64,
    pub converged: bool,
}

struct DecayProblem {
    /// (length, survival, std error)
    points: Vec<(f64, f64, f64)>,
    baseline: Option<f64>,
}

impl DecayProblem {
    /// (A, p, B) from the free parameters.
    fn unpack(&self, x: &[f64]) -> (f64, f64, f64) {
        (x[0], x[1], self.baseline.unwrap_or_else(|| x[2]))
    }
}

impl LeastSquares for DecayProblem {
    fn n_params(&self) -> usize {
        if self.baseline.is_some() {
            2
        } else {
            3
        }
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        let (a, p, b) = self.unpack(x);
        for (o, &(m, s, se)) in out.iter_mut().zip(&self.points) {
            *o = (a * p.powf(m) + b - s) / se;
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        match self.baseline {
            Some(b) => vec![(0.0, 1.0 - b), (1e-6, 1.0)],
            None => vec![(0.0, 1.0), (1e-6, 1.0), (0.0, 1.0)],
        }
    }
}

/// Weighted least-squares fit of the standard RB decay with a free baseline.
///
/// Constant data fit with `rate = 1`; the split between amplitude and
/// baseline is then undetermined and their uncertainties are infinite.
pub fn fit_decay(dataset: &RbDataset) -> Result<DecayFit> {
    fit_decay_with_baseline(dataset, None)
}

/// As [`fit_decay`], optionally holding the baseline fixed.
///
/// With few lengths and weak decay only `A·(1 − p)` is well determined when
/// the baseline floats; fixing it at the depolarized value ½ pins `p`.
pub fn fit_decay_with_baseline(dataset: &RbDataset, baseline: Option<f64>) -> Result<DecayFit> {
    let means = dataset.mean_survival();
    if means.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} distinct sequence lengths; at least 3 are needed",
            means.len()
        )));
    }
    if let Some(b) = baseline {
        ensure_probability("baseline", b)?;
    }
    let points: Vec<(f64, f64, f64)> = dataset
        .rows
        .iter()
        .map(|r| (r.length as f64, r.survival, binomial_std_error(r.successes(), r.shots)))
        .collect();
    let problem = DecayProblem { points, baseline };

    let b0 = baseline.unwrap_or(0.5);
    let (m0, s0) = means[0];
    let (m1, s1) = means[means.len() - 1];
    let guess_rate = if s0 > b0 && s1 > b0 && s1 < s0 {
        ((s1 - b0) / (s0 - b0)).powf(1.0 / (m1 - m0) as f64).clamp(1e-6, 1.0)
    } else {
        0.99
    };
    let guess_amp = (s0 - b0).clamp(0.0, 1.0 - b0);
    let opts = LmOptions::default();
    let mut best: Option<lsq::LmReport> = None;
    for rate in [guess_rate, 1.0, 0.999, 0.99, 0.9] {
        let start = match baseline {
            Some(_) => vec![guess_amp, rate],
            None => vec![guess_amp, rate, b0],
        };
        let report = lsq::minimize(&problem, &start, opts);
        if best.as_ref().is_none_or(|b| report.chi2 < b.chi2) {
            best = Some(report);
        }
    }
    let best = best.expect("at least one start");
    let unc = lsq::curvature_uncertainties(&best.jacobian);
    let (amplitude, rate, b) = problem.unpack(&best.x);
    // With no decaying component the rate is unconstrained; report no decay.
    let rate = if amplitude <= 1e-12 { 1.0 } else { rate };
    Ok(DecayFit {
        amplitude,
        rate,
        baseline: b,
        amplitude_err: unc[0],
        rate_err: unc[1],
        baseline_err: if baseline.is_some() { 0.0 } else { unc[2] },
        converged: best.converged,
    })
}

/// Interleaved-gate error ½(1 − p_int/p_ref).
///
/// Under shot noise the estimate can come out slightly negative; it is
/// returned unchanged.
pub fn interleaved_error(p_ref: f64, p_int: f64) -> Result<f64> {
    for (name, p) in [("p_ref", p_ref), ("p_int", p_int)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(domain(format!("{name} must lie in (0, 1], got {p}")));
        }
    }
    Ok(0.5 * (1.0 - p_int / p_ref))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub resamples: usize,
    /// Some length had a single sequence, so only shots were resampled there.
    pub shot_only_fallback: bool,
}

impl BootstrapInterval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

/// Per-length shrinkage of sequence frequencies toward the length mean.
///
/// Resampling sequences already carries their shot noise, so each frequency
/// is pulled in until the spread left over matches the between-sequence
/// excess; the binomial redraw then adds the shot noise back once.
fn shrunk_frequencies(group: &[RbRow]) -> Vec<f64> {
    let n = group.len() as f64;
    let mean = group.iter().map(|r| r.survival).sum::<f64>() / n;
    if group.len() < 2 {
        return group.iter().map(|r| r.survival).collect();
    }
    let spread = group.iter().map(|r| (r.survival - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let shot = group
        .iter()
        .map(|r| r.survival * (1.0 - r.survival) / r.shots as f64)
        .sum::<f64>()
        / n;
    let keep = if spread > 0.0 {
        (1.0 - shot / spread).max(0.0).sqrt()
    } else {
        0.0
    };
    group
        .iter()
        .map(|r| (mean + keep * (r.survival - mean)).clamp(0.0, 1.0))
        .collect()
}

fn resample<R: Rng>(dataset: &RbDataset, rng: &mut R) -> RbDataset {
    let mut rows = Vec::with_capacity(dataset.rows.len());
    for (length, group) in dataset.by_length() {
        let centers = shrunk_frequencies(&group);
        for seq_index in 0..group.len() {
            let pick = if group.len() > 1 {
                rng.random_range(0..group.len())
            } else {
                0
            };
            let shots = group[pick].shots;
            let k = Binomial::new(shots, centers[pick])
                .expect("frequency in [0, 1]")
                .sample(rng);
            rows.push(RbRow {
                length,
                seq_index,
                survival: k as f64 / shots as f64,
                shots,
            });
        }
    }
    RbDataset { rows }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Semi-parametric bootstrap interval for the interleaved-gate error.
///
/// Each resample draws sequences with replacement within every length, then
/// redraws each chosen sequence's shots binomially around its frequency
/// shrunk toward the length mean, refits both decays and recomputes the
/// error.
pub fn bootstrap_ci(
    reference: &RbDataset,
    interleaved: &RbDataset,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapInterval> {
    bootstrap_ci_with_baseline(reference, interleaved, resamples, confidence, seed, None)
}

/// As [`bootstrap_ci`], with every decay fitted at the given baseline.
pub fn bootstrap_ci_with_baseline(
    reference: &RbDataset,
    interleaved: &RbDataset,
    resamples: usize,
    confidence: f64,
    seed: u64,
    baseline: Option<f64>,
) -> Result<BootstrapInterval> {
    if resamples < 100 {
        return Err(domain(format!("at least 100 resamples are required, got {resamples}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let rate = |d: &RbDataset| fit_decay_with_baseline(d, baseline).map(|f| f.rate);
    let estimate = interleaved_error(rate(reference)?, rate(interleaved)?)?;
    let fallback = [reference, interleaved]
        .iter()
        .any(|d| d.by_length().values().any(|g| g.len() == 1));
    let mut draws = (0..resamples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Domain::Bootstrap, i);
            let r = resample(reference, &mut rng);
            let s = resample(interleaved, &mut rng);
            interleaved_error(rate(&r)?, rate(&s)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    draws.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    Ok(BootstrapInterval {
        estimate,
        lower: quantile(&draws, tail),
        upper: quantile(&draws, 1.0 - tail),
        confidence,
        resamples,
        shot_only_fallback: fallback,
    })
}

/// Survival of |1⟩ after `cycles` repump cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub cycles: f64,
    pub survival: f64,
    /// Shots behind `survival`; without them the fit is unweighted.
    pub shots: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationDecayFit {
    /// Population loss per cycle λ in survival = exp(−λ n).
    pub rate: f64,
    pub rate_err: f64,
    pub converged: bool,
}

struct ExpProblem {
    /// (cycles / scale, survival, std error)
    points: Vec<(f64, f64, f64)>,
}

impl LeastSquares for ExpProblem {
    fn n_params(&self) -> usize {
        1
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        for (o, &(n, s, se)) in out.iter_mut().zip(&self.points) {
            *o = ((-x[0] * n).exp() - s) / se;
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, f64::INFINITY)]
    }
}

/// Fits survival = exp(−λ n) and returns λ per cycle.
pub fn fit_population_decay(points: &[DecayPoint]) -> Result<PopulationDecayFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points; at least 3 are needed",
            points.len()
        )));
    }
    for p in points {
        if !(p.cycles >= 0.0 && p.cycles.is_finite()) {
            return Err(domain(format!("cycle count {} is invalid", p.cycles)));
        }
        ensure_probability("survival", p.survival)?;
        if p.shots == Some(0) {
            return Err(domain("shots must be at least 1"));
        }
    }
    let weighted = points.iter().all(|p| p.shots.is_some());
    let scale = points.iter().map(|p| p.cycles).fold(0.0, f64::max).max(1.0);
    let problem = ExpProblem {
        points: points
            .iter()
            .map(|p| {
                let se = match (weighted, p.shots) {
                    (true, Some(n)) => binomial_std_error((p.survival * n as f64).round() as u64, n),
                    _ => 1.0,
                };
                (p.cycles / scale, p.survival, se)
            })
            .collect(),
    };
    // Log-linear least squares through the origin as the starting point.
    let (num, den) = problem
        .points
        .iter()
        .filter(|(_, s, _)| *s > 0.0)
        .fold((0.0, 0.0), |(a, b), (n, s, _)| (a - n * s.ln(), b + n * n));
    let start = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    let opts = LmOptions {
        gradient_tol: 1e-14,
        ..LmOptions::default()
    };
    let report = lsq::minimize(&problem, &[start], opts);
    let mut err = lsq::curvature_uncertainties(&report.jacobian)[0];
    if !weighted {
        let dof = (points.len() - 1) as f64;
        err *= (report.chi2 / dof).sqrt();
    }
    Ok(PopulationDecayFit {
        rate: report.x[0] / scale,
        rate_err: err / scale,
        converged: report.converged,
    })
}

/// Synthetic |1⟩ survival measurement with binomial shot noise.
pub fn synthetic_population_decay(rate: f64, cycles: &[f64], shots: u64, seed: u64) -> Result<Vec<DecayPoint>> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(domain(format!("rate must be non-negative, got {rate}")));
    }
    if shots == 0 {
        return Err(domain("shots must be at least 1"));
    }
    let mut rng = substream(seed, Domain::Synthetic, 1);
    Ok(cycles
        .iter()
        .map(|&n| {
            let p = (-rate * n).exp();
            let k = Binomial::new(shots, p).expect("probability").sample(&mut rng);
            DecayPoint {
                cycles: n,
                survival: k as f64 / shots as f64,
                shots: Some(shots),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_is_closed_with_24_elements() {
        let g = clifford_group();
        assert_eq!(g.len(), 24);
        for a in g {
            for b in g {
                assert!(g.contains(&compose(a, b)));
            }
        }
    }

    #[test]
    fn noiseless_rb_always_survives() {
        let cfg = RbConfig {
            shots: 50,
            ..RbConfig::default()
        };
        for interleaved in [false, true] {
            let data = simulate_rb(&cfg, interleaved).unwrap();
            assert_eq!(data.rows.len(), 30);
            assert!(data.rows.iter().all(|r| r.survival == 1.0));
        }
    }

    #[test]
    fn total_leakage_kills_every_shot() {
        let cfg = RbConfig {
            interleaved_leak_rate: 0.5,
            sequence_lengths: vec![20, 40, 60],
            ..RbConfig::default()
        };
        let data = simulate_rb(&cfg, true).unwrap();
        assert!(data.rows.iter().all(|r| r.survival == 0.0));
    }

    #[test]
    fn config_validation() {
        let bad = [
            RbConfig {
                error_per_clifford: 0.6,
                ..RbConfig::default()
            },
            RbConfig {
                sequence_lengths: vec![5, 5, 10],
                ..RbConfig::default()
            },
            RbConfig {
                shots: 0,
                ..RbConfig::default()
            },
        ];
        for cfg in bad {
            assert!(simulate_rb(&cfg, false).is_err());
        }
    }

    #[test]
    fn exact_decay_recovered() {
        let rows = [2usize, 50, 150, 300]
            .iter()
            .map(|&m| RbRow {
                length: m,
                seq_index: 0,
                survival: 0.5 * 0.998f64.powi(m as i32) + 0.5,
                shots: 1000,
            })
            .collect();
        let fit = fit_decay(&RbDataset::new(rows).unwrap()).unwrap();
        assert!((fit.rate - 0.998).abs() < 1e-6, "{fit:?}");
        assert!((fit.amplitude - 0.5).abs() < 1e-6);
        assert!((fit.baseline - 0.5).abs() < 1e-6);
    }

    #[test]
    fn fixed_baseline_recovers_rate() {
        let rows = [2usize, 50, 150]
            .iter()
            .map(|&m| RbRow {
                length: m,
                seq_index: 0,
                survival: 0.48 * 0.9995f64.powi(m as i32) + 0.5,
                shots: 1000,
            })
            .collect();
        let data = RbDataset::new(rows).unwrap();
        let fit = fit_decay_with_baseline(&data, Some(0.5)).unwrap();
        assert!((fit.rate - 0.9995).abs() < 1e-8, "{fit:?}");
        assert_eq!(fit.baseline, 0.5);
        assert!(fit.rate_err.is_finite());
        assert!(fit_decay_with_baseline(&data, Some(1.5)).is_err());
    }

    #[test]
    fn constant_data_gives_unit_rate() {
        let rows = [2usize, 50, 150]
            .iter()
            .map(|&m| RbRow {
                length: m,
                seq_index: 0,
                survival: 0.9,
                shots: 100,
            })
            .collect();
        let fit = fit_decay(&RbDataset::new(rows).unwrap()).unwrap();
        assert!((fit.rate - 1.0).abs() < 1e-9, "{fit:?}");
        assert!((fit.amplitude + fit.baseline - 0.9).abs() < 1e-9);
    }

    #[test]
    fn two_lengths_is_insufficient() {
        let rows = [2usize, 50]
            .iter()
            .map(|&m| RbRow {
                length: m,
                seq_index: 0,
                survival: 0.9,
                shots: 100,
            })
            .collect();
        assert!(matches!(
            fit_decay(&RbDataset::new(rows).unwrap()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn interleaved_error_arithmetic() {
        assert_eq!(interleaved_error(0.99, 0.99).unwrap(), 0.0);
        assert!((interleaved_error(1.0, 0.996).unwrap() - 0.002).abs() < 1e-15);
        assert!(interleaved_error(0.99, 0.995).unwrap() < 0.0);
        assert!(interleaved_error(0.0, 0.5).is_err());
        assert!(interleaved_error(0.5, 1.5).is_err());
    }

    #[test]
    fn zero_noise_bootstrap_has_zero_width() {
        let cfg = RbConfig::default();
        let a = simulate_rb(&cfg, false).unwrap();
        let b = simulate_rb(&cfg, true).unwrap();
        let ci = bootstrap_ci(&a, &b, 100, 0.68, 3).unwrap();
        assert_eq!(ci.lower, ci.upper);
        assert_eq!(ci.lower, ci.estimate);
        assert!(!ci.shot_only_fallback);
    }

    #[test]
    fn single_sequence_falls_back_to_shot_resampling() {
        let cfg = RbConfig {
            sequences_per_length: 1,
            error_per_clifford: 1e-3,
            ..RbConfig::default()
        };
        let a = simulate_rb(&cfg, false).unwrap();
        let b = simulate_rb(&cfg, true).unwrap();
        let ci = bootstrap_ci(&a, &b, 100, 0.68, 3).unwrap();
        assert!(ci.shot_only_fallback);
        assert!(bootstrap_ci(&a, &b, 99, 0.68, 3).is_err());
    }

    #[test]
    fn population_decay_noiseless() {
        let points: Vec<DecayPoint> = [0.0, 1e4, 1e5, 1e6]
            .iter()
            .map(|&n| DecayPoint {
                cycles: n,
                survival: (-1.4e-7 * n).exp(),
                shots: None,
            })
            .collect();
        let fit = fit_population_decay(&points).unwrap();
        assert!((fit.rate - 1.4e-7).abs() < 1e-10, "{fit:?}");
    }

    #[test]
    fn population_decay_constant() {
        let points: Vec<DecayPoint> = [0.0, 10.0, 20.0]
            .iter()
            .map(|&n| DecayPoint {
                cycles: n,
                survival: 1.0,
                shots: Some(100),
            })
            .collect();
        assert_eq!(fit_population_decay(&points).unwrap().rate, 0.0);
        assert!(matches!(
            fit_population_decay(&points[..2]),
            Err(Error::InsufficientData(_))
        ));
    }
}
