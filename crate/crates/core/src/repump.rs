//! Cycle-by-cycle leakage repump dynamics.
//!
//! Populations are ordered (|0⟩, |L₋⟩, |1⟩, |L₊⟩). A [`PumpMatrix`] is the
//! column-stochastic single-cycle transfer operator, `r[i][j]` being the
//! probability that state `j` ends the cycle in state `i`. The Monte Carlo
//! realizes the same cycle event by event: quadrupole transfer of a leaked
//! ion to ²D₃/₂, 935 nm excitation of ³[3/2]₁/₂ and a sampled spontaneous
//! decay. Ions that fall into the ²D₃/₂ F=2 shelf are tracked as a hidden
//! fifth state.

use rand::Rng;
use rayon::prelude::*;

use crate::atomic::{AtomicConstants, BranchingTable, Manifold, Sublevel};
use crate::error::{domain, ensure_probability, Error, Result};
use crate::rng::{substream, Domain};

/// The four ²S₁/₂ states seen by read-out, in population-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Zero = 0,
    LeakMinus = 1,
    One = 2,
    LeakPlus = 3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Zero, Level::LeakMinus, Level::One, Level::LeakPlus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn sublevel(self) -> Sublevel {
        match self {
            Level::Zero => Sublevel::QUBIT0,
            Level::LeakMinus => Sublevel::LEAK_MINUS,
            Level::One => Sublevel::QUBIT1,
            Level::LeakPlus => Sublevel::LEAK_PLUS,
        }
    }

    pub fn from_sublevel(level: Sublevel) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.sublevel() == level)
    }

    pub fn is_leakage(self) -> bool {
        matches!(self, Level::LeakMinus | Level::LeakPlus)
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Zero => "0",
            Level::LeakMinus => "L-",
            Level::One => "1",
            Level::LeakPlus => "L+",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "zero" => Ok(Level::Zero),
            "L-" | "leak_minus" => Ok(Level::LeakMinus),
            "1" | "one" => Ok(Level::One),
            "L+" | "leak_plus" => Ok(Level::LeakPlus),
            other => Err(domain(format!("unknown level {other:?}, expected one of 0, L-, 1, L+"))),
        }
    }
}

/// Physical population vector over (|0⟩, |L₋⟩, |1⟩, |L₊⟩).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationVector(pub(crate) [f64; 4]);

impl PopulationVector {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(domain(format!("population {v} outside [0, 1]")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(domain(format!("populations sum to {total}, expected 1")));
        }
        Ok(Self(p))
    }

    pub fn pure(level: Level) -> Self {
        let mut p = [0.0; 4];
        p[level.index()] = 1.0;
        Self(p)
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn leakage(&self) -> f64 {
        self.0[1] + self.0[3]
    }
}

const STOCHASTIC_TOL: f64 = 1e-12;

/// Single-cycle transfer operator obeying the qubit-steady-state and
/// leakage-symmetry constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpMatrix {
    r: [[f64; 4]; 4],
}

impl PumpMatrix {
    /// Validates `r[i][j]` (probability of `j → i`).
    pub fn new(r: [[f64; 4]; 4]) -> Result<Self> {
        for (i, row) in r.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Constraint(format!("R[{i}][{j}] = {v} outside [0, 1]")));
                }
            }
        }
        for j in 0..4 {
            let total: f64 = (0..4).map(|i| r[i][j]).sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Constraint(format!("column {j} sums to {total}, expected 1")));
            }
        }
        for q in [Level::Zero.index(), Level::One.index()] {
            for i in 0..4 {
                let expected = if i == q { 1.0 } else { 0.0 };
                if r[i][q] != expected {
                    return Err(Error::Constraint(format!(
                        "qubit column {q} must be a basis vector, found R[{i}][{q}] = {}",
                        r[i][q]
                    )));
                }
            }
        }
        let (m, p) = (Level::LeakMinus.index(), Level::LeakPlus.index());
        let pairs = [
            ((m, m), (p, p), "stay"),
            ((0, m), (0, p), "to |0>"),
            ((2, m), (2, p), "to |1>"),
            ((p, m), (m, p), "cross"),
        ];
        for ((a, b), (c, d), what) in pairs {
            if (r[a][b] - r[c][d]).abs() > STOCHASTIC_TOL {
                return Err(Error::Constraint(format!(
                    "leakage symmetry broken for {what}: {} vs {}",
                    r[a][b], r[c][d]
                )));
            }
        }
        Ok(Self { r })
    }

    /// Probability of `from → to` in one cycle.
    pub fn get(&self, to: Level, from: Level) -> f64 {
        self.r[to.index()][from.index()]
    }

    pub fn entries(&self) -> [[f64; 4]; 4] {
        self.r
    }

    pub fn apply(&self, p: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.r[i][j] * p[j]).sum();
        }
        out
    }
}

/// Ideal pump: each leaked state goes 1/3 to |0⟩, 1/3 to |1⟩, 1/3 stays.
pub fn ideal_pump_matrix() -> PumpMatrix {
    let third = 1.0 / 3.0;
    PumpMatrix {
        r: [
            [1.0, third, 0.0, third],
            [0.0, third, 0.0, 0.0],
            [0.0, third, 1.0, third],
            [0.0, 0.0, 0.0, third],
        ],
    }
}

/// `A·Rᵏ·p0 + B` for k = 0..=n, with the scalar offset added to every component.
pub fn apply_cycles(matrix: &PumpMatrix, p0: &PopulationVector, n: usize, scale: f64, offset: f64) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(n + 1);
    let mut p = p0.0;
    for k in 0..=n {
        if k > 0 {
            p = matrix.apply(&p);
        }
        out.push(p.map(|v| scale * v + offset));
    }
    out
}

/// Order in which the two leakage transfers are applied within a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferOrder {
    /// |L₋⟩ transfer and pump, then |L₊⟩ transfer and pump. An ion moved from
    /// |L₋⟩ to |L₊⟩ by the first half is pumped again by the second.
    #[default]
    Sequential,
    /// Both transfers act on the population present at the start of the cycle.
    Simultaneous,
}

/// Knobs of the event-level repump simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RepumpConfig {
    /// Success probability of a quadrupole transfer pulse.
    pub transfer_fidelity: f64,
    /// Probability that 935 nm excitation reaches the m_F = 0 bracket sublevel.
    pub pol_impurity_935: f64,
    /// Repatriate the ²D₃/₂ F=2 shelf before each read-out.
    pub shelf_cleanup: bool,
    pub n_cycles: usize,
    pub trials: usize,
    pub seed: u64,
    pub transfer_order: TransferOrder,
    pub initial: Level,
    /// Probability that preparation yields a uniformly random other S state.
    pub prep_error: f64,
    /// Probability that read-out reports a uniformly random other S state.
    pub readout_error: f64,
}

impl Default for RepumpConfig {
    fn default() -> Self {
        Self {
            transfer_fidelity: 1.0,
            pol_impurity_935: 0.0,
            shelf_cleanup: true,
            n_cycles: 10,
            trials: 1000,
            seed: 0,
            transfer_order: TransferOrder::Sequential,
            initial: Level::LeakMinus,
            prep_error: 0.0,
            readout_error: 0.0,
        }
    }
}

impl RepumpConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_probability("transfer_fidelity", self.transfer_fidelity)?;
        ensure_probability("pol_impurity_935", self.pol_impurity_935)?;
        ensure_probability("prep_error", self.prep_error)?;
        ensure_probability("readout_error", self.readout_error)?;
        if self.trials == 0 {
            return Err(domain("trials must be at least 1"));
        }
        Ok(())
    }
}

/// Index of the hidden shelf state in five-state vectors.
pub const SHELF: usize = 4;

/// Five-state column-stochastic matrix over (|0⟩, |L₋⟩, |1⟩, |L₊⟩, shelf).
pub type CycleMatrix = [[f64; 5]; 5];

/// Precomputed outcome distributions of the event model.
#[derive(Debug, Clone)]
pub struct EventModel {
    /// Five-state outcome of one transfer-and-pump attempt on |L₋⟩ and |L₊⟩.
    leak_outcome: [[f64; 5]; 2],
    /// Where a repatriated shelf ion lands in ²S₁/₂.
    cleanup: [f64; 4],
    config: RepumpConfig,
}

fn five_state_index(level: Sublevel) -> Result<usize> {
    match level.manifold {
        Manifold::S12 => Level::from_sublevel(level)
            .map(Level::index)
            .ok_or_else(|| domain(format!("{level} is not a read-out state"))),
        Manifold::D32 => Ok(SHELF),
        Manifold::Bracket => Err(domain(format!("{level} is not a decay destination"))),
    }
}

impl EventModel {
    pub fn new(config: &RepumpConfig, constants: &AtomicConstants, table: &BranchingTable) -> Result<Self> {
        config.validate()?;
        let mut decay = [[0.0; 5]; 3];
        for (slot, mf) in (-1i8..=1).enumerate() {
            let dist = table.decay_distribution(Sublevel::bracket(mf)?, constants)?;
            for (level, w) in dist.iter() {
                decay[slot][five_state_index(level)?] += w;
            }
        }
        let (f, q) = (config.transfer_fidelity, config.pol_impurity_935);
        let mut leak_outcome = [[0.0; 5]; 2];
        // π-polarized 935 nm light reaches the bracket sublevel with the leaked
        // state's m_F; polarization impurity routes through m_F = 0.
        for (k, (level, slot)) in [(Level::LeakMinus, 0), (Level::LeakPlus, 2)].into_iter().enumerate() {
            for s in 0..5 {
                leak_outcome[k][s] = f * ((1.0 - q) * decay[slot][s] + q * decay[1][s]);
            }
            leak_outcome[k][level.index()] += 1.0 - f;
        }
        let mut cleanup = [0.0; 4];
        for mf in -1i8..=1 {
            for (level, w) in table.s_conditional(Sublevel::bracket(mf)?)? {
                cleanup[five_state_index(*level)?] += w / 3.0;
            }
        }
        Ok(Self {
            leak_outcome,
            cleanup,
            config: config.clone(),
        })
    }

    fn outcome(&self, leak: Level) -> &[f64; 5] {
        match leak {
            Level::LeakMinus => &self.leak_outcome[0],
            Level::LeakPlus => &self.leak_outcome[1],
            _ => unreachable!("only leakage states are pumped"),
        }
    }

    fn half_cycle(&self, leak: Level) -> CycleMatrix {
        let mut m = identity5();
        let col = self.outcome(leak);
        for i in 0..5 {
            m[i][leak.index()] = col[i];
        }
        m
    }

    /// Expected five-state transfer matrix of one full cycle.
    pub fn cycle_matrix(&self) -> CycleMatrix {
        match self.config.transfer_order {
            TransferOrder::Sequential => {
                matmul5(&self.half_cycle(Level::LeakPlus), &self.half_cycle(Level::LeakMinus))
            }
            TransferOrder::Simultaneous => {
                let mut m = identity5();
                for leak in [Level::LeakMinus, Level::LeakPlus] {
                    let col = self.outcome(leak);
                    for i in 0..5 {
                        m[i][leak.index()] = col[i];
                    }
                }
                m
            }
        }
    }

    /// The cycle as a constrained [`PumpMatrix`], when the shelf is unreachable
    /// and the cycle is symmetric in the two leakage states.
    pub fn pump_matrix(&self) -> Result<PumpMatrix> {
        let m = self.cycle_matrix();
        if (0..4).any(|j| m[SHELF][j] > 0.0) {
            return Err(Error::Constraint("cycle leaks into the D3/2 shelf".into()));
        }
        let mut r = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                r[i][j] = m[i][j];
            }
        }
        PumpMatrix::new(r)
    }

    fn prepared(&self) -> [f64; 5] {
        let e = self.config.prep_error;
        let mut p = [e / 3.0, e / 3.0, e / 3.0, e / 3.0, 0.0];
        p[self.config.initial.index()] = 1.0 - e;
        p
    }

    fn read_out(&self, state: &[f64; 5]) -> [f64; 4] {
        let mut seen = [state[0], state[1], state[2], state[3]];
        if self.config.shelf_cleanup {
            for (s, c) in seen.iter_mut().zip(self.cleanup) {
                *s += state[SHELF] * c;
            }
        }
        let r = self.config.readout_error;
        if r > 0.0 {
            let total: f64 = seen.iter().sum();
            seen = seen.map(|v| (1.0 - r) * v + r / 3.0 * (total - v));
        }
        seen
    }

    /// Exact expectation of the Monte Carlo populations at every cycle index.
    pub fn expected_trajectory(&self) -> Vec<[f64; 4]> {
        let m = self.cycle_matrix();
        let mut state = self.prepared();
        let mut out = Vec::with_capacity(self.config.n_cycles + 1);
        out.push(self.read_out(&state));
        for _ in 0..self.config.n_cycles {
            let mut next = [0.0; 5];
            for (i, n) in next.iter_mut().enumerate() {
                *n = (0..5).map(|j| m[i][j] * state[j]).sum();
            }
            state = next;
            out.push(self.read_out(&state));
        }
        out
    }

    fn run_trial<R: Rng>(&self, rng: &mut R, counts: &mut [[u64; 5]]) {
        let cfg = &self.config;
        let mut state = cfg.initial.index();
        if cfg.prep_error > 0.0 && rng.random::<f64>() < cfg.prep_error {
            state = other_level(state, rng);
        }
        self.record(rng, state, &mut counts[0]);
        for count in counts.iter_mut().skip(1) {
            match cfg.transfer_order {
                TransferOrder::Sequential => {
                    for leak in [Level::LeakMinus, Level::LeakPlus] {
                        if state == leak.index() {
                            state = sample(self.outcome(leak), rng);
                        }
                    }
                }
                TransferOrder::Simultaneous => {
                    if state == Level::LeakMinus.index() || state == Level::LeakPlus.index() {
                        let leak = Level::ALL[state];
                        state = sample(self.outcome(leak), rng);
                    }
                }
            }
            self.record(rng, state, count);
        }
    }

    fn record<R: Rng>(&self, rng: &mut R, state: usize, count: &mut [u64; 5]) {
        let mut seen = state;
        if seen == SHELF {
            if !self.config.shelf_cleanup {
                count[SHELF] += 1;
                return;
            }
            seen = sample(&self.cleanup, rng);
        }
        if self.config.readout_error > 0.0 && rng.random::<f64>() < self.config.readout_error {
            seen = other_level(seen, rng);
        }
        count[seen] += 1;
    }
}

fn identity5() -> CycleMatrix {
    let mut m = [[0.0; 5]; 5];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn matmul5(a: &CycleMatrix, b: &CycleMatrix) -> CycleMatrix {
    let mut out = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            out[i][j] = (0..5).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn sample<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn other_level<R: Rng>(level: usize, rng: &mut R) -> usize {
    let k = rng.random_range(0..3);
    if k >= level {
        k + 1
    } else {
        k
    }
}

/// Trial-averaged populations at one cycle index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub cycle: usize,
    pub populations: [f64; 4],
    pub std_errors: [f64; 4],
}

impl TrajectoryPoint {
    pub fn leakage(&self) -> f64 {
        self.populations[1] + self.populations[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Fraction of trials hidden in the shelf at each cycle (zero with cleanup).
    pub shelf: Vec<f64>,
    pub trials: usize,
}

/// Monte Carlo over `config.trials` independent ions.
///
/// Each trial draws from its own substream, and per-cycle counts are summed as
/// integers, so the result does not depend on the rayon pool size.
pub fn run_monte_carlo(config: &RepumpConfig, constants: &AtomicConstants, table: &BranchingTable) -> Result<Trajectory> {
    let model = EventModel::new(config, constants, table)?;
    let n = config.n_cycles;
    let counts = (0..config.trials as u64)
        .into_par_iter()
        .fold(
            || vec![[0u64; 5]; n + 1],
            |mut acc, trial| {
                let mut rng = substream(config.seed, Domain::RepumpTrial, trial);
                model.run_trial(&mut rng, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![[0u64; 5]; n + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for k in 0..5 {
                        x[k] += y[k];
                    }
                }
                a
            },
        );
    let trials = config.trials as f64;
    let points = counts
        .iter()
        .enumerate()
        .map(|(cycle, c)| {
            let populations = [0, 1, 2, 3].map(|k| c[k] as f64 / trials);
            let std_errors = populations.map(|p| (p * (1.0 - p) / trials).sqrt());
            TrajectoryPoint {
                cycle,
                populations,
                std_errors,
            }
        })
        .collect();
    let shelf = counts.iter().map(|c| c[SHELF] as f64 / trials).collect();
    Ok(Trajectory {
        points,
        shelf,
        trials: config.trials,
    })
}

/// Shots per point in the pumping measurement.
pub const FIG2_SHOTS: usize = 1000;

/// Synthetic pumping measurement with `FIG2_SHOTS` fresh ions behind every
/// population at every cycle index up to `config.n_cycles`.
///
/// Read-out is destructive and each sublevel is measured separately, so
/// every value comes from its own independent ensemble.
pub fn fig2_synthetic_dataset(
    config: &RepumpConfig,
    constants: &AtomicConstants,
    table: &BranchingTable,
    seed: u64,
) -> Result<Vec<TrajectoryPoint>> {
    let mut points = Vec::with_capacity(config.n_cycles + 1);
    for cycle in 0..=config.n_cycles {
        let mut populations = [0.0; 4];
        let mut std_errors = [0.0; 4];
        for k in 0..4 {
            let unit = (cycle * 4 + k) as u64;
            let cfg = RepumpConfig {
                trials: FIG2_SHOTS,
                n_cycles: cycle,
                seed: substream(seed, Domain::Synthetic, unit).random(),
                ..config.clone()
            };
            let run = run_monte_carlo(&cfg, constants, table)?;
            let p = run.points[cycle].populations[k];
            let hits = (p * FIG2_SHOTS as f64).round() as u64;
            populations[k] = p;
            std_errors[k] = crate::fit::binomial_std_error(hits, FIG2_SHOTS as u64);
        }
        points.push(TrajectoryPoint {
            cycle,
            populations,
            std_errors,
        });
    }
    Ok(points)
}
