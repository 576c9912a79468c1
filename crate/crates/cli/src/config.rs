//! Experiment files: one TOML table per run, selected by `kind`.

use std::path::PathBuf;

use serde::Deserialize;

use repump_core::atomic::AtomicConstants;
use repump_core::budget::BudgetInput;
use repump_core::fit::PumpModelParams;
use repump_core::rb::RbConfig;
use repump_core::repump::{Level, RepumpConfig, TransferOrder};

#[derive(Debug)]
pub enum Experiment {
    Simulate(SimulateSpec),
    Fit(FitSpec),
    Irb(IrbSpec),
    PopulationDecay(DecaySpec),
    Budget(BudgetSpec),
    Pulse(PulseSpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Fit(_) => "fit",
            Experiment::Irb(_) => "irb",
            Experiment::PopulationDecay(_) => "population_decay",
            Experiment::Budget(_) => "budget",
            Experiment::Pulse(_) => "pulse",
        }
    }

    /// Subcommand that runs this kind.
    pub fn command(&self) -> &'static str {
        match self {
            Experiment::Irb(_) | Experiment::PopulationDecay(_) => "rb",
            other => other.kind(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Experiment::Simulate(s) => s.seed,
            Experiment::Fit(s) => s.seed,
            Experiment::Irb(s) => s.seed,
            Experiment::PopulationDecay(s) => s.seed,
            Experiment::Budget(_) | Experiment::Pulse(_) => 0,
        }
    }

    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Experiment::Simulate(s) => s.out.as_ref(),
            Experiment::Fit(s) => s.out.as_ref(),
            Experiment::Irb(s) => s.out.as_ref(),
            Experiment::PopulationDecay(s) => s.out.as_ref(),
            Experiment::Budget(s) => s.out.as_ref(),
            Experiment::Pulse(s) => s.out.as_ref(),
        }
    }
}

fn parse_level<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Level, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn default_level() -> Level {
    Level::LeakMinus
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderSpec {
    #[default]
    Sequential,
    Simultaneous,
}

impl From<OrderSpec> for TransferOrder {
    fn from(o: OrderSpec) -> Self {
        match o {
            OrderSpec::Sequential => TransferOrder::Sequential,
            OrderSpec::Simultaneous => TransferOrder::Simultaneous,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    /// Hz; converted to rad/s.
    pub delta_hf_hz: Option<f64>,
    pub gamma_d: Option<f64>,
    pub bracket_lifetime: Option<f64>,
    pub branch_to_s: Option<f64>,
    pub branching_table: Option<PathBuf>,
}

impl ConstantsSpec {
    pub fn build(&self) -> repump_core::Result<AtomicConstants> {
        let d = AtomicConstants::default();
        AtomicConstants::new(
            self.delta_hf_hz.map_or(d.delta_hf, |f| 2.0 * std::f64::consts::PI * f),
            self.gamma_d.unwrap_or(d.gamma_d),
            self.bracket_lifetime.unwrap_or(d.bracket_lifetime),
            self.branch_to_s.unwrap_or(d.branch_to_s),
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[allow(dead_code)]
    kind: String,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "one")]
    pub transfer_fidelity: f64,
    #[serde(default)]
    pub pol_impurity_935: f64,
    #[serde(default = "yes")]
    pub shelf_cleanup: bool,
    #[serde(default = "ten")]
    pub n_cycles: usize,
    #[serde(default = "thousand")]
    pub trials: usize,
    #[serde(default)]
    pub transfer_order: OrderSpec,
    #[serde(default = "default_level", deserialize_with = "parse_level")]
    pub initial: Level,
    #[serde(default)]
    pub prep_error: f64,
    #[serde(default)]
    pub readout_error: f64,
    pub constants: Option<ConstantsSpec>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn ten() -> usize {
    10
}
fn thousand() -> usize {
    1000
}

impl SimulateSpec {
    pub fn repump_config(&self, seed: u64) -> RepumpConfig {
        RepumpConfig {
            transfer_fidelity: self.transfer_fidelity,
            pol_impurity_935: self.pol_impurity_935,
            shelf_cleanup: self.shelf_cleanup,
            n_cycles: self.n_cycles,
            trials: self.trials,
            seed,
            transfer_order: self.transfer_order.into(),
            initial: self.initial,
            prep_error: self.prep_error,
            readout_error: self.readout_error,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub r_to0: f64,
    pub r_stay: f64,
    pub r_to1: f64,
    pub scale_a: f64,
    pub offset_b: f64,
}

impl From<ParamsSpec> for PumpModelParams {
    fn from(p: ParamsSpec) -> Self {
        PumpModelParams {
            r_to0: p.r_to0,
            r_stay: p.r_stay,
            r_to1: p.r_to1,
            scale_a: p.scale_a,
            offset_b: p.offset_b,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTrajectory {
    pub r_to0: f64,
    pub r_stay: f64,
    pub r_to1: f64,
    pub scale_a: f64,
    pub offset_b: f64,
    pub max_cycle: usize,
    pub shots: u64,
}

impl SyntheticTrajectory {
    pub fn params(&self) -> PumpModelParams {
        PumpModelParams {
            r_to0: self.r_to0,
            r_stay: self.r_stay,
            r_to1: self.r_to1,
            scale_a: self.scale_a,
            offset_b: self.offset_b,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[allow(dead_code)]
    kind: String,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Trajectory CSV, relative to the config file.
    pub data: Option<PathBuf>,
    pub synthetic: Option<SyntheticTrajectory>,
    #[serde(default = "default_level", deserialize_with = "parse_level")]
    pub initial: Level,
    pub initial_guess: Option<ParamsSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum BaselineSpec {
    Fixed(f64),
    Keyword(BaselineKeyword),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKeyword {
    Free,
}

impl BaselineSpec {
    pub fn value(self) -> Option<f64> {
        match self {
            BaselineSpec::Fixed(b) => Some(b),
            BaselineSpec::Keyword(BaselineKeyword::Free) => None,
        }
    }
}

fn half() -> BaselineSpec {
    BaselineSpec::Fixed(0.5)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrbSpec {
    #[allow(dead_code)]
    kind: String,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_lengths")]
    pub sequence_lengths: Vec<usize>,
    #[serde(default = "ten")]
    pub sequences_per_length: usize,
    #[serde(default = "hundred")]
    pub shots: u64,
    #[serde(default)]
    pub error_per_clifford: f64,
    #[serde(default)]
    pub interleaved_extra_error: f64,
    #[serde(default)]
    pub interleaved_leak_rate: f64,
    /// Measured datasets replacing the simulation, relative to the config file.
    pub reference_data: Option<PathBuf>,
    pub interleaved_data: Option<PathBuf>,
    #[serde(default = "five_hundred")]
    pub resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "half")]
    pub baseline: BaselineSpec,
}

fn default_lengths() -> Vec<usize> {
    vec![2, 50, 150]
}
fn hundred() -> u64 {
    100
}
fn five_hundred() -> usize {
    500
}
fn default_confidence() -> f64 {
    0.68
}

impl IrbSpec {
    pub fn rb_config(&self, seed: u64) -> RbConfig {
        RbConfig {
            sequence_lengths: self.sequence_lengths.clone(),
            sequences_per_length: self.sequences_per_length,
            shots: self.shots,
            error_per_clifford: self.error_per_clifford,
            interleaved_extra_error: self.interleaved_extra_error,
            interleaved_leak_rate: self.interleaved_leak_rate,
            seed,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    #[allow(dead_code)]
    kind: String,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Decay CSV, relative to the config file.
    pub data: Option<PathBuf>,
    pub rate: Option<f64>,
    #[serde(default)]
    pub cycles: Vec<f64>,
    pub shots: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[allow(dead_code)]
    kind: String,
    pub out: Option<PathBuf>,
    pub eps0: f64,
    #[serde(default)]
    pub eps_l: f64,
    pub eps_q: f64,
    #[serde(default = "default_target")]
    pub suppression_target: f64,
    pub cycle_time: f64,
}

fn default_target() -> f64 {
    1000.0
}

impl From<&BudgetSpec> for BudgetInput {
    fn from(b: &BudgetSpec) -> Self {
        BudgetInput {
            eps0: b.eps0,
            eps_l: b.eps_l,
            eps_q: b.eps_q,
            suppression_target: b.suppression_target,
            cycle_time: b.cycle_time,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    #[allow(dead_code)]
    kind: String,
    pub out: Option<PathBuf>,
    pub tau_pi: f64,
    pub edge_times_ns: Vec<f64>,
    pub detunings_hz: Vec<f64>,
    #[serde(default = "one_sample")]
    pub averaging_samples: usize,
    pub constants: Option<ConstantsSpec>,
}

fn one_sample() -> usize {
    1
}

#[derive(Deserialize)]
struct Kind {
    kind: String,
}

/// Reads the `kind` first so that field errors keep their line anchors.
pub fn parse(text: &str) -> Result<Experiment, toml::de::Error> {
    let Kind { kind } = toml::from_str(text)?;
    Ok(match kind.as_str() {
        "simulate" => Experiment::Simulate(toml::from_str(text)?),
        "fit" => Experiment::Fit(toml::from_str(text)?),
        "irb" => Experiment::Irb(toml::from_str(text)?),
        "population_decay" => Experiment::PopulationDecay(toml::from_str(text)?),
        "budget" => Experiment::Budget(toml::from_str(text)?),
        "pulse" => Experiment::Pulse(toml::from_str(text)?),
        other => {
            return Err(serde::de::Error::custom(format!(
                "unknown kind `{other}`, expected one of simulate, fit, irb, population_decay, budget, pulse"
            )))
        }
    })
}
