//! Leakage budget arithmetic for placing repump cycles in an error-correction
//! schedule.

use crate::error::{domain, ensure_positive, ensure_probability, Error, Result};

/// Inputs for one budget evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInput {
    /// Initial error, dominated by leakage.
    pub eps0: f64,
    /// Leakage-inducing error per cycle.
    pub eps_l: f64,
    /// Qubit error per cycle that stays in the subspace.
    pub eps_q: f64,
    pub suppression_target: f64,
    /// Seconds per repump cycle.
    pub cycle_time: f64,
}

impl Default for BudgetInput {
    fn default() -> Self {
        Self {
            eps0: 1e-3,
            eps_l: 0.0,
            eps_q: 2e-5,
            suppression_target: 1000.0,
            cycle_time: 10e-6,
        }
    }
}

impl BudgetInput {
    pub fn validate(&self) -> Result<()> {
        ensure_probability("eps0", self.eps0)?;
        ensure_probability("eps_l", self.eps_l)?;
        ensure_probability("eps_q", self.eps_q)?;
        if !(self.suppression_target >= 1.0 && self.suppression_target.is_finite()) {
            return Err(domain(format!(
                "suppression target must be at least 1, got {}",
                self.suppression_target
            )));
        }
        ensure_positive("cycle_time", self.cycle_time)
    }
}

/// Leakage population after `n` cycles at the ideal pumping rate of 1/3.
pub fn leakage_after_cycles(eps0: f64, eps_l: f64, n: u32) -> f64 {
    let decay = 3f64.powi(n as i32).recip();
    eps0 * decay + 1.5 * eps_l * (1.0 - decay)
}

/// Total error after `n` cycles.
pub fn total_error(eps0: f64, eps_q: f64, eps_l: f64, n: u32) -> f64 {
    eps0 + added_error(eps_q, eps_l, n)
}

/// Error added by `n` cycles.
pub fn added_error(eps_q: f64, eps_l: f64, n: u32) -> f64 {
    f64::from(n) * (eps_q + eps_l)
}

/// Smallest cycle count bringing leakage to `eps0 / suppression_target`.
pub fn min_cycles(eps0: f64, eps_l: f64, suppression_target: f64) -> Result<u32> {
    ensure_probability("eps0", eps0)?;
    ensure_probability("eps_l", eps_l)?;
    if !(suppression_target >= 1.0 && suppression_target.is_finite()) {
        return Err(domain(format!(
            "suppression target must be at least 1, got {suppression_target}"
        )));
    }
    let level = eps0 / suppression_target;
    if eps0 <= level {
        return Ok(0);
    }
    let floor = 1.5 * eps_l;
    if floor >= level {
        return Err(Error::Infeasible { floor, level });
    }
    let mut n = 1;
    while leakage_after_cycles(eps0, eps_l, n) > level {
        n += 1;
    }
    Ok(n)
}

/// Wall-clock time of `n` cycles.
pub fn schedule_time(n: u32, cycle_time: f64) -> f64 {
    f64::from(n) * cycle_time
}

/// Full budget for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    pub n_min: u32,
    pub leakage_final: f64,
    pub total_error: f64,
    pub total_added: f64,
    pub schedule_time: f64,
}

pub fn evaluate(input: &BudgetInput) -> Result<BudgetReport> {
    input.validate()?;
    let n = min_cycles(input.eps0, input.eps_l, input.suppression_target)?;
    Ok(BudgetReport {
        n_min: n,
        leakage_final: leakage_after_cycles(input.eps0, input.eps_l, n),
        total_error: total_error(input.eps0, input.eps_q, input.eps_l, n),
        total_added: added_error(input.eps_q, input.eps_l, n),
        schedule_time: schedule_time(n, input.cycle_time),
    })
}
