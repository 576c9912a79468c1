//! Quadrupole transfer pulses: closed-form off-resonant error estimates and a
//! numerical two-level propagator used to check them.
//!
//! The unwanted transition |1⟩ ↔ ²D₃/₂|F=2, m_F=±2⟩ sits `delta_hf` away from
//! the drive and couples with Rabi frequency `Ω_ε = coupling_ratio() · Ω₀`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{domain, ensure_finite, ensure_positive, Error, Result};

/// Ω_ε / Ω₀ = 2√2 / 3.
pub fn coupling_ratio() -> f64 {
    2.0 * 2f64.sqrt() / 3.0
}

/// Square-pulse off-resonant population, (Ω_ε/δ_hf)² = 8π²/(9 (δ_hf τ_π)²).
pub fn square_pulse_offres_error(tau_pi: f64, delta_hf: f64) -> Result<f64> {
    ensure_positive("tau_pi", tau_pi)?;
    ensure_positive("delta_hf", delta_hf)?;
    Ok((coupling_ratio() * PI / tau_pi / delta_hf).powi(2))
}

/// Transient-population floor γ τ_π (Ω_ε/δ_hf)² reached with ideal shaping.
pub fn scattering_error_floor(tau_pi: f64, delta_hf: f64, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(domain(format!("gamma must be non-negative and finite, got {gamma}")));
    }
    Ok(gamma * tau_pi * square_pulse_offres_error(tau_pi, delta_hf)?)
}

/// Qubit phase from the differential AC Stark shift Ω_ε²/(2δ_hf) over τ_π.
pub fn ac_stark_phase(tau_pi: f64, delta_hf: f64) -> Result<f64> {
    ensure_positive("tau_pi", tau_pi)?;
    ensure_positive("delta_hf", delta_hf)?;
    let omega_eps = coupling_ratio() * PI / tau_pi;
    Ok(omega_eps * omega_eps / (2.0 * delta_hf) * tau_pi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseShape {
    Square,
    /// Raised-cosine (Tukey) turn-on and turn-off ramps around a flat top.
    RaisedCosine,
}

/// Amplitude envelope of a transfer pulse with on-resonance area π.
///
/// Shaped pulses keep the square pulse's peak Rabi frequency π/τ_π and stretch
/// the flat top so the area stays π; total duration is `tau_pi + edge_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEnvelope {
    pub shape: PulseShape,
    pub tau_pi: f64,
    pub edge_time: f64,
    pub peak_rabi: f64,
}

impl PulseEnvelope {
    pub fn square(tau_pi: f64) -> Result<Self> {
        ensure_positive("tau_pi", tau_pi)?;
        Ok(Self {
            shape: PulseShape::Square,
            tau_pi,
            edge_time: 0.0,
            peak_rabi: PI / tau_pi,
        })
    }

    pub fn raised_cosine(tau_pi: f64, edge_time: f64) -> Result<Self> {
        ensure_positive("tau_pi", tau_pi)?;
        if !(edge_time >= 0.0 && edge_time.is_finite()) {
            return Err(domain(format!("edge_time must be non-negative, got {edge_time}")));
        }
        if edge_time > tau_pi {
            return Err(domain(format!(
                "edge_time {edge_time} exceeds half the pulse duration {}",
                (tau_pi + edge_time) / 2.0
            )));
        }
        Ok(Self {
            shape: PulseShape::RaisedCosine,
            tau_pi,
            edge_time,
            peak_rabi: PI / tau_pi,
        })
    }

    pub fn duration(&self) -> f64 {
        self.tau_pi + self.edge_time
    }

    /// Rabi frequency at time `t`, zero outside `[0, duration]`.
    pub fn rabi(&self, t: f64) -> f64 {
        let total = self.duration();
        if !(0.0..=total).contains(&t) {
            return 0.0;
        }
        let te = self.edge_time;
        if self.shape == PulseShape::Square || te == 0.0 {
            return self.peak_rabi;
        }
        let ramp = |x: f64| 0.5 * (1.0 - (PI * x / te).cos());
        if t < te {
            self.peak_rabi * ramp(t)
        } else if t > total - te {
            self.peak_rabi * ramp(total - t)
        } else {
            self.peak_rabi
        }
    }

    /// Points where the envelope or one of its derivatives is discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        let total = self.duration();
        if self.edge_time > 0.0 {
            vec![0.0, self.edge_time, total - self.edge_time, total]
        } else {
            vec![0.0, total]
        }
    }

    /// Pulse area ∫Ω dt by composite Simpson quadrature on each smooth piece.
    pub fn quadrature_area(&self) -> f64 {
        let bp = self.breakpoints();
        bp.windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let n = 2000;
                let h = (b - a) / n as f64;
                let mut sum = self.rabi(a) + self.rabi(b);
                for k in 1..n {
                    let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
                    sum += weight * self.rabi(a + k as f64 * h);
                }
                sum * h / 3.0
            })
            .sum()
    }
}

/// Ground/excited amplitudes of a driven two-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState {
    pub amplitude_g: Complex64,
    pub amplitude_e: Complex64,
}

impl TwoLevelState {
    pub fn ground() -> Self {
        Self {
            amplitude_g: Complex64::new(1.0, 0.0),
            amplitude_e: Complex64::new(0.0, 0.0),
        }
    }

    pub fn excited_population(&self) -> f64 {
        self.amplitude_e.norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitude_g.norm_sqr() + self.amplitude_e.norm_sqr()
    }

    fn max_diff(&self, other: &Self) -> f64 {
        (self.amplitude_g - other.amplitude_g)
            .norm()
            .max((self.amplitude_e - other.amplitude_e).norm())
    }
}

const MAX_STEPS: usize = 20_000_000;
const NORM_TOLERANCE: f64 = 1e-9;

/// Rotating-frame propagation of `initial` through `envelope` at constant `detuning`.
///
/// `step_tolerance` bounds the local amplitude error of every accepted step.
pub fn propagate(
    envelope: &PulseEnvelope,
    detuning: f64,
    initial: TwoLevelState,
    step_tolerance: f64,
) -> Result<TwoLevelState> {
    propagate_with_coupling(envelope, 1.0, detuning, initial, step_tolerance)
}

/// As [`propagate`], with the envelope's Rabi frequency multiplied by `coupling`.
pub fn propagate_with_coupling(
    envelope: &PulseEnvelope,
    coupling: f64,
    detuning: f64,
    initial: TwoLevelState,
    step_tolerance: f64,
) -> Result<TwoLevelState> {
    ensure_finite("coupling", coupling)?;
    ensure_finite("detuning", detuning)?;
    ensure_positive("tau_pi", envelope.tau_pi)?;
    ensure_finite("peak_rabi", envelope.peak_rabi)?;
    for amp in [initial.amplitude_g, initial.amplitude_e] {
        ensure_finite("initial amplitude", amp.re)?;
        ensure_finite("initial amplitude", amp.im)?;
    }
    if !(step_tolerance > 0.0 && step_tolerance <= 1e-3) {
        return Err(domain(format!("step_tolerance must be in (0, 1e-3], got {step_tolerance}")));
    }

    let rabi = |t: f64| coupling * envelope.rabi(t);
    let peak = (coupling * envelope.peak_rabi).abs();
    let h_max = 2.0 / (peak * peak + detuning * detuning).sqrt().max(f64::MIN_POSITIVE);

    let mut state = initial;
    let initial_norm = initial.norm_sqr();
    let mut steps = 0usize;
    for piece in envelope.breakpoints().windows(2) {
        let (start, end) = (piece[0], piece[1]);
        let span = end - start;
        if span <= 0.0 {
            continue;
        }
        let mut t = start;
        let mut h = span.min(h_max);
        while t < end {
            if t + h > end {
                h = end - t;
            }
            let full = magnus_step(&rabi, detuning, t, h, state);
            let half = magnus_step(&rabi, detuning, t, 0.5 * h, state);
            let two_halves = magnus_step(&rabi, detuning, t + 0.5 * h, 0.5 * h, half);
            let err = full.max_diff(&two_halves);
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Convergence(format!(
                    "propagation exceeded {MAX_STEPS} steps at t = {t:e} s"
                )));
            }
            if err <= step_tolerance {
                state = two_halves;
                t += h;
                let grow = if err == 0.0 {
                    2.0
                } else {
                    (0.9 * (step_tolerance / err).powf(0.2)).clamp(0.2, 2.0)
                };
                h = (h * grow).min(h_max);
            } else {
                h *= (0.9 * (step_tolerance / err).powf(0.2)).clamp(0.1, 0.5);
                if h < span * 1e-14 {
                    return Err(Error::Convergence(format!(
                        "step size underflow at t = {t:e} s"
                    )));
                }
            }
        }
    }
    if (state.norm_sqr() - initial_norm).abs() > NORM_TOLERANCE {
        return Err(Error::Convergence(format!(
            "norm drifted from {initial_norm} to {}",
            state.norm_sqr()
        )));
    }
    Ok(state)
}

/// Fourth-order Magnus step for H(t) = ½(Ω(t) σx + δ σz).
///
/// The step operator is an exact SU(2) rotation, so the norm is preserved to
/// rounding.
fn magnus_step(rabi: &impl Fn(f64) -> f64, detuning: f64, t: f64, h: f64, s: TwoLevelState) -> TwoLevelState {
    let offset = 3f64.sqrt() / 6.0;
    let o1 = rabi(t + h * (0.5 - offset));
    let o2 = rabi(t + h * (0.5 + offset));
    // exp(-i v·σ) with the commutator correction in the σy component.
    let vx = 0.25 * h * (o1 + o2);
    let vy = -(3f64.sqrt() / 24.0) * h * h * detuning * (o2 - o1);
    let vz = 0.5 * h * detuning;
    let angle = (vx * vx + vy * vy + vz * vz).sqrt();
    if angle == 0.0 {
        return s;
    }
    let (sin, cos) = angle.sin_cos();
    let (nx, ny, nz) = (vx / angle, vy / angle, vz / angle);
    let i = Complex64::i();
    let u00 = Complex64::new(cos, 0.0) - i * sin * nz;
    let u11 = Complex64::new(cos, 0.0) + i * sin * nz;
    let u01 = -i * sin * Complex64::new(nx, -ny);
    let u10 = -i * sin * Complex64::new(nx, ny);
    TwoLevelState {
        amplitude_g: u00 * s.amplitude_g + u01 * s.amplitude_e,
        amplitude_e: u10 * s.amplitude_g + u11 * s.amplitude_e,
    }
}

/// Step tolerance used by the off-resonant error estimates.
pub const OFFRES_STEP_TOLERANCE: f64 = 1e-12;

/// Population left in the off-resonant level after `envelope`, starting in |1⟩.
pub fn shaped_pulse_offres_error(envelope: &PulseEnvelope, delta_hf: f64) -> Result<f64> {
    ensure_positive("delta_hf", delta_hf)?;
    let end = propagate_with_coupling(
        envelope,
        coupling_ratio(),
        delta_hf,
        TwoLevelState::ground(),
        OFFRES_STEP_TOLERANCE,
    )?;
    Ok(end.excited_population())
}

/// Off-resonant population averaged over `samples` detunings spanning one
/// period 2π/T of the final-phase oscillation above `delta_hf`.
///
/// The unaveraged value depends on where the pulse ends within the fast
/// off-resonant oscillation; this average removes that accident of timing.
pub fn averaged_offres_error(envelope: &PulseEnvelope, delta_hf: f64, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(domain("samples must be at least 1"));
    }
    let period = 2.0 * PI / envelope.duration();
    let mut total = 0.0;
    for k in 0..samples {
        let detuning = delta_hf + period * k as f64 / samples as f64;
        total += shaped_pulse_offres_error(envelope, detuning)?;
    }
    Ok(total / samples as f64)
}

/// One row of an off-resonant error scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub edge_time: f64,
    /// Detuning in Hz (δ/2π).
    pub detuning_hz: f64,
    pub leakage_probability: f64,
}

/// Off-resonant leakage for each (edge time, detuning in Hz) pair.
///
/// With `averaging_samples > 1` each point is the detuning average of
/// [`averaged_offres_error`].
pub fn pulse_scan(
    tau_pi: f64,
    edge_times: &[f64],
    detunings_hz: &[f64],
    averaging_samples: usize,
) -> Result<Vec<ScanPoint>> {
    let mut out = Vec::with_capacity(edge_times.len() * detunings_hz.len());
    for &edge_time in edge_times {
        let envelope = if edge_time == 0.0 {
            PulseEnvelope::square(tau_pi)?
        } else {
            PulseEnvelope::raised_cosine(tau_pi, edge_time)?
        };
        for &detuning_hz in detunings_hz {
            let delta = 2.0 * PI * detuning_hz;
            let leakage_probability = if averaging_samples > 1 {
                averaged_offres_error(&envelope, delta, averaging_samples)?
            } else {
                shaped_pulse_offres_error(&envelope, delta)?
            };
            out.push(ScanPoint {
                edge_time,
                detuning_hz,
                leakage_probability,
            });
        }
    }
    Ok(out)
}
