use std::fs::File;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use repump_core::atomic::{AtomicConstants, BranchingTable};
use repump_core::budget;
use repump_core::fit::{self, PumpModelParams};
use repump_core::io;
use repump_core::pulse;
use repump_core::rb::{self, DecayPoint, RbDataset};
use repump_core::repump::{self, EventModel, PopulationVector, TrajectoryPoint};

use crate::config::{ConstantsSpec, DecaySpec, Experiment, FitSpec, IrbSpec, PulseSpec, SimulateSpec};
use crate::output::{Artifact, Run};
use crate::{Failure, Format};

pub struct Context {
    pub seed: u64,
    pub base_dir: PathBuf,
    pub format: Format,
}

impl Context {
    fn open(&self, path: &Path) -> Result<File, Failure> {
        let full = self.base_dir.join(path);
        File::open(&full).map_err(|e| Failure::invalid(format!("{}: {e}", full.display())))
    }

    /// Tabular artifact as CSV or as a JSON array of records.
    fn table(
        &self,
        stem: &str,
        csv: impl FnOnce(&mut Vec<u8>) -> repump_core::Result<()>,
        records: impl FnOnce() -> Value,
    ) -> Result<Artifact, Failure> {
        let mut bytes = Vec::new();
        let ext = match self.format {
            Format::Csv => {
                csv(&mut bytes)?;
                "csv"
            }
            Format::Json => {
                bytes = serde_json::to_vec_pretty(&records()).expect("records serialize");
                bytes.push(b'\n');
                "json"
            }
        };
        Ok(Artifact {
            name: format!("{stem}.{ext}"),
            bytes,
        })
    }
}

pub fn execute(experiment: &Experiment, ctx: &Context) -> Result<Run, Failure> {
    match experiment {
        Experiment::Simulate(s) => simulate(s, ctx),
        Experiment::Fit(s) => fit_trajectory(s, ctx),
        Experiment::Irb(s) => irb(s, ctx),
        Experiment::PopulationDecay(s) => population_decay(s, ctx),
        Experiment::Budget(s) => {
            let report = budget::evaluate(&s.into())?;
            Ok(Run {
                artifacts: vec![],
                summary: json!({
                    "kind": "budget",
                    "n_min": report.n_min,
                    "leakage_final": report.leakage_final,
                    "total_error": report.total_error,
                    "total_added": report.total_added,
                    "schedule_time": report.schedule_time,
                }),
                converged: true,
            })
        }
        Experiment::Pulse(s) => pulse_scan(s, ctx),
    }
}

fn physics(spec: Option<&ConstantsSpec>, ctx: &Context) -> Result<(AtomicConstants, BranchingTable), Failure> {
    let Some(spec) = spec else {
        return Ok((AtomicConstants::default(), BranchingTable::default()));
    };
    let table = match &spec.branching_table {
        Some(path) => {
            let full = ctx.base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|e| Failure::invalid(format!("{}: {e}", full.display())))?;
            BranchingTable::from_toml_str(&text)?
        }
        None => BranchingTable::default(),
    };
    Ok((spec.build()?, table))
}

fn trajectory_records(points: &[TrajectoryPoint]) -> Value {
    Value::Array(
        points
            .iter()
            .map(|p| {
                let [p0, plm, p1, plp] = p.populations;
                let [se0, selm, se1, selp] = p.std_errors;
                json!({"cycle": p.cycle, "p0": p0, "pLm": plm, "p1": p1, "pLp": plp,
                       "se0": se0, "seLm": selm, "se1": se1, "seLp": selp})
            })
            .collect(),
    )
}

fn simulate(spec: &SimulateSpec, ctx: &Context) -> Result<Run, Failure> {
    let (constants, table) = physics(spec.constants.as_ref(), ctx)?;
    let config = spec.repump_config(ctx.seed);
    let trajectory = repump::run_monte_carlo(&config, &constants, &table)?;
    let expected = EventModel::new(&config, &constants, &table)?.expected_trajectory();
    let last = trajectory.points.last().expect("cycle 0 is always recorded");
    let exp_last = expected.last().expect("cycle 0 is always recorded");
    let artifact = ctx.table(
        "trajectory",
        |buf| io::write_trajectory_csv(buf, &trajectory.points),
        || trajectory_records(&trajectory.points),
    )?;
    Ok(Run {
        artifacts: vec![artifact],
        summary: json!({
            "kind": "simulate",
            "seed": ctx.seed,
            "trials": trajectory.trials,
            "n_cycles": config.n_cycles,
            "final_populations": last.populations,
            "final_leakage": last.leakage(),
            "expected_final_leakage": exp_last[1] + exp_last[3],
            "final_shelf": trajectory.shelf.last(),
        }),
        converged: true,
    })
}

fn params_json(p: &PumpModelParams) -> Value {
    json!({"r_to0": p.r_to0, "r_stay": p.r_stay, "r_to1": p.r_to1, "scale_a": p.scale_a, "offset_b": p.offset_b})
}

fn fit_trajectory(spec: &FitSpec, ctx: &Context) -> Result<Run, Failure> {
    let p0 = PopulationVector::pure(spec.initial);
    let mut artifacts = vec![];
    let data = match (&spec.data, &spec.synthetic) {
        (Some(path), None) => io::read_trajectory_csv(ctx.open(path)?)?,
        (None, Some(syn)) => {
            let data = fit::synthetic_dataset(&syn.params(), &p0, syn.max_cycle, syn.shots, ctx.seed)?;
            artifacts.push(ctx.table(
                "dataset",
                |buf| io::write_trajectory_csv(buf, &data),
                || trajectory_records(&data),
            )?);
            data
        }
        _ => return Err(Failure::invalid("a fit needs exactly one of `data` or `[synthetic]`")),
    };
    let guess = spec.initial_guess.map(PumpModelParams::from).unwrap_or_else(PumpModelParams::ideal);
    let result = fit::fit_pump_model(&data, &p0, &guess)?;
    Ok(Run {
        artifacts,
        summary: json!({
            "kind": "fit",
            "seed": ctx.seed,
            "params": params_json(&result.params),
            "uncertainties": params_json(&result.param_uncertainties),
            "cross_leakage": result.params.cross_leakage(),
            "residual_norm": result.residual_norm,
            "n_values": result.n_values,
            "iterations": result.iterations,
            "converged": result.converged,
        }),
        converged: result.converged,
    })
}

fn rb_records(data: &RbDataset) -> Value {
    Value::Array(
        data.rows
            .iter()
            .map(|r| json!({"length": r.length, "seq_index": r.seq_index, "survival": r.survival, "shots": r.shots}))
            .collect(),
    )
}

fn irb(spec: &IrbSpec, ctx: &Context) -> Result<Run, Failure> {
    let mut artifacts = vec![];
    let (reference, interleaved) = match (&spec.reference_data, &spec.interleaved_data) {
        (Some(r), Some(i)) => (io::read_rb_csv(ctx.open(r)?)?, io::read_rb_csv(ctx.open(i)?)?),
        (None, None) => {
            let config = spec.rb_config(ctx.seed);
            let reference = rb::simulate_rb(&config, false)?;
            let interleaved = rb::simulate_rb(&config, true)?;
            for (stem, data) in [("reference", &reference), ("interleaved", &interleaved)] {
                artifacts.push(ctx.table(stem, |buf| io::write_rb_csv(buf, data), || rb_records(data))?);
            }
            (reference, interleaved)
        }
        _ => {
            return Err(Failure::invalid(
                "`reference_data` and `interleaved_data` must be given together",
            ))
        }
    };
    let baseline = spec.baseline.value();
    let fit_ref = rb::fit_decay_with_baseline(&reference, baseline)?;
    let fit_int = rb::fit_decay_with_baseline(&interleaved, baseline)?;
    let eps = rb::interleaved_error(fit_ref.rate, fit_int.rate)?;
    let ci = rb::bootstrap_ci_with_baseline(&reference, &interleaved, spec.resamples, spec.confidence, ctx.seed, baseline)?;
    let converged = fit_ref.converged && fit_int.converged;
    let decay = |f: &rb::DecayFit| {
        json!({"amplitude": f.amplitude, "rate": f.rate, "baseline": f.baseline,
               "amplitude_err": f.amplitude_err, "rate_err": f.rate_err, "baseline_err": f.baseline_err,
               "converged": f.converged})
    };
    Ok(Run {
        artifacts,
        summary: json!({
            "kind": "irb",
            "seed": ctx.seed,
            "p_ref": fit_ref.rate,
            "p_int": fit_int.rate,
            "epsilon_g": eps,
            "negative_estimate": eps < 0.0,
            "ci": {
                "lower": ci.lower,
                "upper": ci.upper,
                "confidence": ci.confidence,
                "resamples": ci.resamples,
                "shot_only_fallback": ci.shot_only_fallback,
            },
            "reference_fit": decay(&fit_ref),
            "interleaved_fit": decay(&fit_int),
            "converged": converged,
        }),
        converged,
    })
}

fn population_decay(spec: &DecaySpec, ctx: &Context) -> Result<Run, Failure> {
    let mut artifacts = vec![];
    let points: Vec<DecayPoint> = match (&spec.data, spec.rate, spec.shots) {
        (Some(path), None, None) => io::read_decay_csv(ctx.open(path)?)?,
        (None, Some(rate), Some(shots)) => {
            let points = rb::synthetic_population_decay(rate, &spec.cycles, shots, ctx.seed)?;
            artifacts.push(ctx.table(
                "decay",
                |buf| io::write_decay_csv(buf, &points),
                || {
                    Value::Array(
                        points
                            .iter()
                            .map(|p| json!({"cycles": p.cycles, "survival": p.survival, "shots": p.shots}))
                            .collect(),
                    )
                },
            )?);
            points
        }
        _ => {
            return Err(Failure::invalid(
                "a population decay needs either `data` or all of `rate`, `cycles` and `shots`",
            ))
        }
    };
    let fit = rb::fit_population_decay(&points)?;
    Ok(Run {
        artifacts,
        summary: json!({
            "kind": "population_decay",
            "seed": ctx.seed,
            "rate": fit.rate,
            "rate_err": fit.rate_err,
            "converged": fit.converged,
        }),
        converged: fit.converged,
    })
}

fn pulse_scan(spec: &PulseSpec, ctx: &Context) -> Result<Run, Failure> {
    let (constants, _) = physics(spec.constants.as_ref(), ctx)?;
    let edges: Vec<f64> = spec.edge_times_ns.iter().map(|ns| ns * 1e-9).collect();
    let scan = pulse::pulse_scan(spec.tau_pi, &edges, &spec.detunings_hz, spec.averaging_samples)?;
    let artifact = ctx.table(
        "scan",
        |buf| io::write_scan_csv(buf, &scan),
        || {
            Value::Array(
                scan.iter()
                    .map(|p| {
                        json!({"edge_time_ns": p.edge_time * 1e9, "detuning_hz": p.detuning_hz,
                               "leakage_probability": p.leakage_probability})
                    })
                    .collect(),
            )
        },
    )?;
    let tau = spec.tau_pi;
    let delta = constants.delta_hf;
    Ok(Run {
        artifacts: vec![artifact],
        summary: json!({
            "kind": "pulse",
            "tau_pi": tau,
            "square_pulse_offres_error": pulse::square_pulse_offres_error(tau, delta)?,
            "scattering_error_floor": pulse::scattering_error_floor(tau, delta, constants.gamma_d)?,
            "ac_stark_phase": pulse::ac_stark_phase(tau, delta)?,
            "points": scan.len(),
        }),
        converged: true,
    })
}
