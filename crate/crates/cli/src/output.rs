//! Artifact writing, manifests and bundled presets.

use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Experiment;
use crate::Failure;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig2Simulate,
    Fig2Fit,
    Fig3Irb,
    Fig4Decay,
    BudgetN7,
    PulseEdges,
}

impl Preset {
    pub fn text(self) -> &'static str {
        match self {
            Preset::Fig2Simulate => include_str!("../presets/fig2_simulate.toml"),
            Preset::Fig2Fit => include_str!("../presets/fig2_fit.toml"),
            Preset::Fig3Irb => include_str!("../presets/fig3_irb.toml"),
            Preset::Fig4Decay => include_str!("../presets/fig4_decay.toml"),
            Preset::BudgetN7 => include_str!("../presets/budget_n7.toml"),
            Preset::PulseEdges => include_str!("../presets/pulse_edges.toml"),
        }
    }
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Everything a subcommand produced.
pub struct Run {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    pub converged: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Writes artifacts, `report.json` and `manifest.json` into `dir`.
pub fn write_run(dir: &Path, experiment: &Experiment, config_text: &str, seed: u64, run: &Run) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::invalid(format!("{}: {e}", dir.display())))?;
    let mut files = BTreeMap::new();
    let report = serde_json::to_vec_pretty(&run.summary).expect("summary serializes");
    for (name, bytes) in run
        .artifacts
        .iter()
        .map(|a| (a.name.as_str(), a.bytes.as_slice()))
        .chain(std::iter::once(("report.json", report.as_slice())))
    {
        write(&dir.join(name), bytes)?;
        files.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = json!({
        "tool": "repump",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": experiment.kind(),
        "seed": seed,
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "files": files,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write(&dir.join("manifest.json"), &bytes)
}
