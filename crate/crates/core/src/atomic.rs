//! Level structure, quadrupole coupling geometry and decay branching for the
//! ¹⁷¹Yb⁺ leakage repump.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{domain, ensure_finite, ensure_positive, Error, Result};

/// Polarization angle `theta` and k-vector angle `phi` of the 435 nm beam,
/// both measured from the quantization axis, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionGeometry {
    pub theta: f64,
    pub phi: f64,
}

impl TransitionGeometry {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        ensure_finite("theta", theta)?;
        ensure_finite("phi", phi)?;
        Ok(Self { theta, phi })
    }

    /// Polarization and k-vector both orthogonal to the magnetic field.
    pub fn orthogonal() -> Self {
        Self {
            theta: PI / 2.0,
            phi: PI / 2.0,
        }
    }
}

/// Relative quadrupole coupling strength for a `delta_m` = Δm_F transition.
///
/// Depends only on |Δm_F|; values are at most 1/2 (Δm = 0) and 1/√6 otherwise.
pub fn geometric_factor(delta_m: i32, geom: TransitionGeometry) -> Result<f64> {
    let (st, ct) = geom.theta.sin_cos();
    let (sp, cp) = geom.phi.sin_cos();
    let (s2p, c2p) = (2.0 * geom.phi).sin_cos();
    let inv_sqrt6 = 1.0 / 6f64.sqrt();
    match delta_m.abs() {
        0 => Ok(0.5 * (ct * s2p).abs()),
        1 => Ok(inv_sqrt6 * Complex64::new(ct * c2p, st * cp).norm()),
        2 => Ok(inv_sqrt6 * Complex64::new(0.5 * ct * s2p, st * sp).norm()),
        _ => Err(domain(format!("delta_m must be in {{0, ±1, ±2}}, got {delta_m}"))),
    }
}

/// Transitions driven at or above `threshold`, strongest first.
///
/// Both signs of Δm_F are listed; ties keep ascending Δm_F order.
pub fn selection_table(geom: TransitionGeometry, threshold: f64) -> Result<Vec<(i32, f64)>> {
    if !(threshold >= 0.0) {
        return Err(domain(format!("threshold must be non-negative, got {threshold}")));
    }
    let mut table = Vec::with_capacity(5);
    for dm in -2..=2 {
        let g = geometric_factor(dm, geom)?;
        if g >= threshold {
            table.push((dm, g));
        }
    }
    table.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(table)
}

/// Atomic rates and branching ratios used by the repump model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicConstants {
    /// ²D₃/₂ hyperfine splitting, rad/s.
    pub delta_hf: f64,
    /// ²D₃/₂ scattering rate, 1/s.
    pub gamma_d: f64,
    /// ³[3/2]₁/₂ lifetime, s.
    pub bracket_lifetime: f64,
    /// Probability that ³[3/2]₁/₂ decays to ²S₁/₂.
    pub branch_to_s: f64,
    /// Probability that ³[3/2]₁/₂ decays to ²D₃/₂.
    pub branch_to_d: f64,
}

impl Default for AtomicConstants {
    fn default() -> Self {
        Self::new(2.0 * PI * 860e6, 1.0 / 52.7e-3, 38e-9, 0.982).expect("valid defaults")
    }
}

impl AtomicConstants {
    /// `branch_to_d` is fixed to `1 - branch_to_s`.
    pub fn new(delta_hf: f64, gamma_d: f64, bracket_lifetime: f64, branch_to_s: f64) -> Result<Self> {
        ensure_positive("delta_hf", delta_hf)?;
        ensure_positive("gamma_d", gamma_d)?;
        ensure_positive("bracket_lifetime", bracket_lifetime)?;
        if !(0.0..=1.0).contains(&branch_to_s) {
            return Err(domain(format!("branch_to_s must lie in [0, 1], got {branch_to_s}")));
        }
        Ok(Self {
            delta_hf,
            gamma_d,
            bracket_lifetime,
            branch_to_s,
            branch_to_d: 1.0 - branch_to_s,
        })
    }

    /// Default constants with the ²D₃/₂ decay channel switched off.
    pub fn without_d_branch() -> Self {
        Self {
            branch_to_s: 1.0,
            branch_to_d: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Manifold {
    /// ²S₁/₂ ground manifold (qubit and leakage states).
    S12,
    /// ²D₃/₂ metastable manifold.
    D32,
    /// ³[3/2]₁/₂ bracket state excited at 935 nm.
    Bracket,
}

impl Manifold {
    fn label(self) -> &'static str {
        match self {
            Manifold::S12 => "S1/2",
            Manifold::D32 => "D3/2",
            Manifold::Bracket => "3[3/2]1/2",
        }
    }

    fn allowed_f(self) -> &'static [u8] {
        match self {
            Manifold::S12 | Manifold::Bracket => &[0, 1],
            Manifold::D32 => &[1, 2],
        }
    }
}

/// A hyperfine Zeeman sublevel `|manifold, F, m_F⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sublevel {
    pub manifold: Manifold,
    pub f: u8,
    pub mf: i8,
}

impl Sublevel {
    pub const QUBIT0: Sublevel = Sublevel::raw(Manifold::S12, 0, 0);
    pub const QUBIT1: Sublevel = Sublevel::raw(Manifold::S12, 1, 0);
    pub const LEAK_MINUS: Sublevel = Sublevel::raw(Manifold::S12, 1, -1);
    pub const LEAK_PLUS: Sublevel = Sublevel::raw(Manifold::S12, 1, 1);

    const fn raw(manifold: Manifold, f: u8, mf: i8) -> Self {
        Self { manifold, f, mf }
    }

    pub fn new(manifold: Manifold, f: u8, mf: i8) -> Result<Self> {
        if !manifold.allowed_f().contains(&f) {
            return Err(domain(format!("F={f} does not exist in {}", manifold.label())));
        }
        if mf.unsigned_abs() > f {
            return Err(domain(format!("|mf|={} exceeds F={f}", mf.unsigned_abs())));
        }
        Ok(Self { manifold, f, mf })
    }

    /// One of the three ³[3/2]₁/₂ F=1 sublevels.
    pub fn bracket(mf: i8) -> Result<Self> {
        Self::new(Manifold::Bracket, 1, mf)
    }
}

impl fmt::Display for Sublevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(F={},mf={})", self.manifold.label(), self.f, self.mf)
    }
}

impl FromStr for Sublevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed sublevel name {s:?}, expected e.g. S1/2(F=1,mf=-1)"));
        let s = s.trim();
        let (label, rest) = s.split_once('(').ok_or_else(bad)?;
        let manifold = [Manifold::S12, Manifold::D32, Manifold::Bracket]
            .into_iter()
            .find(|m| m.label() == label)
            .ok_or_else(bad)?;
        let inner = rest.strip_suffix(')').ok_or_else(bad)?;
        let (f_part, mf_part) = inner.split_once(',').ok_or_else(bad)?;
        let f = f_part
            .trim()
            .strip_prefix("F=")
            .and_then(|v| v.parse::<u8>().ok())
            .ok_or_else(bad)?;
        let mf = mf_part
            .trim()
            .strip_prefix("mf=")
            .and_then(|v| v.trim_start_matches('+').parse::<i8>().ok())
            .ok_or_else(bad)?;
        Sublevel::new(manifold, f, mf)
    }
}

/// Probability distribution over named sublevels.
#[derive(Debug, Clone, PartialEq)]
pub struct SublevelDistribution {
    weights: BTreeMap<Sublevel, f64>,
}

impl SublevelDistribution {
    const TOLERANCE: f64 = 1e-12;

    pub fn new(weights: BTreeMap<Sublevel, f64>) -> Result<Self> {
        if let Some((lvl, w)) = weights.iter().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
            return Err(domain(format!("weight {w} for {lvl} outside [0, 1]")));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(domain(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn weight(&self, level: Sublevel) -> f64 {
        self.weights.get(&level).copied().unwrap_or(0.0)
    }

    pub fn manifold_weight(&self, manifold: Manifold) -> f64 {
        self.weights
            .iter()
            .filter(|(l, _)| l.manifold == manifold)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sublevel, f64)> + '_ {
        self.weights.iter().map(|(l, w)| (*l, *w))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    sources: BTreeMap<String, BTreeMap<String, f64>>,
}

const DEFAULT_TABLE: &str = include_str!("../data/branching_default.toml");

/// Decay weights of each ³[3/2]₁/₂ F=1 sublevel conditioned on landing in ²S₁/₂.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingTable {
    sources: BTreeMap<Sublevel, BTreeMap<Sublevel, f64>>,
}

impl Default for BranchingTable {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_TABLE).expect("bundled branching table is valid")
    }
}

impl BranchingTable {
    /// Parses a table file; see `data/branching_default.toml` for the layout.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawTable = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut sources = BTreeMap::new();
        for (src_name, row) in raw.sources {
            let src: Sublevel = src_name.parse()?;
            if src.manifold != Manifold::Bracket || src.f != 1 {
                return Err(domain(format!("source {src} is not a 3[3/2]1/2 F=1 sublevel")));
            }
            let mut weights = BTreeMap::new();
            for (dst_name, w) in row {
                let dst: Sublevel = dst_name.parse()?;
                if dst.manifold != Manifold::S12 {
                    return Err(domain(format!("destination {dst} of {src} is not in S1/2")));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(domain(format!("weight {w} for {src} -> {dst} outside [0, 1]")));
                }
                weights.insert(dst, w);
            }
            let total: f64 = weights.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(domain(format!("weights of {src} sum to {total}, expected 1")));
            }
            weights.values_mut().for_each(|w| *w /= total);
            sources.insert(src, weights);
        }
        for mf in -1..=1 {
            let src = Sublevel::bracket(mf)?;
            if !sources.contains_key(&src) {
                return Err(domain(format!("branching table lacks source {src}")));
            }
        }
        Ok(Self { sources })
    }

    /// Weights over ²S₁/₂ given that `source` decays there.
    pub fn s_conditional(&self, source: Sublevel) -> Result<&BTreeMap<Sublevel, f64>> {
        self.sources
            .get(&source)
            .ok_or_else(|| domain(format!("{source} is not a 3[3/2]1/2 F=1 sublevel")))
    }

    /// Full decay distribution of `source`: ²S₁/₂ weights scaled by
    /// `branch_to_s`, and the remainder on the ²D₃/₂ F=2 shelf.
    pub fn decay_distribution(&self, source: Sublevel, constants: &AtomicConstants) -> Result<SublevelDistribution> {
        let s_weights = self.s_conditional(source)?;
        let mut weights: BTreeMap<Sublevel, f64> = s_weights
            .iter()
            .map(|(l, w)| (*l, w * constants.branch_to_s))
            .collect();
        if constants.branch_to_d > 0.0 {
            let shelf = Sublevel::new(Manifold::D32, 2, source.mf)?;
            weights.insert(shelf, constants.branch_to_d);
        }
        SublevelDistribution::new(weights)
    }
}

/// Decay distribution of a ³[3/2]₁/₂ F=1 sublevel under the bundled table.
pub fn bracket_decay_distribution(source: Sublevel, constants: &AtomicConstants) -> Result<SublevelDistribution> {
    BranchingTable::default().decay_distribution(source, constants)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn orthogonal_geometry_only_drives_delta_m_two() {
        let g = TransitionGeometry::orthogonal();
        assert!(geometric_factor(0, g).unwrap().abs() < TOL);
        assert!(geometric_factor(1, g).unwrap().abs() < TOL);
        assert!(geometric_factor(-1, g).unwrap().abs() < TOL);
        assert!((geometric_factor(2, g).unwrap() - 1.0 / 6f64.sqrt()).abs() < TOL);
        assert!((geometric_factor(-2, g).unwrap() - 1.0 / 6f64.sqrt()).abs() < TOL);
    }

    #[test]
    fn delta_m_zero_maximum() {
        let g = TransitionGeometry::new(0.0, PI / 4.0).unwrap();
        assert!((geometric_factor(0, g).unwrap() - 0.5).abs() < TOL);
    }

    #[test]
    fn out_of_range_delta_m_is_rejected() {
        let g = TransitionGeometry::orthogonal();
        assert!(matches!(geometric_factor(3, g), Err(Error::Domain(_))));
        assert!(matches!(geometric_factor(-5, g), Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_angles_rejected() {
        assert!(TransitionGeometry::new(f64::NAN, 0.0).is_err());
        assert!(TransitionGeometry::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn selection_table_orthogonal() {
        let table = selection_table(TransitionGeometry::orthogonal(), 1e-9).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].0, -2);
        assert_eq!(table[1].0, 2);
        for (_, s) in table {
            assert!((s - 1.0 / 6f64.sqrt()).abs() < TOL);
        }
        assert!(selection_table(TransitionGeometry::orthogonal(), 1.0).unwrap().is_empty());
        assert!(selection_table(TransitionGeometry::orthogonal(), -1.0).is_err());
    }

    #[test]
    fn one_degree_misalignment_opens_delta_m_one() {
        let theta = PI / 2.0 - 0.0175;
        let geom = TransitionGeometry::new(theta, PI / 2.0).unwrap();
        let table = selection_table(geom, 1e-9).unwrap();
        // Direct evaluation: cosθ·cos2φ = -sin(0.0175), sinθ·cosφ ≈ 0.
        let expected = (0.0175f64).sin() / 6f64.sqrt();
        let g1 = table.iter().find(|(dm, _)| *dm == 1).expect("|Δm|=1 present").1;
        assert!((g1 - expected).abs() < 1e-12);
        assert_eq!(table[0].0.abs(), 2);
    }

    #[test]
    fn sublevel_names_round_trip() {
        for lvl in [Sublevel::QUBIT0, Sublevel::LEAK_MINUS, Sublevel::bracket(1).unwrap()] {
            let parsed: Sublevel = lvl.to_string().parse().unwrap();
            assert_eq!(parsed, lvl);
        }
        assert!("S1/2(F=2,mf=0)".parse::<Sublevel>().is_err());
        assert!("P1/2(F=0,mf=0)".parse::<Sublevel>().is_err());
    }

    #[test]
    fn constants_defaults() {
        let c = AtomicConstants::default();
        assert_eq!(c.branch_to_s + c.branch_to_d, 1.0);
        assert!((c.branch_to_d - 0.018).abs() < 1e-12);
        assert!((c.delta_hf - 2.0 * PI * 860e6).abs() < 1e-3);
        assert!(AtomicConstants::new(-1.0, 1.0, 1.0, 0.5).is_err());
        assert!(AtomicConstants::new(1.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn m0_source_returns_one_third_to_qubit() {
        let c = AtomicConstants::default();
        let dist = bracket_decay_distribution(Sublevel::bracket(0).unwrap(), &c).unwrap();
        let qubit = dist.weight(Sublevel::QUBIT0) + dist.weight(Sublevel::QUBIT1);
        assert!((qubit / c.branch_to_s - 1.0 / 3.0).abs() < TOL);
        assert!((dist.total() - 1.0).abs() < TOL);
    }

    #[test]
    fn d_branch_mass() {
        let c = AtomicConstants::default();
        for mf in -1..=1 {
            let dist = bracket_decay_distribution(Sublevel::bracket(mf).unwrap(), &c).unwrap();
            assert!((dist.manifold_weight(Manifold::D32) - 0.018).abs() < TOL);
            assert!((dist.manifold_weight(Manifold::S12) - 0.982).abs() < TOL);
            assert!((dist.total() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn unknown_source_rejected() {
        let c = AtomicConstants::default();
        assert!(bracket_decay_distribution(Sublevel::QUBIT1, &c).is_err());
        assert!(Sublevel::bracket(2).is_err());
    }

    #[test]
    fn table_validation() {
        let short = r#"
[sources."3[3/2]1/2(F=1,mf=0)"]
"S1/2(F=0,mf=0)" = 1.0
"#;
        assert!(BranchingTable::from_toml_str(short).is_err());
        let unnormalized = DEFAULT_TABLE.replacen("0.16666666666666666", "0.5", 1);
        assert!(BranchingTable::from_toml_str(&unnormalized).is_err());
        let wrong_manifold = DEFAULT_TABLE.replacen("\"S1/2(F=0,mf=0)\"", "\"D3/2(F=1,mf=0)\"", 1);
        assert!(BranchingTable::from_toml_str(&wrong_manifold).is_err());
    }

    #[test]
    fn invariants_over_angle_grid() {
        let bound2 = 1.0 / 6f64.sqrt() + 1e-15;
        for i in 0..100 {
            for j in 0..100 {
                let geom = TransitionGeometry::new(
                    -PI + 2.0 * PI * f64::from(i) / 99.0,
                    -PI + 2.0 * PI * f64::from(j) / 99.0,
                )
                .unwrap();
                let g0 = geometric_factor(0, geom).unwrap();
                let g1 = geometric_factor(1, geom).unwrap();
                let g2 = geometric_factor(2, geom).unwrap();
                assert!((0.0..=0.5 + 1e-15).contains(&g0));
                assert!((0.0..=bound2).contains(&g1));
                assert!((0.0..=bound2).contains(&g2));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn periodic_in_both_angles(theta in -10.0f64..10.0, phi in -10.0f64..10.0, dm in -2i32..=2) {
            let base = geometric_factor(dm, TransitionGeometry::new(theta, phi).unwrap()).unwrap();
            let shifted_t = geometric_factor(dm, TransitionGeometry::new(theta + 2.0 * PI, phi).unwrap()).unwrap();
            let shifted_p = geometric_factor(dm, TransitionGeometry::new(theta, phi + 2.0 * PI).unwrap()).unwrap();
            proptest::prop_assert!((base - shifted_t).abs() < 1e-12);
            proptest::prop_assert!((base - shifted_p).abs() < 1e-12);
        }
    }
}
