//! Experiment configuration (TOML).
//!
//! Times are in ms, frequencies in kHz unless a field says rad/ms. Every field
//! has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{RunError, RunResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub amplification: AmplificationConfig,
    pub trapping: TrappingConfig,
    pub linesearch: LinesearchConfig,
    pub resonance: ResonanceConfig,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_atoms: usize,
    /// Operating point of the trap control.
    pub lambda0: f64,
    pub josephson_khz: f64,
    /// Ground-state `xi_S` at `lambda0`.
    pub target_xi_s: f64,
    /// `Omega` falls by `e^-decay` when lambda grows by `lambda0`.
    pub map_decay: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Propagation step.
    pub dt: f64,
}

/// Drive frequency: `"auto"` (twice the Josephson frequency) or an explicit
/// value in rad/ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriveFrequency {
    Mode(DriveMode),
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMode {
    Auto,
}

impl DriveFrequency {
    pub fn resolve(&self, omega_j: f64) -> f64 {
        match self {
            DriveFrequency::Mode(DriveMode::Auto) => 2.0 * omega_j,
            DriveFrequency::Explicit(w) => *w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplificationConfig {
    /// Relative modulation amplitude of lambda.
    pub amplitude: f64,
    pub drive: DriveFrequency,
    pub duration: f64,
    /// Control sampling of the drive ramp.
    pub dt_ctrl: f64,
    /// Report every this many propagation steps.
    pub record_every: usize,
    pub husimi_times: Vec<f64>,
    pub husimi_theta_points: usize,
    pub husimi_phi_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrappingConfig {
    /// Start of the trapping ramp; the amplified state at this time is the
    /// initial state.
    pub t0: f64,
    pub duration: f64,
    pub lambda_end: f64,
    pub gammas: Vec<f64>,
    pub nu: f64,
    pub dt_ctrl: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    /// Uniform perturbation of the interior initial ramp samples (seeded).
    pub perturbation: f64,
    /// Free evolution at the final lambda after the ramp.
    pub hold: f64,
    pub record_every: usize,
    /// Also run the sinusoidal two-parameter search as a baseline.
    pub two_parameter: bool,
    pub two_parameter_evals: usize,
    pub two_parameter_amplitude_max: f64,
    /// Modulation frequencies searched, as multiples of the Josephson frequency.
    pub two_parameter_ratio: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinesearchConfig {
    pub t0_min: f64,
    pub t0_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceConfig {
    pub n_atoms: usize,
    pub amplitude: f64,
    /// Drive frequencies scanned, as multiples of the Josephson frequency.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
    pub duration: f64,
}

/// Pass/fail thresholds used by reports and the acceptance suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative residual allowed for the calibrated frequency and `xi_S`.
    pub calibration: f64,
    /// Required reduction factor of `xi_S` by the strong drive.
    pub amplification_factor: f64,
    /// Window (ms) within which the reduction must be reached.
    pub amplification_window: f64,
    /// Time (ms) at which `xi_S` must exceed its running minimum.
    pub degradation_time: f64,
    /// Relative window around twice the Josephson frequency for the peak.
    pub resonance_window: f64,
    /// Relative `xi_S` variation allowed during the hold.
    pub hold_variation: f64,
    /// `Omega` at the end of the ramp relative to its value at `lambda0`
    /// below which the hold check applies.
    pub hold_decoupling: f64,
    /// Relative slack when comparing the two-parameter search with OCT.
    pub two_parameter_slack: f64,
    pub robertson: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: PathBuf::from("out"),
            system: SystemConfig::default(),
            amplification: AmplificationConfig::default(),
            trapping: TrappingConfig::default(),
            linesearch: LinesearchConfig::default(),
            resonance: ResonanceConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_atoms: 1000,
            lambda0: 0.7,
            josephson_khz: 0.220,
            target_xi_s: 0.65,
            map_decay: 8.0,
            lambda_min: 0.0,
            lambda_max: 1.4,
            dt: 1e-3,
        }
    }
}

impl Default for AmplificationConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.05,
            drive: DriveFrequency::Mode(DriveMode::Auto),
            duration: 14.0,
            dt_ctrl: 1e-3,
            record_every: 10,
            husimi_times: vec![0.0, 5.0, 10.0, 14.0],
            husimi_theta_points: 91,
            husimi_phi_points: 181,
        }
    }
}

impl Default for TrappingConfig {
    fn default() -> Self {
        Self {
            t0: 10.0,
            duration: 2.0,
            lambda_end: 1.2,
            gammas: vec![0.0, 1.0, 100.0],
            nu: 1e-6,
            dt_ctrl: 0.01,
            max_iters: 200,
            grad_tol: 1e-8,
            rel_tol: 1e-7,
            initial_step: 0.05,
            perturbation: 0.0,
            hold: 2.0,
            record_every: 10,
            two_parameter: true,
            two_parameter_evals: 120,
            two_parameter_amplitude_max: 0.3,
            two_parameter_ratio: (0.5, 4.0),
        }
    }
}

impl Default for LinesearchConfig {
    fn default() -> Self {
        Self {
            t0_min: 9.0,
            t0_max: 11.0,
            points: 9,
        }
    }
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self {
            n_atoms: 100,
            amplitude: 0.01,
            ratio_min: 1.5,
            ratio_max: 2.5,
            points: 9,
            duration: 30.0,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            calibration: 1e-6,
            amplification_factor: 2.0,
            amplification_window: 10.0,
            degradation_time: 14.0,
            resonance_window: 0.10,
            hold_variation: 0.10,
            hold_decoupling: 0.01,
            two_parameter_slack: 1e-3,
            robertson: 1e-9,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> RunResult<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn load(path: &Path, overrides: &[String]) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys, TOML
    /// values; bare words are taken as strings) and validates the result.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> RunResult<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| RunError::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> RunResult<()> {
        let err = |m: String| Err(RunError::Config(m));
        if self.version != CONFIG_VERSION {
            return err(format!("unsupported config version {}", self.version));
        }
        let s = &self.system;
        if s.n_atoms < 2 || self.resonance.n_atoms < 2 {
            return err("atom numbers must be at least 2".into());
        }
        if !(s.lambda_min < s.lambda_max) || !(s.lambda0 > s.lambda_min && s.lambda0 < s.lambda_max) {
            return err(format!(
                "lambda0 = {} must lie inside ({}, {})",
                s.lambda0, s.lambda_min, s.lambda_max
            ));
        }
        if !(s.target_xi_s > 0.0 && s.target_xi_s < 1.0) {
            return err(format!("target_xi_s = {} must be in (0, 1)", s.target_xi_s));
        }
        let a = &self.amplification;
        let t = &self.trapping;
        let l = &self.linesearch;
        let r = &self.resonance;
        for (name, v) in [
            ("system.josephson_khz", s.josephson_khz),
            ("system.map_decay", s.map_decay),
            ("system.dt", s.dt),
            ("amplification.duration", a.duration),
            ("amplification.dt_ctrl", a.dt_ctrl),
            ("trapping.t0", t.t0),
            ("trapping.duration", t.duration),
            ("trapping.dt_ctrl", t.dt_ctrl),
            ("trapping.initial_step", t.initial_step),
            ("resonance.duration", r.duration),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("amplification.amplitude", a.amplitude),
            ("resonance.amplitude", r.amplitude),
            ("trapping.nu", t.nu),
            ("trapping.perturbation", t.perturbation),
            ("trapping.hold", t.hold),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let DriveFrequency::Explicit(w) = a.drive {
            if !(w >= 0.0) || !w.is_finite() {
                return err(format!("explicit drive frequency must be non-negative, got {w}"));
            }
        }
        if !(t.two_parameter_amplitude_max >= 0.0)
            || !(t.two_parameter_ratio.0 >= 0.0 && t.two_parameter_ratio.0 <= t.two_parameter_ratio.1)
        {
            return err("two-parameter search ranges are invalid".into());
        }
        if t.gammas.iter().any(|g| !(*g >= 0.0)) {
            return err("trapping.gammas must be non-negative".into());
        }
        if t.lambda_end < s.lambda_min || t.lambda_end > s.lambda_max {
            return err(format!("trapping.lambda_end = {} outside the lambda support", t.lambda_end));
        }
        if t.t0 > a.duration {
            return err(format!(
                "trapping.t0 = {} lies beyond the amplification duration {}",
                t.t0, a.duration
            ));
        }
        if !(l.t0_min <= l.t0_max) || l.t0_min <= 0.0 || l.t0_max > a.duration || l.points == 0 {
            return err(format!(
                "line search interval [{}, {}] must lie within (0, {}] with at least one point",
                l.t0_min, l.t0_max, a.duration
            ));
        }
        if !(r.ratio_min > 0.0 && r.ratio_min <= r.ratio_max) || r.points == 0 {
            return err("resonance scan needs 0 < ratio_min <= ratio_max and points >= 1".into());
        }
        if a.husimi_times.iter().any(|h| *h < 0.0 || *h > a.duration) {
            return err("husimi_times must lie within the amplification window".into());
        }
        if a.husimi_theta_points < 2 || a.husimi_phi_points < 2 {
            return err("Husimi grids need at least two points per axis".into());
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> RunResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(RunError::Config(format!("malformed key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| RunError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.amplification.drive = DriveFrequency::Explicit(2.5);
        cfg.trapping.gammas = vec![0.0, 3.5];
        cfg.seed = 99;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn overrides() {
        let o = [
            "system.n_atoms=50".to_string(),
            "amplification.drive = 1.25".to_string(),
            "trapping.gammas=[0, 2]".to_string(),
            "output_dir=runs/a".to_string(),
        ];
        let cfg = ExperimentConfig::from_toml_with_overrides("", &o).unwrap();
        assert_eq!(cfg.system.n_atoms, 50);
        assert_eq!(cfg.amplification.drive, DriveFrequency::Explicit(1.25));
        assert_eq!(cfg.trapping.gammas, vec![0.0, 2.0]);
        assert_eq!(cfg.output_dir, PathBuf::from("runs/a"));
        let auto = ExperimentConfig::from_toml_with_overrides("", &["amplification.drive=auto".into()]).unwrap();
        assert_eq!(auto.amplification.drive, DriveFrequency::Mode(DriveMode::Auto));
    }

    #[test]
    fn rejects_bad_input() {
        for o in ["system.bogus=1", "amplification.duration=-1", "trapping.t0=20", "nokey", "system.n_atoms=\"x\""] {
            let e = ExperimentConfig::from_toml_with_overrides("", &[o.to_string()]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{o}");
        }
        assert!(ExperimentConfig::from_toml_str("[system]\nn_atoms = ").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
