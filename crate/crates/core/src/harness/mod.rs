//! Experiment drivers, configuration ingestion and report output.

pub mod check;
mod corpus;
mod experiments;
mod report;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::error::{Error, Result};

pub use corpus::energy_corpus;
pub use experiments::{
    constitutive_table, convergence_study, energy_envelope_study, simulate, stability_sweep,
    uniqueness_study, AxisSummary, ConstitutiveTable, ConstitutiveTableSpec, ConvergenceReport,
    ConvergenceRow, EnergyEnvelopeLevel, EnergyEnvelopeReport, RunMetadata, SimulationOutput,
    SweepCell, SweepReport, UniquenessLevel, UniquenessReport,
};
pub use report::{
    format_float, render_csv, render_json, serialize_report, write_pair, CsvCell, CsvMirror,
    EnergySeries,
    ReportFormat,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Simulate,
    Convergence,
    Uniqueness,
    StabilitySweep,
    GradientStability,
    Check,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Uniqueness => "uniqueness",
            ExperimentKind::StabilitySweep => "stability_sweep",
            ExperimentKind::GradientStability => "gradient_stability",
            ExperimentKind::Check => "check",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "simulate" => Ok(Self::Simulate),
            "convergence" => Ok(Self::Convergence),
            "uniqueness" => Ok(Self::Uniqueness),
            "stability_sweep" => Ok(Self::StabilitySweep),
            "gradient_stability" => Ok(Self::GradientStability),
            "check" => Ok(Self::Check),
            _ => Err(Error::Validation(format!("unknown experiment kind '{s}'"))),
        }
    }
}

/// Data that a paired run perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Passive diffusivity.
    #[serde(rename = "D")]
    D,
    /// Exchange rate.
    #[serde(rename = "r")]
    R,
    /// Robin coefficient, shifted on every Γ^R face.
    #[serde(rename = "phi")]
    Phi,
    /// Active initial state, shifted by `ε cos(πx)`.
    #[serde(rename = "u0")]
    U0,
    /// Passive initial state, shifted by `ε cos(πx)`.
    #[serde(rename = "v0")]
    V0,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [Self::D, Self::R, Self::Phi, Self::U0, Self::V0];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::D => "D",
            SweepAxis::R => "r",
            SweepAxis::Phi => "phi",
            SweepAxis::U0 => "u0",
            SweepAxis::V0 => "v0",
        }
    }

    /// Four halving steps.
    pub fn default_values(self) -> Vec<f64> {
        let top = match self {
            SweepAxis::D | SweepAxis::R => 0.2,
            SweepAxis::Phi | SweepAxis::U0 | SweepAxis::V0 => 0.1,
        };
        (0..4).map(|k| top / f64::powi(2.0, k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_sweep() -> Vec<SweepSpec> {
    SweepAxis::ALL
        .iter()
        .map(|&axis| SweepSpec { axis, values: axis.default_values() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceOptions {
    /// Cells per side, increasing.
    pub grids: Vec<usize>,
    pub t_final: f64,
    /// Step count on the first grid; scaled by `(n / grids[0])²` so `dt ∝ h²`.
    pub coarse_steps: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { grids: vec![16, 32, 64], t_final: 0.1, coarse_steps: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessOptions {
    /// Amplitude of the `cos(πx)` shift applied to `u0` in the perturbed pair.
    pub amplitude: f64,
    /// Also run on a grid refined once with `dt` halved.
    pub refine: bool,
}

impl Default for UniquenessOptions {
    fn default() -> Self {
        Self { amplitude: 1e-6, refine: true }
    }
}

fn default_base() -> SimulationConfig {
    SimulationConfig::reference(32)
}

fn default_beta() -> f64 {
    1.0
}

/// Top-level experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default = "default_base")]
    pub base: SimulationConfig,
    #[serde(default = "default_sweep")]
    pub sweep: Vec<SweepSpec>,
    /// Upper bound for every `|r₁ − r₂|` in the sweep; defaults to the largest one.
    #[serde(default)]
    pub r_bar: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub convergence: ConvergenceOptions,
    #[serde(default)]
    pub uniqueness: UniquenessOptions,
    /// Smaller samples and grids for the check suite.
    #[serde(default)]
    pub quick: bool,
    /// Exponent of `(1 + ‖u‖^α)` in the gradient-energy bracket.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::default(),
            base: default_base(),
            sweep: default_sweep(),
            r_bar: None,
            output_dir: None,
            convergence: ConvergenceOptions::default(),
            uniqueness: UniquenessOptions::default(),
            quick: false,
            beta: default_beta(),
        }
    }
}

impl ExperimentConfig {
    pub fn with_kind(kind: ExperimentKind) -> Self {
        Self { kind, ..Self::default() }
    }

    /// Parses an experiment document; a bare simulation config is accepted
    /// as the `base` of a default experiment.
    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<Self>(text) {
            Ok(cfg) => Ok(cfg),
            Err(exp_err) => match SimulationConfig::from_json(text) {
                Ok(base) => Ok(Self { base, ..Self::default() }),
                Err(_) => Err(Error::Json(exp_err)),
            },
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The `r̄` used for this sweep, checked against every `|Δr|`.
    pub fn effective_r_bar(&self) -> Result<Option<f64>> {
        let max_dr = self
            .sweep
            .iter()
            .filter(|s| s.axis == SweepAxis::R)
            .flat_map(|s| s.values.iter().map(|v| v.abs()))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        match (self.r_bar, max_dr) {
            (Some(bar), _) if !(bar > 0.0) => {
                Err(Error::Validation(format!("r_bar must be positive, got {bar}")))
            }
            (Some(bar), Some(dr)) if bar < dr => Err(Error::Validation(format!(
                "r_bar = {bar} is smaller than the sweep's |r1 - r2| = {dr}"
            ))),
            (Some(bar), _) => Ok(Some(bar)),
            (None, dr) => Ok(dr),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Validation(format!("sweep axis {} has no values", s.axis.name())));
            }
            if s.values.iter().any(|v| !(v.is_finite() && *v != 0.0)) {
                return Err(Error::Validation(format!(
                    "sweep axis {} needs finite non-zero values",
                    s.axis.name()
                )));
            }
        }
        self.effective_r_bar()?;
        if !self.beta.is_finite() {
            return Err(Error::Validation("beta must be finite".into()));
        }
        Ok(())
    }
}

/// Files written by an experiment and any failures recorded along the way.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub kind: ExperimentKind,
    pub files: Vec<PathBuf>,
    pub invariant_failures: Vec<String>,
    pub numerical_failures: Vec<String>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.invariant_failures.is_empty() && self.numerical_failures.is_empty()
    }

    /// 0 on success, 3 if any child run failed numerically, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if !self.numerical_failures.is_empty() {
            3
        } else if !self.invariant_failures.is_empty() {
            1
        } else {
            0
        }
    }
}

/// Number of worker threads for sweeps: `FCL_THREADS` when set.
pub fn sweep_threads() -> Result<Option<usize>> {
    match std::env::var("FCL_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Validation(format!("FCL_THREADS must be a positive integer, got '{s}'"))),
        },
    }
}

pub(crate) fn sweep_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = sweep_threads()? {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start sweep thread pool: {e}")))
}

/// Runs `config.kind` and writes its reports into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    experiments::dispatch(config, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_from_cli_spellings() {
        assert_eq!("stability-sweep".parse::<ExperimentKind>().unwrap(), ExperimentKind::StabilitySweep);
        assert_eq!("check".parse::<ExperimentKind>().unwrap(), ExperimentKind::Check);
        assert!("nope".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn default_sweep_halves_four_times() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.sweep.len(), 5);
        assert_eq!(cfg.sweep[1].values, vec![0.2, 0.1, 0.05, 0.025]);
        assert_eq!(cfg.effective_r_bar().unwrap(), Some(0.2));
    }

    #[test]
    fn r_bar_must_dominate_sweep() {
        let cfg = ExperimentConfig { r_bar: Some(0.1), ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
        let cfg = ExperimentConfig { r_bar: Some(0.5), ..Default::default() };
        assert_eq!(cfg.effective_r_bar().unwrap(), Some(0.5));
    }

    #[test]
    fn bare_simulation_config_becomes_base() {
        let sim = SimulationConfig::reference(8);
        let cfg = ExperimentConfig::from_json(&sim.to_json().unwrap()).unwrap();
        assert_eq!(cfg.base, sim);
        let json = r#"{"kind": "uniqueness", "uniqueness": {"amplitude": 1e-4}}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Uniqueness);
        assert_eq!(cfg.uniqueness.amplitude, 1e-4);
        assert!(cfg.uniqueness.refine);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn outcome_exit_codes() {
        let mut o = ExperimentOutcome::default();
        assert_eq!(o.exit_code(), 0);
        o.invariant_failures.push("x".into());
        assert_eq!(o.exit_code(), 1);
        o.numerical_failures.push("y".into());
        assert_eq!(o.exit_code(), 3);
    }
}
