//! JSON simulation configuration.
//!
//! ```json
//! {
//!   "domain": {"Lx": 1, "Ly": 1, "nx": 32, "ny": 32, "robin_edges": ["right"]},
//!   "time":   {"T": 0.25, "dt": 0.0025},
//!   "model":  {"lambda": 1, "alpha": 2, "K2": 1,
//!              "g": {"coefficients": [1, 1], "exponents": [0, 1]},
//!              "b": {"variant": "saturating", "r": 1, "sigma": 0.5}},
//!   "bc":     {"phi": 0.1},
//!   "ic":     {"u": {"preset": "constant", "value": 1}, "v": {"preset": "constant", "value": 0}},
//!   "solver": {"picard_tol": 1e-9},
//!   "output": {"stride": 10}
//! }
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::ForchheimerPolynomial;
use crate::coupling::{CouplingSpec, CouplingVariant};
use crate::error::{Error, Result};
use crate::grid::{Edge, GridSpec, ScalarField, Segment, StructuredGrid};
use crate::solver::SolverControls;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub domain: GridSpec,
    pub time: TimeSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub bc: BcSpec,
    pub ic: IcSpec,
    #[serde(default)]
    pub solver: SolverControls,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lambda: f64,
    pub alpha: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub g: ForchheimerPolynomial,
    /// `null` disables the exchange term.
    pub b: Option<CouplingSpec>,
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
}

fn default_eps_reg() -> f64 {
    1e-8
}

/// Robin coefficient: one value for every Robin face, or one per Robin face
/// in boundary-face order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Constant(f64),
    PerFace(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcSpec {
    pub phi: PhiSpec,
}

impl Default for BcSpec {
    fn default() -> Self {
        Self { phi: PhiSpec::Constant(0.0) }
    }
}

impl BcSpec {
    /// Expands to one value per boundary face (zero on Neumann faces).
    pub fn phi_per_face(&self, grid: &StructuredGrid) -> Result<Vec<f64>> {
        let mut phi = vec![0.0; grid.boundary_faces().len()];
        let robin: Vec<usize> = grid.faces_in(Segment::Robin).map(|(k, _)| k).collect();
        match &self.phi {
            PhiSpec::Constant(c) => robin.iter().for_each(|&k| phi[k] = *c),
            PhiSpec::PerFace(values) => {
                if values.len() != robin.len() {
                    return Err(Error::Validation(format!(
                        "phi lists {} values but the grid has {} Robin faces",
                        values.len(),
                        robin.len()
                    )));
                }
                robin.iter().zip(values).for_each(|(&k, &v)| phi[k] = v);
            }
        }
        if let Some(v) = phi.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!(
                "Robin coefficient phi must be finite and non-negative, got {v}"
            )));
        }
        Ok(phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSpec {
    pub u: InitialCondition,
    pub v: InitialCondition,
}

fn one() -> f64 {
    1.0
}

/// Initial-condition presets, evaluated at cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant {
        value: f64,
    },
    /// `offset + amplitude · cos(kx π x / Lx) · cos(ky π y / Ly)`.
    CosineMode {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        kx: f64,
        #[serde(default)]
        ky: f64,
    },
    /// `offset + amplitude · exp(−|x − x0|² / (2 width²))`.
    GaussianBump {
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        x0: f64,
        y0: f64,
        width: f64,
    },
    /// Independent uniform samples in `[lo, hi)` per cell, in cell order.
    SeededUniformRandom {
        lo: f64,
        hi: f64,
        seed: u64,
    },
    Sum {
        terms: Vec<InitialCondition>,
    },
}

impl InitialCondition {
    pub fn cosine(amplitude: f64, offset: f64, kx: f64, ky: f64) -> Self {
        Self::CosineMode { amplitude, offset, kx, ky }
    }

    pub fn plus(self, other: InitialCondition) -> Self {
        match self {
            Self::Sum { mut terms } => {
                terms.push(other);
                Self::Sum { terms }
            }
            first => Self::Sum { terms: vec![first, other] },
        }
    }

    pub fn evaluate(&self, grid: &StructuredGrid) -> Result<ScalarField> {
        let (lx, ly) = (grid.lx(), grid.ly());
        let field = match *self {
            Self::Constant { value } => grid.constant_field(value),
            Self::CosineMode { amplitude, offset, kx, ky } => grid.field_from_fn(|x, y| {
                offset
                    + amplitude
                        * (kx * std::f64::consts::PI * x / lx).cos()
                        * (ky * std::f64::consts::PI * y / ly).cos()
            }),
            Self::GaussianBump { amplitude, offset, x0, y0, width } => {
                if !(width > 0.0) {
                    return Err(Error::Validation(format!(
                        "gaussian_bump width must be positive, got {width}"
                    )));
                }
                grid.field_from_fn(|x, y| {
                    let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                    offset + amplitude * (-r2 / (2.0 * width * width)).exp()
                })
            }
            Self::SeededUniformRandom { lo, hi, seed } => {
                if !(hi > lo) {
                    return Err(Error::Validation(format!(
                        "seeded_uniform_random needs lo < hi, got [{lo}, {hi})"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = (0..grid.cell_count()).map(|_| rng.gen_range(lo..hi)).collect();
                ScalarField::from_values(grid.nx(), grid.ny(), values)?
            }
            Self::Sum { ref terms } => {
                let mut acc = grid.constant_field(0.0);
                for t in terms {
                    acc = acc.zip_with(&t.evaluate(grid)?, |a, b| a + b)?;
                }
                acc
            }
        };
        if !field.is_finite() {
            return Err(Error::Validation("initial condition produced non-finite values".into()));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Keep every `stride`-th step (the final state is always kept).
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn default_stride() -> usize {
    1
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { stride: 1, dir: None }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Validation(format!("cannot read config {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Admissible reference setup used by the stability sweeps:
    /// `g = 1 + s`, `λ = 1`, `α = 2`, saturating `b` with `r = 1`, `σ = 0.5`,
    /// `K₂ = 1`, `φ = 0.1` on the right edge, `T = 0.25`, `dt = 2.5·10⁻³`.
    pub fn reference(n: usize) -> Self {
        Self {
            domain: GridSpec::unit_square(n, &[Edge::Right]),
            time: TimeSpec { t_final: 0.25, dt: 2.5e-3 },
            model: ModelSpec {
                lambda: 1.0,
                alpha: 2.0,
                k2: 1.0,
                g: ForchheimerPolynomial::two_term(1.0, 1.0).expect("valid"),
                b: Some(CouplingSpec { variant: CouplingVariant::Saturating, r: 1.0, sigma: 0.5 }),
                eps_reg: default_eps_reg(),
            },
            bc: BcSpec { phi: PhiSpec::Constant(0.1) },
            ic: IcSpec {
                u: InitialCondition::cosine(0.5, 1.0, 1.0, 1.0),
                v: InitialCondition::GaussianBump {
                    amplitude: 0.8,
                    offset: 0.2,
                    x0: 0.3,
                    y0: 0.6,
                    width: 0.15,
                },
            },
            solver: SolverControls::default(),
            output: OutputSpec { stride: 1, dir: None },
        }
    }

    /// Linear heat problem with the exact solution `e^{−π² t} cos(π x)`:
    /// `g ≡ 1`, `λ = 1`, no exchange term, `φ = 0`.
    pub fn heat_mode(n: usize, t_final: f64, steps: usize) -> Self {
        Self {
            domain: GridSpec::unit_square(n, &[Edge::Right]),
            time: TimeSpec { t_final, dt: t_final / steps as f64 },
            model: ModelSpec {
                lambda: 1.0,
                alpha: 2.0,
                k2: 1.0,
                g: ForchheimerPolynomial::constant(1.0).expect("valid"),
                b: None,
                eps_reg: default_eps_reg(),
            },
            bc: BcSpec { phi: PhiSpec::Constant(0.0) },
            ic: IcSpec {
                u: InitialCondition::cosine(1.0, 0.0, 1.0, 0.0),
                v: InitialCondition::Constant { value: 0.0 },
            },
            solver: SolverControls::default(),
            output: OutputSpec { stride: steps.max(1), dir: None },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_roundtrips_through_json() {
        let cfg = SimulationConfig::reference(8);
        let back = SimulationConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let json = r#"{
            "domain": {"Lx": 1, "Ly": 1, "nx": 4, "ny": 4, "robin_edges": ["right"]},
            "time": {"T": 0.1, "dt": 0.01},
            "model": {"lambda": 1, "alpha": 2, "K2": 1,
                      "g": {"coefficients": [1], "exponents": [0]}, "b": null},
            "ic": {"u": {"preset": "cosine_mode"}, "v": {"preset": "constant", "value": 0}}
        }"#;
        let cfg = SimulationConfig::from_json(json).unwrap();
        assert_eq!(cfg.output.stride, 1);
        assert_eq!(cfg.bc.phi, PhiSpec::Constant(0.0));
        assert!(cfg.model.b.is_none());
        assert_eq!(cfg.solver, SolverControls::default());
    }

    #[test]
    fn phi_expansion() {
        let grid = GridSpec::unit_square(4, &[Edge::Right]).build().unwrap();
        let bc = BcSpec { phi: PhiSpec::Constant(0.3) };
        let phi = bc.phi_per_face(&grid).unwrap();
        assert_eq!(phi.iter().filter(|&&p| p == 0.3).count(), 4);
        assert_eq!(phi.iter().filter(|&&p| p == 0.0).count(), 12);
        let per = BcSpec { phi: PhiSpec::PerFace(vec![0.1, 0.2, 0.3]) };
        assert!(per.phi_per_face(&grid).is_err());
        let neg = BcSpec { phi: PhiSpec::Constant(-1.0) };
        assert!(neg.phi_per_face(&grid).is_err());
    }

    #[test]
    fn initial_condition_presets() {
        let grid = GridSpec::unit_square(8, &[Edge::Right]).build().unwrap();
        let c = InitialCondition::cosine(1.0, 0.0, 1.0, 0.0).evaluate(&grid).unwrap();
        let (x, _) = grid.center(0, 0);
        assert!((c.values()[0] - (std::f64::consts::PI * x).cos()).abs() < 1e-15);
        let r1 = InitialCondition::SeededUniformRandom { lo: 0.5, hi: 1.5, seed: 7 };
        let a = r1.evaluate(&grid).unwrap();
        assert_eq!(a, r1.evaluate(&grid).unwrap());
        assert!(a.min() >= 0.5 && a.max() < 1.5);
        let s = InitialCondition::Constant { value: 1.0 }
            .plus(InitialCondition::Constant { value: 2.0 })
            .evaluate(&grid)
            .unwrap();
        assert!(s.values().iter().all(|&v| v == 3.0));
        let bad = InitialCondition::SeededUniformRandom { lo: 1.0, hi: 1.0, seed: 0 };
        assert!(bad.evaluate(&grid).is_err());
    }
}
