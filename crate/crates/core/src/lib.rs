//! Finite-volume laboratory for a coupled degenerate Forchheimer /
//! semilinear system of active and passive crowd densities.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod constitutive;
pub mod coupling;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod quadrature;
pub mod solver;

pub use config::{InitialCondition, SimulationConfig};
pub use constitutive::{BoundsGrid, ConstitutiveBounds, ForchheimerPolynomial};
pub use coupling::{CouplingFunction, CouplingSpec, CouplingVariant};
pub use error::{Error, Result};
pub use grid::{Edge, GridSpec, ScalarField, Segment, StructuredGrid};
pub use solver::{ModelParameters, SimulationState, SolverControls, StepStats, Trajectory};
