//! Implicit time stepping of the coupled active–passive system
//!
//! ```text
//! ∂t(u^λ) − div(K₁(|∇u|)∇u) = −b(u − v)
//! ∂t v    − K₂ Δv           =  b(u − v)
//! −K₁∇u·n = φ u^λ on Γ^R,  zero flux on Γ^N,  −K₂∇v·n = 0 on ∂Ω
//! ```
//!
//! Backward Euler in time, two-point finite-volume fluxes in space. Each
//! step runs a Picard loop that freezes the face permeabilities `K₁` and the
//! slope of `b` at the previous iterate. The frozen system couples `u` and
//! `v` through a symmetric block and is solved in one conjugate gradient
//! call; both the flux terms and the exchange terms cancel exactly when the
//! two equations are summed, so every iterate conserves `∫(u + v)` when
//! `λ = 1` and `φ = 0`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::constitutive::ForchheimerPolynomial;
use crate::coupling::CouplingFunction;
use crate::error::{Error, Result};
use crate::grid::{ScalarField, Segment, StructuredGrid};
use crate::linalg::{self, CsrBuilder, CsrMatrix};

/// Physical and discretization parameters of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// Time-derivative exponent `λ ∈ (0, 1]`.
    pub lambda: f64,
    /// Norm exponent `α ∈ [2 − δ, 2]`.
    pub alpha: f64,
    /// Passive diffusivity `K₂` (also written `D`).
    pub k2: f64,
    pub poly: ForchheimerPolynomial,
    /// `None` switches the exchange term off.
    pub coupling: Option<CouplingFunction>,
    /// Robin coefficient per boundary face; zero on Neumann faces.
    pub phi: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    /// Lower clamp for `u` in the `λ < 1` linearization.
    pub eps_reg: f64,
}

impl ModelParameters {
    /// `δ = 1 − λ`.
    pub fn delta(&self) -> f64 {
        1.0 - self.lambda
    }

    /// `λ < 1` runs are outside the regime covered by the stability theory.
    pub fn is_experimental(&self) -> bool {
        self.lambda != 1.0
    }

    pub fn degeneracy_exponent(&self) -> f64 {
        self.poly.degeneracy_exponent()
    }

    pub fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Validation(format!("lambda must lie in (0, 1], got {}", self.lambda)));
        }
        let lo = 2.0 - self.delta();
        if !(self.alpha >= lo - 1e-12 && self.alpha <= 2.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in [2 - delta, 2] = [{lo}, 2], got {}",
                self.alpha
            )));
        }
        if !(self.k2 > 0.0 && self.k2.is_finite()) {
            return Err(Error::Validation(format!("K2 must be positive, got {}", self.k2)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Validation(format!("T must be non-negative, got {}", self.t_final)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.eps_reg > 0.0) {
            return Err(Error::Validation(format!("eps_reg must be positive, got {}", self.eps_reg)));
        }
        if self.phi.len() != grid.boundary_faces().len() {
            return Err(Error::Validation(format!(
                "phi has {} entries for {} boundary faces",
                self.phi.len(),
                grid.boundary_faces().len()
            )));
        }
        if let Some(p) = self.phi.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Validation(format!("phi must be finite and non-negative, got {p}")));
        }
        for (k, f) in grid.boundary_faces().iter().enumerate() {
            if !f.robin && self.phi[k] != 0.0 {
                return Err(Error::Validation(format!(
                    "phi is non-zero on Neumann face {k} ({:?} #{})",
                    f.edge, f.index
                )));
            }
        }
        Ok(())
    }

    /// `‖φ‖_{L∞(Γ^R)}`.
    pub fn phi_sup(&self, grid: &StructuredGrid) -> f64 {
        grid.faces_in(Segment::Robin).map(|(k, _)| self.phi[k]).fold(0.0, f64::max)
    }

    pub fn phi_is_zero(&self) -> bool {
        self.phi.iter().all(|&p| p == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverControls {
    /// Relative nonlinear residual at which the Picard loop stops.
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Relative residual of each conjugate gradient solve.
    pub linear_tol: f64,
    pub linear_max: usize,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            picard_tol: 1e-9,
            picard_max: 50,
            linear_tol: 1e-10,
            linear_max: 10_000,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0 && self.linear_tol > 0.0) {
            return Err(Error::Validation("solver tolerances must be positive".into()));
        }
        if self.picard_max == 0 || self.linear_max == 0 {
            return Err(Error::Validation("solver iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub t: f64,
    /// Number of linear solves performed by the Picard loop.
    pub picard_iterations: usize,
    pub linear_iterations: usize,
    /// Relative nonlinear residual of the accepted iterate.
    pub residual: f64,
}

/// Face permeabilities `K₁(|∇u|)` on interior faces, with `|∇u|` taken as
/// the norm of the average of the two adjacent cell gradients.
///
/// Returns `(x_faces, y_faces)`: x-face `(i+½, j)` at `j (nx−1) + i`,
/// y-face `(i, j+½)` at `j nx + i`.
pub fn face_permeabilities(
    grid: &StructuredGrid,
    poly: &ForchheimerPolynomial,
    u: &ScalarField,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let grad = grid.gradient(u)?;
    let avg_norm = |a: [f64; 2], b: [f64; 2]| {
        let gx = 0.5 * (a[0] + b[0]);
        let gy = 0.5 * (a[1] + b[1]);
        (gx * gx + gy * gy).sqrt()
    };
    let mut kx = Vec::with_capacity((nx.saturating_sub(1)) * ny);
    for j in 0..ny {
        for i in 0..nx.saturating_sub(1) {
            let xi = avg_norm(grad[grid.index(i, j)], grad[grid.index(i + 1, j)]);
            kx.push(poly.k1(xi)?);
        }
    }
    let mut ky = Vec::with_capacity(nx * ny.saturating_sub(1));
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx {
            let xi = avg_norm(grad[grid.index(i, j)], grad[grid.index(i, j + 1)]);
            ky.push(poly.k1(xi)?);
        }
    }
    Ok((kx, ky))
}

/// Discrete `−div(K₁(|∇u_lag|)∇u)` per unit cell volume, with Robin
/// outflux `φ u^λ` on Γ^R and zero flux on Γ^N.
pub fn apply_forchheimer_operator(
    grid: &StructuredGrid,
    u: &ScalarField,
    u_lag: &ScalarField,
    params: &ModelParameters,
) -> Result<ScalarField> {
    grid.check_field(u)?;
    grid.check_field(u_lag)?;
    params.validate(grid)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (kx, ky) = face_permeabilities(grid, &params.poly, u_lag)?;
    let uv = u.values();
    let mut out = vec![0.0; uv.len()];
    let tx = grid.hy() / grid.hx();
    let ty = grid.hx() / grid.hy();
    for j in 0..ny {
        for i in 0..nx.saturating_sub(1) {
            let (p, q) = (grid.index(i, j), grid.index(i + 1, j));
            let flux = kx[j * (nx - 1) + i] * tx * (uv[p] - uv[q]);
            out[p] += flux;
            out[q] -= flux;
        }
    }
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx {
            let (p, q) = (grid.index(i, j), grid.index(i, j + 1));
            let flux = ky[j * nx + i] * ty * (uv[p] - uv[q]);
            out[p] += flux;
            out[q] -= flux;
        }
    }
    for (k, face) in grid.faces_in(Segment::Robin) {
        out[face.cell] += params.phi[k] * pow_lambda(uv[face.cell], params.lambda) * face.length;
    }
    let vol = grid.cell_volume();
    out.iter_mut().for_each(|o| *o /= vol);
    ScalarField::from_values(nx, ny, out)
}

fn pow_lambda(u: f64, lambda: f64) -> f64 {
    if lambda == 1.0 {
        u
    } else {
        u.max(0.0).powf(lambda)
    }
}

/// Frozen-coefficient system for one Picard iterate; unknowns are ordered
/// `[u_0 … u_{N−1}, v_0 … v_{N−1}]` and rows are scaled by cell volume.
struct PicardSystem {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
}

fn assemble(
    grid: &StructuredGrid,
    params: &ModelParameters,
    old: &SimulationState,
    lag_u: &[f64],
    lag_v: &[f64],
) -> Result<PicardSystem> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let n = grid.cell_count();
    let vol = grid.cell_volume();
    let dt = params.dt;
    let lambda = params.lambda;
    let lag_field = ScalarField::from_values(nx, ny, lag_u.to_vec())?;
    let (kx, ky) = face_permeabilities(grid, &params.poly, &lag_field)?;
    let tx = grid.hy() / grid.hx();
    let ty = grid.hx() / grid.hy();

    // Per-cell linearization data.
    let mut time_coef = vec![1.0; n];
    let mut robin_coef = vec![1.0; n];
    let mut rhs = vec![0.0; 2 * n];
    for k in 0..n {
        if lambda == 1.0 {
            rhs[k] = vol / dt * old.u.values()[k];
        } else {
            let ul = lag_u[k].max(params.eps_reg);
            let slope = lambda * ul.powf(lambda - 1.0);
            time_coef[k] = slope;
            robin_coef[k] = ul.powf(lambda - 1.0);
            let old_pow = pow_lambda(old.u.values()[k], lambda);
            rhs[k] = vol / dt * (old_pow - ul.powf(lambda) + slope * ul);
        }
        rhs[n + k] = vol / dt * old.v.values()[k];
    }
    let mut beta = vec![0.0; n];
    if let Some(cf) = &params.coupling {
        for k in 0..n {
            let z = lag_u[k] - lag_v[k];
            let slope = cf.eval_b_prime(z);
            let offset = cf.eval_b(z) - slope * z;
            beta[k] = slope;
            rhs[k] -= vol * offset;
            rhs[n + k] += vol * offset;
        }
    }
    let mut robin_diag = vec![0.0; n];
    for (f, face) in grid.faces_in(Segment::Robin) {
        robin_diag[face.cell] += params.phi[f] * face.length * robin_coef[face.cell];
    }

    let mut b = CsrBuilder::new(2 * n, 12 * n);
    for block in 0..2 {
        for j in 0..ny {
            for i in 0..nx {
                let p = grid.index(i, j);
                let (row_off, coef) = if block == 0 { (0, None) } else { (n, Some(params.k2)) };
                let trans = |kval: f64, geo: f64| coef.unwrap_or(kval) * geo;
                let mut diag = if block == 0 { vol / dt * time_coef[p] + robin_diag[p] } else { vol / dt };
                if i > 0 {
                    let t = trans(kx[j * (nx - 1) + i - 1], tx);
                    diag += t;
                    b.add(row_off + grid.index(i - 1, j), -t);
                }
                if i + 1 < nx {
                    let t = trans(kx[j * (nx - 1) + i], tx);
                    diag += t;
                    b.add(row_off + grid.index(i + 1, j), -t);
                }
                if j > 0 {
                    let t = trans(ky[(j - 1) * nx + i], ty);
                    diag += t;
                    b.add(row_off + grid.index(i, j - 1), -t);
                }
                if j + 1 < ny {
                    let t = trans(ky[j * nx + i], ty);
                    diag += t;
                    b.add(row_off + grid.index(i, j + 1), -t);
                }
                let exchange = vol * beta[p];
                diag += exchange;
                b.add(row_off + p, diag);
                if exchange != 0.0 {
                    let other = if block == 0 { n + p } else { p };
                    b.add(other, -exchange);
                }
                b.finish_row();
            }
        }
    }
    Ok(PicardSystem { matrix: b.build()?, rhs })
}

fn relative_residual(sys: &PicardSystem, x: &[f64]) -> f64 {
    let ax = sys.matrix.mul_vec(x);
    let r: f64 = sys.rhs.iter().zip(&ax).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let scale = linalg::norm2(&sys.rhs);
    if r == 0.0 {
        0.0
    } else {
        r / scale.max(f64::MIN_POSITIVE)
    }
}

/// Advances `state` by one backward-Euler step of size `params.dt`.
pub fn step(
    grid: &StructuredGrid,
    state: &SimulationState,
    params: &ModelParameters,
    controls: &SolverControls,
) -> Result<(SimulationState, StepStats)> {
    step_with_dt(grid, state, params, controls, params.dt)
}

fn step_with_dt(
    grid: &StructuredGrid,
    state: &SimulationState,
    params: &ModelParameters,
    controls: &SolverControls,
    dt: f64,
) -> Result<(SimulationState, StepStats)> {
    grid.check_field(&state.u)?;
    grid.check_field(&state.v)?;
    if !(state.u.is_finite() && state.v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite state at t = {}", state.t)));
    }
    let local;
    let params = if dt == params.dt {
        params
    } else {
        local = ModelParameters { dt, ..params.clone() };
        &local
    };
    let n = grid.cell_count();
    let mut x: Vec<f64> = state.u.values().iter().chain(state.v.values()).copied().collect();
    let mut linear_iterations = 0;
    let mut residual = f64::INFINITY;
    for iteration in 0..=controls.picard_max {
        let sys = assemble(grid, params, state, &x[..n], &x[n..])?;
        residual = relative_residual(&sys, &x);
        if !residual.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite Picard residual at t = {}",
                state.t + dt
            )));
        }
        if residual <= controls.picard_tol {
            let (nx, ny) = (grid.nx(), grid.ny());
            let v = x.split_off(n);
            let next = SimulationState {
                t: state.t + dt,
                u: ScalarField::from_values(nx, ny, x)?,
                v: ScalarField::from_values(nx, ny, v)?,
            };
            let stats = StepStats {
                step: 0,
                t: next.t,
                picard_iterations: iteration,
                linear_iterations,
                residual,
            };
            return Ok((next, stats));
        }
        if iteration == controls.picard_max {
            break;
        }
        let cg = linalg::pcg(&sys.matrix, &sys.rhs, &mut x, controls.linear_tol, controls.linear_max)?;
        linear_iterations += cg.iterations;
        if params.lambda < 1.0 {
            // Keep u in the admissible half-line for the fractional power.
            x[..n].iter_mut().for_each(|u| *u = u.max(0.0));
        }
    }
    Err(Error::NonConvergence {
        what: format!(
            "Picard iteration at t = {} ({} iterations)",
            state.t + dt,
            controls.picard_max
        ),
        residual,
    })
}

/// Output of [`run`]: kept snapshots and per-step statistics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: StructuredGrid,
    pub params: ModelParameters,
    pub controls: SolverControls,
    pub snapshots: Vec<SimulationState>,
    pub steps: Vec<StepStats>,
    /// False when a step failed; `failure` then carries the error.
    pub complete: bool,
    pub failure: Option<String>,
    pub wall_time_s: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &SimulationState {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &SimulationState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }

    pub fn max_picard_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.picard_iterations).max().unwrap_or(0)
    }
}

/// Everything needed to start time stepping, built from a config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: StructuredGrid,
    pub params: ModelParameters,
    pub controls: SolverControls,
    pub initial: SimulationState,
    pub stride: usize,
}

impl Problem {
    pub fn from_config(config: &SimulationConfig) -> Result<Self> {
        let grid = config.domain.build()?;
        let coupling = config.model.b.as_ref().map(CouplingFunction::from_spec).transpose()?;
        let params = ModelParameters {
            lambda: config.model.lambda,
            alpha: config.model.alpha,
            k2: config.model.k2,
            poly: config.model.g.clone(),
            coupling,
            phi: config.bc.phi_per_face(&grid)?,
            t_final: config.time.t_final,
            dt: config.time.dt,
            eps_reg: config.model.eps_reg,
        };
        params.validate(&grid)?;
        config.solver.validate()?;
        if config.output.stride == 0 {
            return Err(Error::Validation("output stride must be at least 1".into()));
        }
        let u = config.ic.u.evaluate(&grid)?;
        let v = config.ic.v.evaluate(&grid)?;
        if params.lambda < 1.0 && u.min() < 0.0 {
            return Err(Error::Validation(format!(
                "lambda < 1 requires u0 >= 0, got min {}",
                u.min()
            )));
        }
        if params.is_experimental() {
            log::warn!("lambda = {} < 1: experimental regime", params.lambda);
        }
        Ok(Self {
            grid,
            params,
            controls: config.solver,
            initial: SimulationState { t: 0.0, u, v },
            stride: config.output.stride,
        })
    }

    /// Number of steps; the last one is shortened when `T/dt` is not integral.
    pub fn step_count(&self) -> usize {
        let ratio = self.params.t_final / self.params.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }

    pub fn run(&self) -> Trajectory {
        let start = Instant::now();
        let nt = self.step_count();
        let dt = self.params.dt;
        let mut snapshots = vec![self.initial.clone()];
        let mut steps = Vec::with_capacity(nt);
        let mut state = self.initial.clone();
        let mut failure = None;
        for k in 1..=nt {
            let t_target = if k == nt { self.params.t_final } else { k as f64 * dt };
            let h = t_target - state.t;
            match step_with_dt(&self.grid, &state, &self.params, &self.controls, h) {
                Ok((mut next, mut stats)) => {
                    next.t = t_target;
                    stats.step = k;
                    stats.t = t_target;
                    steps.push(stats);
                    state = next;
                    if k % self.stride == 0 || k == nt {
                        snapshots.push(state.clone());
                    }
                }
                Err(e) => {
                    log::error!("step {k} failed: {e}");
                    failure = Some(e.to_string());
                    if snapshots.last().map(|s| s.t) != Some(state.t) {
                        snapshots.push(state.clone());
                    }
                    break;
                }
            }
        }
        Trajectory {
            grid: self.grid.clone(),
            params: self.params.clone(),
            controls: self.controls,
            snapshots,
            steps,
            complete: failure.is_none(),
            failure,
            wall_time_s: start.elapsed().as_secs_f64(),
        }
    }
}

/// Builds the problem described by `config` and integrates it to `T`.
pub fn run(config: &SimulationConfig) -> Result<Trajectory> {
    Ok(Problem::from_config(config)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialCondition, PhiSpec};
    use crate::coupling::CouplingVariant;
    use crate::grid::{Edge, GridSpec};

    fn params(grid: &StructuredGrid, poly: ForchheimerPolynomial, phi: f64) -> ModelParameters {
        ModelParameters {
            lambda: 1.0,
            alpha: 2.0,
            k2: 1.0,
            poly,
            coupling: None,
            phi: grid
                .boundary_faces()
                .iter()
                .map(|f| if f.robin { phi } else { 0.0 })
                .collect(),
            t_final: 0.1,
            dt: 0.01,
            eps_reg: 1e-8,
        }
    }

    fn unit(n: usize) -> StructuredGrid {
        GridSpec::unit_square(n, &[Edge::Right]).build().unwrap()
    }

    #[test]
    fn operator_vanishes_on_constants() {
        let g = unit(6);
        let p = params(&g, ForchheimerPolynomial::two_term(1.0, 1.0).unwrap(), 0.0);
        let u = g.constant_field(2.5);
        let out = apply_forchheimer_operator(&g, &u, &u, &p).unwrap();
        assert!(out.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn operator_second_difference_of_quadratic() {
        let g = unit(8);
        let p = params(&g, ForchheimerPolynomial::constant(1.0).unwrap(), 0.0);
        let u = g.field_from_fn(|x, _| x * x);
        let out = apply_forchheimer_operator(&g, &u, &u, &p).unwrap();
        for j in 0..8 {
            for i in 1..7 {
                let v = out.values()[g.index(i, j)];
                assert!((v + 2.0).abs() < 1e-10, "cell ({i},{j}) -> {v}");
            }
        }
    }

    #[test]
    fn operator_robin_outflux() {
        let g = unit(4);
        let p = params(&g, ForchheimerPolynomial::constant(1.0).unwrap(), 2.0);
        let u = g.constant_field(3.0);
        let out = apply_forchheimer_operator(&g, &u, &u, &p).unwrap();
        let expect = 6.0 * g.hy() / g.cell_volume();
        assert!((out.values()[g.index(3, 1)] - expect).abs() < 1e-12);
        assert_eq!(out.values()[g.index(0, 1)], 0.0);
    }

    #[test]
    fn operator_rejects_mismatched_grids() {
        let g = unit(4);
        let p = params(&g, ForchheimerPolynomial::constant(1.0).unwrap(), 0.0);
        let u = unit(5).constant_field(1.0);
        assert!(apply_forchheimer_operator(&g, &u, &u, &p).is_err());
    }

    #[test]
    fn frozen_system_is_symmetric() {
        let g = unit(5);
        let mut p = params(&g, ForchheimerPolynomial::two_term(1.0, 1.0).unwrap(), 0.3);
        p.coupling = Some(CouplingFunction::new(CouplingVariant::Saturating, 1.0, 0.5).unwrap());
        let u = g.field_from_fn(|x, y| 1.0 + x * y);
        let v = g.field_from_fn(|x, _| 0.5 * x);
        let old = SimulationState { t: 0.0, u: u.clone(), v: v.clone() };
        let sys = assemble(&g, &p, &old, u.values(), v.values()).unwrap();
        assert!(sys.matrix.asymmetry() < 1e-14);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let g = unit(6);
        let mut p = params(&g, ForchheimerPolynomial::two_term(1.0, 1.0).unwrap(), 0.0);
        p.coupling = Some(CouplingFunction::new(CouplingVariant::Saturating, 1e-6, 0.5).unwrap());
        let state = SimulationState { t: 0.0, u: g.constant_field(0.7), v: g.constant_field(0.7) };
        let (next, stats) = step(&g, &state, &p, &SolverControls::default()).unwrap();
        assert_eq!(next.u, state.u);
        assert_eq!(next.v, state.v);
        assert_eq!(stats.picard_iterations, 0);
    }

    #[test]
    fn step_conserves_total_mass() {
        let g = unit(8);
        let mut p = params(&g, ForchheimerPolynomial::two_term(1.0, 1.0).unwrap(), 0.0);
        p.coupling = Some(CouplingFunction::new(CouplingVariant::Saturating, 2.0, 0.5).unwrap());
        let u = g.field_from_fn(|x, y| 1.0 + (3.0 * x).sin() * y);
        let v = g.field_from_fn(|x, _| 0.2 + x);
        let before = g.integrate(&u).unwrap() + g.integrate(&v).unwrap();
        let state = SimulationState { t: 0.0, u, v };
        let (next, stats) = step(&g, &state, &p, &SolverControls::default()).unwrap();
        let after = g.integrate(&next.u).unwrap() + g.integrate(&next.v).unwrap();
        assert!(((after - before) / before).abs() < 1e-10);
        assert!(stats.picard_iterations >= 2);
    }

    #[test]
    fn picard_cap_is_reported() {
        let g = unit(8);
        let p = params(&g, ForchheimerPolynomial::new(vec![1.0, 5.0], vec![0.0, 2.0]).unwrap(), 0.0);
        let u = g.field_from_fn(|x, y| 10.0 * x * x + y);
        let state = SimulationState { t: 0.0, u, v: g.constant_field(0.0) };
        let controls = SolverControls { picard_max: 1, picard_tol: 1e-14, ..Default::default() };
        let err = step(&g, &state, &p, &controls).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn zero_horizon_keeps_only_initial_state() {
        let mut cfg = SimulationConfig::reference(4);
        cfg.time.t_final = 0.0;
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert!(traj.steps.is_empty());
        assert!(traj.complete);
    }

    #[test]
    fn non_integral_horizon_ends_exactly_at_t() {
        let mut cfg = SimulationConfig::reference(4);
        cfg.time = crate::config::TimeSpec { t_final: 0.025, dt: 0.01 };
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.steps.len(), 3);
        assert_eq!(traj.last().t, 0.025);
    }

    #[test]
    fn fractional_lambda_runs_and_stays_nonnegative() {
        let mut cfg = SimulationConfig::reference(6);
        cfg.model.lambda = 0.8;
        cfg.model.alpha = 1.9;
        cfg.time.t_final = 0.05;
        cfg.bc.phi = PhiSpec::Constant(0.5);
        cfg.ic.u = InitialCondition::cosine(0.5, 0.6, 1.0, 0.0);
        let traj = run(&cfg).unwrap();
        assert!(traj.complete, "{:?}", traj.failure);
        assert!(traj.snapshots.iter().all(|s| s.u.min() >= 0.0));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut cfg = SimulationConfig::reference(4);
        cfg.model.lambda = 1.5;
        assert!(matches!(run(&cfg), Err(Error::Validation(_))));
        let mut cfg = SimulationConfig::reference(4);
        cfg.model.alpha = 1.5;
        assert!(matches!(run(&cfg), Err(Error::Validation(_))));
        let mut cfg = SimulationConfig::reference(4);
        cfg.time.dt = 0.0;
        assert!(matches!(run(&cfg), Err(Error::Validation(_))));
    }
}
