use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Segment, StructuredGrid};
use crate::solver::{ModelParameters, Trajectory};

/// Values below this are treated as zero when taking logarithms.
pub const GRONWALL_FLOOR: f64 = 1e-30;

/// Energy functionals of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `∫|u|^α`
    pub u_alpha_norm: f64,
    /// `∫v²`
    pub v_sq_norm: f64,
    /// `∫|∇u|^{2−a}`
    pub grad_u_q: f64,
    /// `∫|∇v|²`
    pub grad_v_sq: f64,
    /// `∫|∇u|^{2−a} |u|^{α+δ−2}`
    pub weighted_grad: f64,
    /// `∫H(|∇u|)`
    pub h_integral: f64,
    /// `(λ+1)/2 ∫H(|∇u₀|) + ∫|u₀|^α`
    pub lambda0: f64,
    /// `∫_{Γ^R} |u|^α dσ`
    pub robin_trace: f64,
}

impl EnergyReport {
    /// `∫|u|^α + ∫v²`.
    pub fn mass_energy(&self) -> f64 {
        self.u_alpha_norm + self.v_sq_norm
    }
}

fn h_integral(grid: &StructuredGrid, params: &ModelParameters, u: &ScalarField) -> Result<f64> {
    let grad = grid.gradient(u)?;
    let mut sum = 0.0;
    for g in &grad {
        sum += params.poly.h(g[0].hypot(g[1]))?;
    }
    Ok(sum * grid.cell_volume())
}

/// `Λ(0)` for the initial active field `u0`.
pub fn lambda0(grid: &StructuredGrid, params: &ModelParameters, u0: &ScalarField) -> Result<f64> {
    Ok(0.5 * (params.lambda + 1.0) * h_integral(grid, params, u0)?
        + grid.lp_norm_pow(u0, params.alpha)?)
}

/// Evaluates all energy functionals at `(t, u, v)`; `u0` feeds `Λ(0)`.
pub fn energy_report(
    grid: &StructuredGrid,
    params: &ModelParameters,
    t: f64,
    u: &ScalarField,
    v: &ScalarField,
    u0: &ScalarField,
) -> Result<EnergyReport> {
    grid.check_field(v)?;
    let a = params.degeneracy_exponent();
    let q = 2.0 - a;
    let weight_exp = params.alpha + params.delta() - 2.0;
    let grad = grid.gradient(u)?;
    let vol = grid.cell_volume();
    let mut grad_u_q = 0.0;
    let mut weighted = 0.0;
    for (g, &uk) in grad.iter().zip(u.values()) {
        let m = g[0].hypot(g[1]);
        if m > 0.0 {
            let gq = m.powf(q);
            grad_u_q += gq;
            weighted += gq * uk.abs().powf(weight_exp);
        }
    }
    let alpha = params.alpha;
    let robin_trace =
        grid.boundary_integral_with(Segment::Robin, |_, f| u.values()[f.cell].abs().powf(alpha));
    let report = EnergyReport {
        t,
        u_alpha_norm: grid.lp_norm_pow(u, alpha)?,
        v_sq_norm: grid.lp_norm_pow(v, 2.0)?,
        grad_u_q: grad_u_q * vol,
        grad_v_sq: grid.grad_norm_integral(v, 2.0)?,
        weighted_grad: weighted * vol,
        h_integral: h_integral(grid, params, u)?,
        lambda0: lambda0(grid, params, u0)?,
        robin_trace,
    };
    let fields = [
        report.u_alpha_norm,
        report.v_sq_norm,
        report.grad_u_q,
        report.grad_v_sq,
        report.weighted_grad,
        report.h_integral,
        report.lambda0,
        report.robin_trace,
    ];
    if fields.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("non-finite energy functional at t = {t}")));
    }
    Ok(report)
}

/// Energy reports for every kept snapshot of a trajectory.
pub fn energy_series(traj: &Trajectory) -> Result<Vec<EnergyReport>> {
    let u0 = &traj.initial().u;
    traj.snapshots
        .iter()
        .map(|s| energy_report(&traj.grid, &traj.params, s.t, &s.u, &s.v, u0))
        .collect()
}

/// Right-endpoint rule `Σ (t_k − t_{k−1}) f_k`, matching backward Euler.
pub fn time_integral(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(&values[1..])
        .map(|(w, f)| (w[1] - w[0]) * f)
        .sum()
}

/// `max_t |M(t) − M(0)| / |M(0)|` with `M = ∫(u^λ + v)`.
///
/// When `M(0)` is cancellation-dominated (`|M(0)| < 10⁻⁸ ∫(|u₀|^λ + |v₀|)`,
/// e.g. a pure cosine mode) the drift is scaled by `∫(|u₀|^λ + |v₀|)` instead.
pub fn conservation_residual(traj: &Trajectory) -> Result<f64> {
    if !traj.params.phi_is_zero() {
        return Err(Error::Precondition(
            "conservation residual requires phi = 0 (Robin outflux removes mass)".into(),
        ));
    }
    let lambda = traj.params.lambda;
    let mass = |s: &crate::solver::SimulationState| -> Result<f64> {
        let u_pow = if lambda == 1.0 { s.u.clone() } else { s.u.map(|x| x.max(0.0).powf(lambda)) };
        Ok(traj.grid.integrate(&u_pow)? + traj.grid.integrate(&s.v)?)
    };
    let s0 = traj.initial();
    let m0 = mass(s0)?;
    let size = traj.grid.integrate(&s0.u.map(|x| x.abs().powf(lambda)))?
        + traj.grid.integrate(&s0.v.map(f64::abs))?;
    let mut worst: f64 = 0.0;
    for s in &traj.snapshots[1..] {
        worst = worst.max((mass(s)? - m0).abs());
    }
    let scale = if m0.abs() >= 1e-8 * size { m0.abs() } else { size };
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// `sup_{t>0} log(max(W(t), floor) / W(0)) / t`, so that
/// `W(t) ≤ W(0) e^{C t}` at every sample.
pub fn gronwall_fit(times: &[f64], w: &[f64]) -> Result<f64> {
    if times.len() != w.len() || times.is_empty() {
        return Err(Error::Validation(format!(
            "gronwall fit needs matching non-empty series, got {} times and {} values",
            times.len(),
            w.len()
        )));
    }
    if times.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::Validation("gronwall fit needs strictly increasing times".into()));
    }
    if !(w[0] > GRONWALL_FLOOR) {
        return Err(Error::Precondition(format!(
            "W(0) = {:e} is at or below the floor {GRONWALL_FLOOR:e}; use the uniqueness check",
            w[0]
        )));
    }
    let t0 = times[0];
    let mut sup = f64::NEG_INFINITY;
    for (&t, &wk) in times.iter().zip(w).skip(1) {
        sup = sup.max((wk.max(GRONWALL_FLOOR) / w[0]).ln() / (t - t0));
    }
    if sup == f64::NEG_INFINITY {
        return Err(Error::Validation("gronwall fit needs at least one sample with t > 0".into()));
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationConfig;
    use crate::constitutive::ForchheimerPolynomial;
    use crate::grid::{Edge, GridSpec};
    use crate::solver;

    fn setup(poly: ForchheimerPolynomial) -> (StructuredGrid, ModelParameters) {
        let grid = GridSpec::unit_square(16, &[Edge::Right]).build().unwrap();
        let params = ModelParameters {
            lambda: 1.0,
            alpha: 2.0,
            k2: 1.0,
            poly,
            coupling: None,
            phi: vec![0.0; grid.boundary_faces().len()],
            t_final: 1.0,
            dt: 0.1,
            eps_reg: 1e-8,
        };
        (grid, params)
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let (g, p) = setup(ForchheimerPolynomial::two_term(1.0, 1.0).unwrap());
        let z = g.constant_field(0.0);
        let r = energy_report(&g, &p, 0.0, &z, &z, &z).unwrap();
        assert_eq!(r.mass_energy(), 0.0);
        assert_eq!(r.lambda0, 0.0);
        assert_eq!(r.h_integral, 0.0);
        assert_eq!(r.robin_trace, 0.0);
    }

    #[test]
    fn constant_state() {
        let (g, p) = setup(ForchheimerPolynomial::two_term(1.0, 1.0).unwrap());
        let u = g.constant_field(1.5);
        let r = energy_report(&g, &p, 0.0, &u, &g.constant_field(0.0), &u).unwrap();
        assert!((r.u_alpha_norm - 2.25).abs() < 1e-12);
        assert_eq!(r.grad_u_q, 0.0);
        assert_eq!(r.h_integral, 0.0);
        assert!((r.robin_trace - 2.25).abs() < 1e-12);
    }

    #[test]
    fn linear_field_with_constant_g() {
        let (g, p) = setup(ForchheimerPolynomial::constant(1.0).unwrap());
        let u = g.field_from_fn(|x, _| x);
        let r = energy_report(&g, &p, 0.0, &u, &u, &u).unwrap();
        assert!((r.grad_u_q - 1.0).abs() < 1e-12);
        assert!((r.h_integral - 1.0).abs() < 1e-12);
        assert!((r.weighted_grad - 1.0).abs() < 1e-12);
        assert!((r.lambda0 - (1.0 + r.u_alpha_norm)).abs() < 1e-12);
    }

    #[test]
    fn gronwall_examples() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let w: Vec<f64> = t.iter().map(|t| 3.0 * (2.0 * t).exp()).collect();
        assert!((gronwall_fit(&t, &w).unwrap() - 2.0).abs() < 1e-10);
        assert_eq!(gronwall_fit(&t, &[5.0; 11]).unwrap(), 0.0);
        let w: Vec<f64> = t.iter().map(|t| 2.0 * (1.0 + t)).collect();
        let expect = (1.1f64).ln() / 0.1;
        assert!((gronwall_fit(&t, &w).unwrap() - expect).abs() < 1e-12);
        for (tk, wk) in t.iter().zip(&w) {
            assert!(*wk <= 2.0 * (expect * tk).exp() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn gronwall_rejects_degenerate_input() {
        assert!(matches!(gronwall_fit(&[0.0, 1.0], &[0.0, 1.0]), Err(Error::Precondition(_))));
        assert!(gronwall_fit(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(gronwall_fit(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn conservation_on_equilibrium_and_heat_mode() {
        let mut cfg = SimulationConfig::reference(8);
        cfg.bc.phi = crate::config::PhiSpec::Constant(0.0);
        cfg.ic.u = crate::config::InitialCondition::Constant { value: 0.4 };
        cfg.ic.v = crate::config::InitialCondition::Constant { value: 0.4 };
        cfg.time.t_final = 0.05;
        let traj = solver::run(&cfg).unwrap();
        assert!(conservation_residual(&traj).unwrap() <= 1e-14);

        let traj = solver::run(&SimulationConfig::heat_mode(16, 0.05, 20)).unwrap();
        assert!(conservation_residual(&traj).unwrap() <= 1e-8);

        let traj = solver::run(&SimulationConfig::reference(4)).unwrap();
        assert!(matches!(conservation_residual(&traj), Err(Error::Precondition(_))));
    }

    #[test]
    fn right_endpoint_integral() {
        assert_eq!(time_integral(&[0.0, 0.5, 1.0], &[9.0, 2.0, 4.0]), 3.0);
    }
}
