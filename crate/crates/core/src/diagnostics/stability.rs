use serde::Serialize;

use super::energy::{gronwall_fit, GRONWALL_FLOOR};
use crate::error::{Error, Result};
use crate::grid::Segment;
use crate::solver::Trajectory;

/// Size of the data difference between two runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    /// `|D₁ − D₂|`
    pub d: f64,
    /// `|r₁ − r₂|`
    pub r: f64,
    /// `‖φ₁ − φ₂‖_{L∞(Γ^R)}`
    pub phi: f64,
    /// `‖u₀₁ − u₀₂‖_{L^α}`
    pub u0: f64,
    /// `‖v₀₁ − v₀₂‖_{L²}`
    pub v0: f64,
}

impl Perturbation {
    /// `|ΔD| + |Δr| − ‖Δφ‖²`, the forcing factor exactly as stated.
    pub fn data_literal(&self) -> f64 {
        self.d + self.r - self.phi * self.phi
    }

    /// `|ΔD| + |Δr| + ‖Δφ‖²`.
    pub fn data_signfixed(&self) -> f64 {
        self.d + self.r + self.phi * self.phi
    }
}

/// Paired-run report: difference functionals and fitted envelopes
/// `e^{C t}(Z(0) + C_f t · data)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `∫|u₁−u₂|^α + ∫|v₁−v₂|²`
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    /// Same functional, tracked against the parameter envelope.
    #[serde(rename = "Z")]
    pub z: Vec<f64>,
    /// `∫|∇u₁−∇u₂|^{2−a} + ∫|∇v₁−∇v₂|²`
    pub grad_distance: Vec<f64>,
    /// Grönwall rate; `None` when `W(0)` is at or below the floor.
    #[serde(rename = "fitted_C")]
    pub fitted_c: Option<f64>,
    /// Smallest forcing constant making the sign-corrected envelope hold.
    #[serde(rename = "forcing_C")]
    pub forcing_c: f64,
    pub envelope_literal: Vec<f64>,
    pub envelope_signfixed: Vec<f64>,
    /// Samples where `Z` exceeds the envelope with the literal sign.
    pub envelope_violations: usize,
    pub envelope_violations_signfixed: usize,
    pub perturbation: Perturbation,
    pub alpha: f64,
    pub a: f64,
}

impl StabilityReport {
    pub fn max_z(&self) -> f64 {
        self.z.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_grad_distance(&self) -> f64 {
        self.grad_distance.iter().copied().fold(0.0, f64::max)
    }
}

fn rate(cf: &Option<crate::coupling::CouplingFunction>) -> f64 {
    cf.as_ref().map_or(0.0, |c| c.r())
}

/// Compares two trajectories sampled on the same grid and timeline.
pub fn stability_report(t1: &Trajectory, t2: &Trajectory) -> Result<StabilityReport> {
    let grid = &t1.grid;
    if t1.grid.spec() != t2.grid.spec() {
        return Err(Error::Validation("stability report needs both runs on the same grid".into()));
    }
    let (p1, p2) = (&t1.params, &t2.params);
    if p1.poly != p2.poly || p1.alpha != p2.alpha || p1.lambda != p2.lambda {
        return Err(Error::Validation(
            "stability report needs equal g, alpha and lambda in both runs".into(),
        ));
    }
    if t1.snapshots.len() != t2.snapshots.len() {
        return Err(Error::Validation(format!(
            "timelines differ in length: {} vs {}",
            t1.snapshots.len(),
            t2.snapshots.len()
        )));
    }
    let scale = p1.t_final.max(1.0);
    for (a, b) in t1.snapshots.iter().zip(&t2.snapshots) {
        if (a.t - b.t).abs() > 1e-12 * scale {
            return Err(Error::Validation(format!("timelines differ: t = {} vs {}", a.t, b.t)));
        }
    }

    let alpha = p1.alpha;
    let a = p1.degeneracy_exponent();
    let q = 2.0 - a;
    let mut times = Vec::with_capacity(t1.snapshots.len());
    let mut w = Vec::with_capacity(times.capacity());
    let mut grad_distance = Vec::with_capacity(times.capacity());
    for (s1, s2) in t1.snapshots.iter().zip(&t2.snapshots) {
        let du = s1.u.zip_with(&s2.u, |x, y| x - y)?;
        let dv = s1.v.zip_with(&s2.v, |x, y| x - y)?;
        times.push(s1.t);
        w.push(grid.lp_norm_pow(&du, alpha)? + grid.lp_norm_pow(&dv, 2.0)?);
        grad_distance.push(grid.grad_norm_integral(&du, q)? + grid.grad_norm_integral(&dv, 2.0)?);
    }

    let (i1, i2) = (t1.initial(), t2.initial());
    let phi = grid
        .faces_in(Segment::Robin)
        .map(|(k, _)| (p1.phi[k] - p2.phi[k]).abs())
        .fold(0.0, f64::max);
    let perturbation = Perturbation {
        d: (p1.k2 - p2.k2).abs(),
        r: (rate(&p1.coupling) - rate(&p2.coupling)).abs(),
        phi,
        u0: grid.lp_norm(&i1.u.zip_with(&i2.u, |x, y| x - y)?, alpha)?,
        v0: grid.lp_norm(&i1.v.zip_with(&i2.v, |x, y| x - y)?, 2.0)?,
    };

    let z0 = w[0];
    let fitted_c = if z0 > GRONWALL_FLOOR { Some(gronwall_fit(&times, &w)?) } else { None };
    let c = fitted_c.unwrap_or(0.0);
    let t0 = times[0];
    let data_fixed = perturbation.data_signfixed();
    let mut forcing_c: f64 = 0.0;
    if data_fixed > 0.0 {
        for (&t, &zk) in times.iter().zip(&w).skip(1) {
            let dt = t - t0;
            forcing_c = forcing_c.max((zk * (-c * dt).exp() - z0).max(0.0) / (dt * data_fixed));
        }
    }
    let envelope = |data: f64| -> Vec<f64> {
        times
            .iter()
            .map(|&t| (c * (t - t0)).exp() * (z0 + forcing_c * (t - t0) * data))
            .collect()
    };
    let envelope_literal = envelope(perturbation.data_literal());
    let envelope_signfixed = envelope(data_fixed);
    let violations = |env: &[f64]| {
        w.iter().zip(env).filter(|(z, e)| **z > **e * (1.0 + 1e-9) + GRONWALL_FLOOR).count()
    };
    let envelope_violations = violations(&envelope_literal);
    let envelope_violations_signfixed = violations(&envelope_signfixed);
    if w.iter().chain(&grad_distance).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite difference functional".into()));
    }
    Ok(StabilityReport {
        times,
        z: w.clone(),
        w,
        grad_distance,
        fitted_c,
        forcing_c,
        envelope_literal,
        envelope_signfixed,
        envelope_violations,
        envelope_violations_signfixed,
        perturbation,
        alpha,
        a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialCondition, PhiSpec, SimulationConfig};
    use crate::solver;

    fn short(n: usize) -> SimulationConfig {
        let mut c = SimulationConfig::reference(n);
        c.time.t_final = 0.05;
        c.time.dt = 5e-3;
        c
    }

    #[test]
    fn identical_runs_give_zero_distance() {
        let t = solver::run(&short(8)).unwrap();
        let r = stability_report(&t, &t.clone()).unwrap();
        assert!(r.w.iter().all(|&w| w == 0.0));
        assert!(r.grad_distance.iter().all(|&g| g == 0.0));
        assert_eq!(r.fitted_c, None);
        assert_eq!(r.envelope_violations_signfixed, 0);
    }

    #[test]
    fn initial_perturbation_is_enveloped_by_fitted_rate() {
        let base = short(8);
        let mut pert = base.clone();
        pert.ic.u = base.ic.u.clone().plus(InitialCondition::cosine(1e-3, 0.0, 1.0, 0.0));
        let (a, b) = (solver::run(&base).unwrap(), solver::run(&pert).unwrap());
        let r = stability_report(&a, &b).unwrap();
        let c = r.fitted_c.unwrap();
        for (t, w) in r.times.iter().zip(&r.w) {
            assert!(*w <= r.w[0] * (c * t).exp() * (1.0 + 1e-12));
        }
        assert_eq!(r.envelope_violations, 0);
        assert!((r.perturbation.u0 - 1e-3 * 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn parameter_perturbation_fits_forcing_constant() {
        let base = short(8);
        let mut pert = base.clone();
        pert.bc.phi = PhiSpec::Constant(0.2);
        pert.model.k2 = 1.1;
        let r = stability_report(&solver::run(&base).unwrap(), &solver::run(&pert).unwrap()).unwrap();
        assert_eq!(r.w[0], 0.0);
        assert!(r.forcing_c > 0.0);
        assert_eq!(r.envelope_violations_signfixed, 0);
        assert!((r.perturbation.phi - 0.1).abs() < 1e-15);
        assert!((r.perturbation.d - 0.1).abs() < 1e-15);
        assert!((r.perturbation.data_literal() - 0.09).abs() < 1e-12);
    }

    #[test]
    fn mismatched_runs_are_rejected() {
        let a = solver::run(&short(8)).unwrap();
        let b = solver::run(&short(6)).unwrap();
        assert!(matches!(stability_report(&a, &b), Err(Error::Validation(_))));
        let mut cfg = short(8);
        cfg.time.t_final = 0.1;
        let c = solver::run(&cfg).unwrap();
        assert!(matches!(stability_report(&a, &c), Err(Error::Validation(_))));
    }
}
