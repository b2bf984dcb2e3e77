use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::InitialCondition;
use crate::error::{Error, Result};
use crate::grid::{ScalarField, Segment, StructuredGrid};

/// Exponents of the boundary trace inequality in two space dimensions:
///
/// ```text
/// ∫_{Γ^R}|u|^α ≤ 2ε∫|u|^{α+δ−2}|∇u|^{2−a} + C‖u‖^α
///              + C ε^{−1/(1−a)} ‖u‖^{α+μ₀} + C ε^{−μ₂} ‖u‖^{α+μ₁}
/// ```
///
/// with `‖·‖ = ‖·‖_{L^α(Ω)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceExponents {
    pub a: f64,
    pub delta: f64,
    pub alpha: f64,
    pub alpha_star: f64,
    pub theta: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl TraceExponents {
    pub const DIM: f64 = 2.0;

    /// Validates `δ < a < 1`, `2 − δ ≤ α ≤ 2` and `θ_α ∈ (0, 1)`.
    pub fn new(a: f64, delta: f64, alpha: f64) -> Result<Self> {
        if !(a > delta && a < 1.0 && delta >= 0.0) {
            return Err(Error::Validation(format!(
                "trace inequality needs 0 <= delta < a < 1, got a = {a}, delta = {delta}"
            )));
        }
        if !(alpha >= 2.0 - delta - 1e-12 && alpha <= 2.0) {
            return Err(Error::Validation(format!(
                "trace inequality needs 2 - delta <= alpha <= 2, got alpha = {alpha}"
            )));
        }
        let mu0 = (a - delta) / (1.0 - a);
        let alpha_star = Self::DIM * (a - delta) / (2.0 - a);
        let theta = 1.0 / ((1.0 - a) * (alpha / alpha_star - 1.0));
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Validation(format!(
                "trace inequality needs theta in (0, 1), got {theta} (a = {a}, delta = {delta}, alpha = {alpha})"
            )));
        }
        let mu1 = mu0 * (1.0 + theta * (1.0 - a)) / (1.0 - theta);
        let mu2 = 1.0 / (1.0 - a) + theta * (2.0 - a) / ((1.0 - theta) * (1.0 - a));
        Ok(Self { a, delta, alpha, alpha_star, theta, mu0, mu1, mu2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceCheck {
    pub eps: f64,
    /// `∫_{Γ^R}|u|^α dσ`
    pub lhs: f64,
    /// `2ε ∫|u|^{α+δ−2}|∇u|^{2−a}`
    pub gradient_term: f64,
    /// `‖u‖^α`, `ε^{−1/(1−a)}‖u‖^{α+μ₀}`, `ε^{−μ₂}‖u‖^{α+μ₁}` (without `C`).
    pub norm_terms: [f64; 3],
    /// Smallest `C ≥ 0` for which the inequality holds for this field.
    pub min_feasible_c: f64,
}

impl TraceCheck {
    pub fn holds_with(&self, c: f64) -> bool {
        let rhs = self.gradient_term + c * self.norm_terms.iter().sum::<f64>();
        self.lhs <= rhs * (1.0 + 1e-12)
    }
}

/// Evaluates both sides of the trace inequality for `u` and returns the
/// smallest feasible constant.
pub fn trace_check(
    grid: &StructuredGrid,
    u: &ScalarField,
    ex: &TraceExponents,
    eps: f64,
) -> Result<TraceCheck> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!("trace check needs eps > 0, got {eps}")));
    }
    let alpha = ex.alpha;
    let lhs = grid.boundary_integral_with(Segment::Robin, |_, f| u.values()[f.cell].abs().powf(alpha));
    let grad = grid.gradient(u)?;
    let w = alpha + ex.delta - 2.0;
    let q = 2.0 - ex.a;
    let weighted: f64 = grad
        .iter()
        .zip(u.values())
        .map(|(g, &uk)| {
            let m = g[0].hypot(g[1]);
            if m == 0.0 {
                0.0
            } else {
                uk.abs().powf(w) * m.powf(q)
            }
        })
        .sum::<f64>()
        * grid.cell_volume();
    let norm = grid.lp_norm(u, alpha)?;
    let norm_terms = [
        norm.powf(alpha),
        eps.powf(-1.0 / (1.0 - ex.a)) * norm.powf(alpha + ex.mu0),
        eps.powf(-ex.mu2) * norm.powf(alpha + ex.mu1),
    ];
    let gradient_term = 2.0 * eps * weighted;
    let denom: f64 = norm_terms.iter().sum();
    let excess = (lhs - gradient_term).max(0.0);
    let min_feasible_c = if excess == 0.0 { 0.0 } else { excess / denom };
    if !min_feasible_c.is_finite() {
        return Err(Error::Numerical(format!(
            "trace constant is not finite (lhs {lhs:e}, denominator {denom:e})"
        )));
    }
    Ok(TraceCheck { eps, lhs, gradient_term, norm_terms, min_feasible_c })
}

/// Twenty deterministic fields: constants, cosine modes, bumps (several
/// hugging the Robin edge) and cell-wise noise.
pub fn standard_trace_corpus() -> Vec<InitialCondition> {
    let bump = |amplitude, x0, y0, width| InitialCondition::GaussianBump {
        amplitude,
        offset: 0.0,
        x0,
        y0,
        width,
    };
    let noise = |seed| InitialCondition::SeededUniformRandom { lo: 0.0, hi: 1.0, seed };
    vec![
        InitialCondition::Constant { value: 0.5 },
        InitialCondition::Constant { value: 1.0 },
        InitialCondition::Constant { value: 2.0 },
        InitialCondition::Constant { value: 5.0 },
        InitialCondition::cosine(1.0, 0.0, 1.0, 0.0),
        InitialCondition::cosine(1.0, 0.0, 0.0, 1.0),
        InitialCondition::cosine(1.0, 0.0, 2.0, 1.0),
        InitialCondition::cosine(1.0, 0.0, 3.0, 3.0),
        InitialCondition::cosine(0.5, 1.0, 1.0, 0.0),
        InitialCondition::cosine(0.5, 1.0, 1.0, 1.0),
        InitialCondition::cosine(0.5, 1.0, 4.0, 0.0),
        InitialCondition::cosine(0.5, 1.0, 0.0, 4.0),
        bump(1.0, 0.9, 0.5, 0.1),
        bump(1.0, 0.5, 0.5, 0.2),
        bump(2.0, 0.95, 0.1, 0.05),
        bump(1.0, 0.2, 0.8, 0.1),
        noise(1),
        noise(2),
        bump(1.0, 1.0, 0.5, 0.08).plus(InitialCondition::Constant { value: 0.1 }),
        InitialCondition::cosine(1.0, 0.0, 1.0, 0.0).plus(bump(0.5, 0.85, 0.3, 0.1)),
    ]
}

/// Random smooth fields: offset, three random cosine modes and a random
/// bump, drawn from `seed`.
pub fn randomized_trace_corpus(count: usize, seed: u64) -> Vec<InitialCondition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut ic = InitialCondition::Constant { value: rng.gen_range(-1.0..1.0) };
            for _ in 0..3 {
                ic = ic.plus(InitialCondition::cosine(
                    rng.gen_range(-1.0..1.0),
                    0.0,
                    rng.gen_range(0..=4) as f64,
                    rng.gen_range(0..=4) as f64,
                ));
            }
            ic.plus(InitialCondition::GaussianBump {
                amplitude: rng.gen_range(0.0..2.0),
                offset: 0.0,
                x0: rng.gen_range(0.0..=1.0),
                y0: rng.gen_range(0.0..=1.0),
                width: rng.gen_range(0.05..0.3),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Edge, GridSpec};

    fn grid(n: usize) -> StructuredGrid {
        GridSpec::unit_square(n, &[Edge::Right]).build().unwrap()
    }

    #[test]
    fn exponents_for_half_power_polynomial() {
        let ex = TraceExponents::new(1.0 / 3.0, 0.0, 2.0).unwrap();
        assert!((ex.alpha_star - 0.4).abs() < 1e-15);
        assert!((ex.theta - 0.375).abs() < 1e-15);
        assert!((ex.mu0 - 0.5).abs() < 1e-15);
        assert!((ex.mu1 - 1.0).abs() < 1e-14);
        assert!((ex.mu2 - 3.0).abs() < 1e-14);
    }

    #[test]
    fn inadmissible_exponents_are_rejected() {
        // g = 1 + s, δ = 0, α = 2 gives θ = 1 exactly.
        assert!(TraceExponents::new(0.5, 0.0, 2.0).is_err());
        assert!(TraceExponents::new(0.0, 0.0, 2.0).is_err());
        assert!(TraceExponents::new(0.3, 0.4, 2.0).is_err());
        assert!(TraceExponents::new(1.0 / 3.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn zero_field_is_feasible_for_any_constant() {
        let g = grid(8);
        let ex = TraceExponents::new(1.0 / 3.0, 0.0, 2.0).unwrap();
        let r = trace_check(&g, &g.constant_field(0.0), &ex, 1.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.min_feasible_c, 0.0);
        assert!(r.holds_with(0.0));
    }

    #[test]
    fn constant_field_formula() {
        let g = GridSpec { lx: 2.0, ..GridSpec::unit_square(8, &[Edge::Right]) }.build().unwrap();
        let ex = TraceExponents::new(1.0 / 3.0, 0.0, 2.0).unwrap();
        let (c, eps) = (1.7f64, 0.3f64);
        let r = trace_check(&g, &g.constant_field(c), &ex, eps).unwrap();
        let omega = 2.0f64;
        let lhs = c.powf(2.0) * 1.0;
        let expect = lhs
            / (c.powf(2.0) * omega
                + eps.powf(-1.5) * c.powf(2.5) * omega.powf(2.5 / 2.0)
                + eps.powf(-3.0) * c.powf(3.0) * omega.powf(3.0 / 2.0));
        assert!((r.lhs - lhs).abs() < 1e-12);
        assert!(r.gradient_term < 1e-20);
        assert!((r.min_feasible_c - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn cosine_constant_is_refinement_stable() {
        let ex = TraceExponents::new(1.0 / 3.0, 0.0, 2.0).unwrap();
        let ic = InitialCondition::cosine(1.0, 0.0, 1.0, 0.0);
        let c = |n, eps| {
            let g = grid(n);
            trace_check(&g, &ic.evaluate(&g).unwrap(), &ex, eps).unwrap().min_feasible_c
        };
        // At ε = 1 the gradient term alone dominates the boundary mass.
        assert_eq!(c(32, 1.0), 0.0);
        assert_eq!(c(64, 1.0), 0.0);
        let (c32, c64) = (c(32, 0.05), c(64, 0.05));
        assert!(c32.is_finite() && c32 > 0.0);
        assert!((c64 / c32 - 1.0).abs() < 0.2, "{c32} vs {c64}");
    }

    #[test]
    fn corpora_have_twenty_fields_and_are_reproducible() {
        assert_eq!(standard_trace_corpus().len(), 20);
        assert_eq!(randomized_trace_corpus(20, 9), randomized_trace_corpus(20, 9));
        assert_ne!(randomized_trace_corpus(20, 9), randomized_trace_corpus(20, 10));
    }
}
