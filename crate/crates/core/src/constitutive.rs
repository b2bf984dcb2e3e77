//! Generalized Forchheimer constitutive law.
//!
//! A Forchheimer polynomial `g(s) = Σ a_k s^{α_k}` defines the nonlinear
//! Darcy law `G(s) = s g(s) = ξ` relating speed `s` to gradient magnitude
//! `ξ`. The effective permeability is `K₁(ξ) = 1 / g(G⁻¹(ξ))`, which
//! decays like `ξ^{-a}` with degeneracy exponent `a = α_N / (α_N + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative tolerance on `|G(s) − ξ|` for the speed inversion.
pub const TOL_ROOT: f64 = 1e-12;
/// Relative tolerance for adaptive quadrature of `H`.
pub const TOL_QUAD: f64 = 1e-10;

const MAX_ROOT_ITERATIONS: usize = 200;
const MAX_QUAD_PANELS: usize = 2000;

/// JSON literal `{"coefficients": [...], "exponents": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolynomialLiteral {
    pub coefficients: Vec<f64>,
    pub exponents: Vec<f64>,
}

/// Polynomial `g(s) = Σ a_k s^{α_k}` with `0 = α₀ < α₁ < … < α_N`,
/// `a₀ > 0` and `a_k ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolynomialLiteral", into = "PolynomialLiteral")]
pub struct ForchheimerPolynomial {
    coefficients: Vec<f64>,
    exponents: Vec<f64>,
}

impl TryFrom<PolynomialLiteral> for ForchheimerPolynomial {
    type Error = Error;
    fn try_from(lit: PolynomialLiteral) -> Result<Self> {
        Self::new(lit.coefficients, lit.exponents)
    }
}

impl From<ForchheimerPolynomial> for PolynomialLiteral {
    fn from(p: ForchheimerPolynomial) -> Self {
        PolynomialLiteral {
            coefficients: p.coefficients,
            exponents: p.exponents,
        }
    }
}

impl ForchheimerPolynomial {
    pub fn new(coefficients: Vec<f64>, exponents: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != exponents.len() {
            return Err(Error::Validation(format!(
                "polynomial needs matching non-empty coefficient/exponent lists (got {} and {})",
                coefficients.len(),
                exponents.len()
            )));
        }
        if coefficients.iter().chain(&exponents).any(|c| !c.is_finite()) {
            return Err(Error::Validation("polynomial data must be finite".into()));
        }
        if coefficients[0] <= 0.0 {
            return Err(Error::Validation(format!(
                "constant coefficient a0 must be positive, got {}",
                coefficients[0]
            )));
        }
        if let Some(c) = coefficients.iter().find(|&&c| c < 0.0) {
            return Err(Error::Validation(format!(
                "coefficients must be non-negative, got {c}"
            )));
        }
        if exponents[0] != 0.0 {
            return Err(Error::Validation(format!(
                "first exponent must be 0, got {}",
                exponents[0]
            )));
        }
        if exponents.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "exponents must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            coefficients,
            exponents,
        })
    }

    /// `g(s) = a₀`.
    pub fn constant(a0: f64) -> Result<Self> {
        Self::new(vec![a0], vec![0.0])
    }

    /// `g(s) = a₀ + a₁ s`, the classical two-term Forchheimer law.
    pub fn two_term(a0: f64, a1: f64) -> Result<Self> {
        Self::new(vec![a0, a1], vec![0.0, 1.0])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn a0(&self) -> f64 {
        self.coefficients[0]
    }

    /// Highest exponent `α_N`.
    pub fn leading_exponent(&self) -> f64 {
        *self.exponents.last().expect("non-empty")
    }

    pub fn leading_coefficient(&self) -> f64 {
        *self.coefficients.last().expect("non-empty")
    }

    /// `a = α_N / (α_N + 1)`.
    pub fn degeneracy_exponent(&self) -> f64 {
        let top = self.leading_exponent();
        top / (top + 1.0)
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.coefficients.iter().copied().zip(self.exponents.iter().copied())
    }

    fn g_raw(&self, s: f64) -> f64 {
        self.terms()
            .map(|(c, e)| if e == 0.0 { c } else { c * s.powf(e) })
            .sum()
    }

    /// `s g'(s) = Σ a_k α_k s^{α_k}`, finite at `s = 0` for any exponents.
    fn s_g_prime(&self, s: f64) -> f64 {
        self.terms()
            .filter(|&(_, e)| e != 0.0)
            .map(|(c, e)| c * e * s.powf(e))
            .sum()
    }

    pub fn eval_g(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("g(s) requires s >= 0, got {s}")));
        }
        Ok(self.g_raw(s))
    }

    pub fn eval_g_prime(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("g'(s) requires s > 0, got {s}")));
        }
        Ok(self
            .terms()
            .filter(|&(_, e)| e != 0.0)
            .map(|(c, e)| c * e * s.powf(e - 1.0))
            .sum())
    }

    /// The nonlinear Darcy law `G(s) = s g(s)`.
    pub fn darcy_law(&self, s: f64) -> Result<f64> {
        Ok(s * self.eval_g(s)?)
    }

    /// Unique `s ≥ 0` with `s g(s) = ξ`.
    ///
    /// `G` is increasing and convex, so Newton started from an upper bound
    /// decreases monotonically onto the root; the bracket `[0, max(1, ξ/a₀)]`
    /// is kept as a bisection fallback.
    pub fn invert_darcy_law(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) || xi.is_infinite() {
            return Err(Error::Domain(format!(
                "inverse Darcy law requires finite xi >= 0, got {xi}"
            )));
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        let a0 = self.a0();
        let mut lo = 0.0_f64;
        let mut hi = (xi / a0).max(1.0);
        // G(s) >= a_N s^{α_N+1} gives a second upper bound, much tighter for large xi.
        let lead = self.leading_coefficient();
        let top = self.leading_exponent();
        let mut s = xi / a0;
        if lead > 0.0 && top > 0.0 {
            s = s.min((xi / lead).powf(1.0 / (top + 1.0)));
        }
        let tol = TOL_ROOT * (1.0 + xi);
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_ROOT_ITERATIONS {
            let g = self.g_raw(s);
            residual = s * g - xi;
            if residual == 0.0 {
                return Ok(s);
            }
            if residual > 0.0 {
                hi = hi.min(s);
            } else {
                lo = lo.max(s);
            }
            let slope = g + self.s_g_prime(s);
            let mut next = s - residual / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - s).abs();
            s = next;
            if step <= 4.0 * f64::EPSILON * s || hi - lo <= 4.0 * f64::EPSILON * hi {
                residual = s * self.g_raw(s) - xi;
                break;
            }
        }
        if residual.abs() <= tol {
            Ok(s)
        } else {
            Err(Error::NonConvergence {
                what: format!("inverse Darcy law at xi = {xi}"),
                residual: residual.abs(),
            })
        }
    }

    /// `K₁(ξ) = 1 / g(G⁻¹(ξ))`, in `(0, 1/a₀]` and nonincreasing.
    pub fn k1(&self, xi: f64) -> Result<f64> {
        let s = self.invert_darcy_law(xi)?;
        Ok(1.0 / self.g_raw(s))
    }

    /// `K₁'(ξ) = −K₁(ξ) g'(s) / (ξ g'(s) + g(s)²)` with `s = G⁻¹(ξ)`.
    pub fn k1_prime(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::Domain(format!("K1'(xi) requires xi > 0, got {xi}")));
        }
        let s = self.invert_darcy_law(xi)?;
        let g = self.g_raw(s);
        let gp = self.eval_g_prime(s)?;
        if gp == 0.0 {
            return Ok(0.0);
        }
        Ok(-(gp / g) / (xi * gp + g * g))
    }

    /// `H(ξ) = ∫₀^{ξ²} K₁(√σ) dσ`, evaluated exactly.
    ///
    /// Substituting `t = G(s)` in `H(ξ) = 2∫₀^ξ K₁(t) t dt` turns the
    /// integrand into `2 s G'(s)`, a sum of powers, so
    /// `H(ξ) = Σ 2 a_k (α_k + 1) / (α_k + 2) · S^{α_k + 2}` with `S = G⁻¹(ξ)`.
    pub fn h(&self, xi: f64) -> Result<f64> {
        let s = self.invert_darcy_law(xi)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(self
            .terms()
            .map(|(c, e)| 2.0 * c * (e + 1.0) / (e + 2.0) * s.powf(e + 2.0))
            .sum())
    }

    /// `H(ξ)` by adaptive Gauss–Kronrod quadrature of `2∫₀^ξ K₁(t) t dt`.
    pub fn h_quadrature(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) {
            return Err(Error::Domain(format!("H(xi) requires xi >= 0, got {xi}")));
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        let mut failure = None;
        let q = quadrature::integrate(
            |t| match self.k1(t) {
                Ok(k) => k * t,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            xi,
            TOL_QUAD,
            0.0,
            MAX_QUAD_PANELS,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        match q {
            Ok(q) => Ok(2.0 * q.value),
            Err(Error::NonConvergence { residual, .. }) => Err(Error::Numerical(format!(
                "quadrature of H({xi}) did not reach rel. tol {TOL_QUAD}: error estimate {residual:e}"
            ))),
            Err(e) => Err(e),
        }
    }

    /// `F(y) = K₁(|y|) y`.
    pub fn flux<const D: usize>(&self, y: [f64; D]) -> Result<[f64; D]> {
        let k = self.k1(norm(&y))?;
        Ok(y.map(|c| k * c))
    }

    /// Monotonicity form `Φ(y, y') = (F(y') − F(y))·(y' − y)`.
    pub fn phi<const D: usize>(&self, y: [f64; D], y_prime: [f64; D]) -> Result<f64> {
        let f = self.flux(y)?;
        let fp = self.flux(y_prime)?;
        Ok((0..D).map(|i| (fp[i] - f[i]) * (y_prime[i] - y[i])).sum())
    }

    /// `Φ(y, y') / (K₁(max(|y|, |y'|)) |y' − y|²)`, or `None` when `y = y'`.
    pub fn strict_monotonicity_ratio<const D: usize>(
        &self,
        y: [f64; D],
        y_prime: [f64; D],
    ) -> Result<Option<f64>> {
        let diff: f64 = (0..D).map(|i| (y_prime[i] - y[i]).powi(2)).sum();
        if diff == 0.0 {
            return Ok(None);
        }
        let k = self.k1(norm(&y).max(norm(&y_prime)))?;
        Ok(Some(self.phi(y, y_prime)? / (k * diff)))
    }

    /// Numerical bound constants on a log grid plus the `ξ → ∞`
    /// asymptote `K₁(ξ) ξ^a → a_N^{a−1}`.
    pub fn estimate_bounds(&self, grid: &BoundsGrid) -> Result<ConstitutiveBounds> {
        grid.validate()?;
        let a = self.degeneracy_exponent();
        let asymptote = if self.exponents.len() == 1 {
            1.0 / self.a0()
        } else {
            self.leading_coefficient().powf(a - 1.0)
        };
        let mut d1 = asymptote;
        let mut d2 = asymptote;
        let mut d3 = asymptote;
        let mut sup_elasticity = self.leading_exponent();
        for xi in std::iter::once(0.0).chain(grid.points()) {
            let s = self.invert_darcy_law(xi)?;
            let k = 1.0 / self.g_raw(s);
            let scaled = k * (1.0 + xi).powf(a);
            d1 = d1.min(scaled);
            d2 = d2.max(scaled);
            let denom = xi.powf(2.0 - a) - 1.0;
            if denom > 0.0 {
                d3 = d3.min(k * xi * xi / denom);
            }
            if s > 0.0 {
                sup_elasticity = sup_elasticity.max(self.s_g_prime(s) / self.g_raw(s));
            }
        }
        let theta = if sup_elasticity > 0.0 {
            1.0 / sup_elasticity
        } else {
            f64::INFINITY
        };
        Ok(ConstitutiveBounds {
            d1,
            d2,
            d3,
            theta,
            grid: grid.clone(),
        })
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Log-spaced certification grid `ξ ∈ [xi_min, xi_max]` (plus `ξ = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub points: usize,
}

impl Default for BoundsGrid {
    fn default() -> Self {
        Self {
            xi_min: 1e-6,
            xi_max: 1e9,
            points: 1501,
        }
    }
}

impl BoundsGrid {
    fn validate(&self) -> Result<()> {
        if !(self.xi_min > 0.0 && self.xi_max > self.xi_min && self.points >= 2) {
            return Err(Error::Validation(format!("invalid bounds grid {self:?}")));
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let (l0, l1) = (self.xi_min.ln(), self.xi_max.ln());
        let n = self.points - 1;
        (0..=n).map(move |k| (l0 + (l1 - l0) * k as f64 / n as f64).exp())
    }
}

/// Bound constants: `d₁/(1+ξ)^a ≤ K₁(ξ) ≤ d₂/(1+ξ)^a`,
/// `d₃(ξ^{2−a} − 1) ≤ K₁(ξ)ξ²`, `g(s) ≥ θ s g'(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstitutiveBounds {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// `+∞` for constant `g`.
    pub theta: f64,
    pub grid: BoundsGrid,
}

impl ConstitutiveBounds {
    pub fn lower_a1(&self, a: f64, xi: f64) -> f64 {
        self.d1 / (1.0 + xi).powf(a)
    }

    pub fn upper_a1(&self, a: f64, xi: f64) -> f64 {
        self.d2 / (1.0 + xi).powf(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> ForchheimerPolynomial {
        ForchheimerPolynomial::two_term(1.0, 1.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn construction_rejects_bad_polynomials() {
        assert!(ForchheimerPolynomial::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(ForchheimerPolynomial::new(vec![1.0, -1.0], vec![0.0, 1.0]).is_err());
        assert!(ForchheimerPolynomial::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(ForchheimerPolynomial::new(vec![1.0, 1.0], vec![0.5, 1.0]).is_err());
        assert!(ForchheimerPolynomial::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(ForchheimerPolynomial::new(vec![], vec![]).is_err());
    }

    #[test]
    fn degeneracy_exponent() {
        assert_eq!(ForchheimerPolynomial::constant(2.0).unwrap().degeneracy_exponent(), 0.0);
        assert_eq!(linear().degeneracy_exponent(), 0.5);
        let p = ForchheimerPolynomial::new(vec![1.0, 2.0], vec![0.0, 1.5]).unwrap();
        assert!((p.degeneracy_exponent() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn g_and_derivative_examples() {
        let g = linear();
        assert_eq!(g.eval_g(0.0).unwrap(), 1.0);
        assert_eq!(g.eval_g(2.0).unwrap(), 3.0);
        assert_eq!(g.eval_g_prime(3.0).unwrap(), 1.0);
        let p = ForchheimerPolynomial::new(vec![1.0, 2.0], vec![0.0, 1.5]).unwrap();
        assert_eq!(p.eval_g(4.0).unwrap(), 17.0);
        assert_eq!(p.eval_g_prime(4.0).unwrap(), 6.0);
        let c = ForchheimerPolynomial::constant(3.0).unwrap();
        assert_eq!(c.eval_g_prime(7.0).unwrap(), 0.0);
        assert!(matches!(g.eval_g(-1.0), Err(Error::Domain(_))));
        assert!(matches!(g.eval_g_prime(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_darcy_law_examples() {
        let g = linear();
        assert_eq!(g.invert_darcy_law(0.0).unwrap(), 0.0);
        assert!(close(g.invert_darcy_law(2.0).unwrap(), 1.0, 1e-14));
        assert!(close(g.invert_darcy_law(6.0).unwrap(), 2.0, 1e-14));
        assert!(matches!(g.invert_darcy_law(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn k1_examples() {
        let g = linear();
        assert_eq!(g.k1(0.0).unwrap(), 1.0);
        assert!(close(g.k1(2.0).unwrap(), 0.5, 1e-14));
        assert!(close(g.k1(6.0).unwrap(), 1.0 / 3.0, 1e-14));
        let c = ForchheimerPolynomial::constant(4.0).unwrap();
        assert_eq!(c.k1(0.0).unwrap(), 0.25);
        assert_eq!(c.k1(123.0).unwrap(), 0.25);
    }

    #[test]
    fn k1_prime_examples() {
        let g = linear();
        assert!(close(g.k1_prime(2.0).unwrap(), -1.0 / 12.0, 1e-13));
        assert!(close(g.k1_prime(6.0).unwrap(), -1.0 / 45.0, 1e-13));
        // Derivative of the closed form 2/(1+√(1+4ξ)) at ξ=2.
        let w: f64 = 3.0;
        let closed = -4.0 / ((1.0 + w).powi(2) * w);
        assert!(close(g.k1_prime(2.0).unwrap(), closed, 1e-13));
        assert_eq!(ForchheimerPolynomial::constant(1.0).unwrap().k1_prime(5.0).unwrap(), 0.0);
        assert!(g.k1_prime(0.0).is_err());
    }

    #[test]
    fn h_examples() {
        let g = linear();
        assert_eq!(g.h(0.0).unwrap(), 0.0);
        assert!(close(g.h(2.0).unwrap(), 7.0 / 3.0, 1e-14));
        assert!(close(g.h_quadrature(2.0).unwrap(), 7.0 / 3.0, 1e-12));
        let c = ForchheimerPolynomial::constant(2.0).unwrap();
        assert!(close(c.h(3.0).unwrap(), 4.5, 1e-14));
        assert!(close(c.h_quadrature(3.0).unwrap(), 4.5, 1e-12));
    }

    #[test]
    fn h_routes_agree_for_fractional_exponents() {
        let p = ForchheimerPolynomial::new(vec![1.0, 0.7, 0.2], vec![0.0, 0.5, 1.7]).unwrap();
        for xi in [1e-4, 0.3, 1.0, 17.0, 4.5e3] {
            let a = p.h(xi).unwrap();
            let b = p.h_quadrature(xi).unwrap();
            assert!((a - b).abs() <= 1e-9 * a, "xi={xi}: {a} vs {b}");
        }
    }

    #[test]
    fn phi_examples() {
        let g = linear();
        assert_eq!(g.phi([1.5], [1.5]).unwrap(), 0.0);
        assert!(close(g.phi([0.0], [2.0]).unwrap(), 2.0, 1e-14));
        assert!(close(g.phi([0.0, 0.0], [2.0, 0.0]).unwrap(), 2.0, 1e-14));
        assert!(close(g.phi([0.0, 0.0], [0.0, -2.0]).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn bounds_for_constant_and_linear() {
        let grid = BoundsGrid::default();
        let c = ForchheimerPolynomial::constant(1.0).unwrap();
        let b = c.estimate_bounds(&grid).unwrap();
        assert_eq!((b.d1, b.d2), (1.0, 1.0));
        assert!(b.theta.is_infinite());

        let b = linear().estimate_bounds(&grid).unwrap();
        assert!(b.d1 <= 1.0 && 1.0 <= b.d2);
        assert!((0.5..=2.0).contains(&b.d1) && (0.5..=2.0).contains(&b.d2));
        assert!(b.d3 > 0.0);
        assert!((b.theta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_literal_roundtrip() {
        let json = r#"{"coefficients":[1.0,2.0],"exponents":[0.0,1.5]}"#;
        let p: ForchheimerPolynomial = serde_json::from_str(json).unwrap();
        assert_eq!(p.coefficients(), &[1.0, 2.0]);
        assert_eq!(serde_json::to_string(&p).unwrap(), json);
        let bad = r#"{"coefficients":[0.0],"exponents":[0.0]}"#;
        assert!(serde_json::from_str::<ForchheimerPolynomial>(bad).is_err());
    }
}
