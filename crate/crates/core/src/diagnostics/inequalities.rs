use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalitySampleSpec {
    pub samples: usize,
    pub seed: u64,
    /// `x, y` are drawn log-uniformly from `[x_min, x_max]`, plus exact zeros.
    pub x_min: f64,
    pub x_max: f64,
    /// Upper end for the sampled exponents.
    pub p_max: f64,
}

impl Default for InequalitySampleSpec {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0x5eed,
            x_min: 1e-6,
            x_max: 1e3,
            p_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub statement: &'static str,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `(rhs − lhs) / rhs` seen.
    pub tightest_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub checks: Vec<InequalityCheck>,
    pub passed: bool,
}

struct Tally {
    check: InequalityCheck,
}

impl Tally {
    fn new(name: &'static str, statement: &'static str) -> Self {
        Self {
            check: InequalityCheck {
                name,
                statement,
                samples: 0,
                violations: 0,
                tightest_margin: f64::INFINITY,
            },
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        self.check.samples += 1;
        if rhs > 0.0 {
            self.check.tightest_margin = self.check.tightest_margin.min((rhs - lhs) / rhs);
        }
        // Round-off allowance for the equality cases (p = 1, β = γ, x = 1).
        if lhs > rhs * (1.0 + 1e-12) {
            self.check.violations += 1;
        }
    }
}

/// Samples the five elementary power inequalities for `x, y ≥ 0`:
///
/// 1. `(x+y)^p ≤ 2^p (x^p + y^p)` for `p > 0`
/// 2. `(x+y)^p ≤ x^p + y^p` for `0 < p ≤ 1`
/// 3. `(x+y)^p ≤ 2^{p−1} (x^p + y^p)` for `p ≥ 1`
/// 4. `x^β ≤ x^α + x^γ` for `0 ≤ α ≤ β ≤ γ`
/// 5. `x^β ≤ 1 + x^γ` for `0 ≤ β ≤ γ`
pub fn check_elementary_inequalities(spec: &InequalitySampleSpec) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (l0, l1) = (spec.x_min.ln(), spec.x_max.ln());
    let draw_x = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.02) {
            0.0
        } else {
            rng.gen_range(l0..=l1).exp()
        }
    };
    let mut t = [
        Tally::new("power_sum_2p", "(x+y)^p <= 2^p (x^p + y^p), p > 0"),
        Tally::new("power_sum_subadditive", "(x+y)^p <= x^p + y^p, 0 < p <= 1"),
        Tally::new("power_sum_convex", "(x+y)^p <= 2^(p-1) (x^p + y^p), p >= 1"),
        Tally::new("power_sandwich", "x^b <= x^a + x^c, 0 <= a <= b <= c"),
        Tally::new("power_one_plus", "x^b <= 1 + x^c, 0 <= b <= c"),
    ];
    for _ in 0..spec.samples {
        let x = draw_x(&mut rng);
        let y = draw_x(&mut rng);
        let p = rng.gen_range(f64::EPSILON..=spec.p_max);
        let s = (x + y).powf(p);
        t[0].record(s, 2f64.powf(p) * (x.powf(p) + y.powf(p)));

        let q = rng.gen_range(f64::EPSILON..=1.0);
        t[1].record((x + y).powf(q), x.powf(q) + y.powf(q));

        let q = rng.gen_range(1.0..=spec.p_max);
        t[2].record((x + y).powf(q), 2f64.powf(q - 1.0) * (x.powf(q) + y.powf(q)));

        let mut e = [
            rng.gen_range(0.0..=spec.p_max),
            rng.gen_range(0.0..=spec.p_max),
            rng.gen_range(0.0..=spec.p_max),
        ];
        e.sort_by(f64::total_cmp);
        t[3].record(x.powf(e[1]), x.powf(e[0]) + x.powf(e[2]));
        t[4].record(x.powf(e[1]), 1.0 + x.powf(e[2]));
    }
    let checks: Vec<InequalityCheck> = t.into_iter().map(|t| t.check).collect();
    let passed = checks.iter().all(|c| c.violations == 0);
    InequalityReport { checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert!((1.0f64 + 1.0).powi(2) <= 4.0 * 2.0);
        assert!(4.0f64.powf(1.0) <= 4.0f64.powf(0.5) + 4.0f64.powf(2.0));
        assert!(0.5f64.powf(0.5) <= 1.0 + 0.5f64.powi(2));
    }

    #[test]
    fn all_five_hold_on_default_sampling() {
        let r = check_elementary_inequalities(&InequalitySampleSpec::default());
        assert!(r.passed, "{:#?}", r.checks);
        assert_eq!(r.checks.len(), 5);
        for c in &r.checks {
            assert_eq!(c.samples, 100_000);
            assert!(c.tightest_margin >= -1e-12);
        }
        // The subadditive and convex forms are sharp at p = 1.
        assert!(r.checks[1].tightest_margin < 1e-3);
    }

    #[test]
    fn tally_flags_violations() {
        let mut t = Tally::new("t", "t");
        t.record(2.0, 1.0);
        t.record(1.0, 1.0);
        assert_eq!(t.check.violations, 1);
        assert_eq!(t.check.tightest_margin, -1.0);
    }
}
