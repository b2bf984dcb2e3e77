//! Self-check suite behind `fcl check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::report::{CsvCell, CsvMirror};
use super::{convergence_study, energy_envelope_study, uniqueness_study, ConvergenceOptions, UniquenessOptions};
use crate::config::{InitialCondition, PhiSpec, SimulationConfig};
use crate::constitutive::{BoundsGrid, ForchheimerPolynomial};
use crate::coupling::{CouplingFunction, CouplingVariant};
use crate::diagnostics::{self, InequalitySampleSpec, TraceExponents};
use crate::error::Result;
use crate::grid::{Edge, GridSpec};
use crate::solver::{self, SolverControls};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    /// Headline number of the check (worst error, ratio, order, ...).
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub quick: bool,
    pub checks: Vec<CheckItem>,
    pub passed: bool,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl CsvMirror for CheckReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["name", "passed", "value"]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.checks.iter().map(|c| vec![c.name.into(), c.passed.into(), c.value.into()]).collect()
    }
}

type CheckFn = Box<dyn Fn() -> Result<Outcome>>;

struct Outcome {
    passed: bool,
    value: Option<f64>,
    detail: String,
}

fn outcome(passed: bool, value: f64, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { passed, value: Some(value), detail: detail.into() })
}

fn unit_g() -> ForchheimerPolynomial {
    ForchheimerPolynomial::two_term(1.0, 1.0).expect("valid")
}

fn log_samples(n: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n).map(move |k| (l0 + (l1 - l0) * k as f64 / (n - 1) as f64).exp())
}

fn k1_closed_form() -> Result<Outcome> {
    let g = unit_g();
    let mut worst: f64 = 0.0;
    for xi in log_samples(200, 1e-6, 1e6) {
        let s = (-1.0 + (1.0 + 4.0 * xi).sqrt()) / 2.0;
        worst = worst.max((g.k1(xi)? * (1.0 + s) - 1.0).abs());
    }
    outcome(worst < 1e-12, worst, format!("max relative K1 error against 1/(1+s) for g = 1 + s: {worst:e}"))
}

fn darcy_roundtrip() -> Result<Outcome> {
    let polys = [
        unit_g(),
        ForchheimerPolynomial::new(vec![1.0, 1.0, 0.5], vec![0.0, 1.0, 2.0])?,
        ForchheimerPolynomial::new(vec![1.0, 0.5], vec![0.0, 0.5])?,
    ];
    let mut worst: f64 = 0.0;
    for g in &polys {
        for xi in log_samples(120, 1e-8, 1e8) {
            let s = g.invert_darcy_law(xi)?;
            worst = worst.max((g.darcy_law(s)? - xi).abs() / xi);
        }
    }
    outcome(worst < 1e-12, worst, format!("max |s g(s) - xi| / xi after inversion: {worst:e}"))
}

fn k1_prime_consistency() -> Result<Outcome> {
    let g = unit_g();
    let mut worst: f64 = 0.0;
    let mut positive = 0;
    for xi in log_samples(60, 1e-3, 1e3) {
        let d = g.k1_prime(xi)?;
        if d > 0.0 {
            positive += 1;
        }
        let h = 1e-5 * xi;
        let fd = (g.k1(xi + h)? - g.k1(xi - h)?) / (2.0 * h);
        worst = worst.max((d - fd).abs() / fd.abs().max(1e-300));
    }
    outcome(positive == 0 && worst < 1e-6, worst, format!("{positive} positive derivatives, worst finite-difference mismatch {worst:e}"))
}

fn h_routes_agree() -> Result<Outcome> {
    let g = ForchheimerPolynomial::new(vec![1.0, 1.0, 0.5], vec![0.0, 1.0, 2.0])?;
    let mut worst: f64 = 0.0;
    for xi in log_samples(40, 1e-4, 1e4) {
        let exact = g.h(xi)?;
        worst = worst.max((exact - g.h_quadrature(xi)?).abs() / exact);
    }
    outcome(worst < 1e-10, worst, format!("closed-form and quadrature H differ by at most {worst:e}"))
}

fn monotonicity_form(samples: usize) -> Result<Outcome> {
    let g = unit_g();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut negative = 0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let mut draw = || {
            let m = 10f64.powf(rng.gen_range(-4.0..4.0));
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            [m * ang.cos(), m * ang.sin()]
        };
        let (y, yp) = (draw(), draw());
        if g.phi(y, yp)? < 0.0 {
            negative += 1;
        }
        if let Some(r) = g.strict_monotonicity_ratio(y, yp)? {
            min_ratio = min_ratio.min(r);
        }
    }
    outcome(
        negative == 0 && min_ratio >= 0.5,
        min_ratio,
        format!("{negative} negative values of Phi; smallest Phi / (K1(max) |y' - y|^2) = {min_ratio:.6}"),
    )
}

fn k1_sandwich() -> Result<Outcome> {
    let g = unit_g();
    let grid = BoundsGrid::default();
    let b = g.estimate_bounds(&grid)?;
    let a = g.degeneracy_exponent();
    let mut gap: f64 = 0.0;
    for xi in log_samples(500, 1e-6, 1e6) {
        let k = g.k1(xi)?;
        gap = gap.max(b.lower_a1(a, xi) / k - 1.0).max(k / b.upper_a1(a, xi) - 1.0);
    }
    // The constants come from a finite grid, so samples between grid points may sit slightly outside.
    outcome(
        gap < 1e-3 && b.d1 > 0.0 && b.d2 >= b.d1,
        gap,
        format!("d1 = {}, d2 = {}, d3 = {}, theta = {}; largest relative excursion {gap:e}", b.d1, b.d2, b.d3, b.theta),
    )
}

fn coupling_shape() -> Result<Outcome> {
    let mut worst_odd: f64 = 0.0;
    let mut decreasing = 0;
    let mut cert_ok = true;
    for variant in [CouplingVariant::Saturating, CouplingVariant::PowerClamped] {
        let b = CouplingFunction::new(variant, 2.0, 0.5)?;
        let zs: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.05).collect();
        for w in zs.windows(2) {
            if b.eval_b(w[1]) < b.eval_b(w[0]) {
                decreasing += 1;
            }
        }
        for &z in &zs {
            worst_odd = worst_odd.max((b.eval_b(z) + b.eval_b(-z)).abs());
            if b.eval_b(z).abs() > b.c_hat() * z.abs().sqrt() * (1.0 + 1e-12) + 1e-300 {
                cert_ok = false;
            }
        }
        for w in zs.windows(2) {
            if (b.eval_b(w[1]) - b.eval_b(w[0])).abs() > b.lipschitz() * (w[1] - w[0]) * (1.0 + 1e-12) {
                cert_ok = false;
            }
        }
    }
    outcome(
        worst_odd == 0.0 && decreasing == 0 && cert_ok,
        worst_odd,
        format!("oddness defect {worst_odd:e}, {decreasing} decreasing pairs, certificates hold: {cert_ok}"),
    )
}

fn grid_accuracy() -> Result<Outcome> {
    let mut errs = Vec::new();
    let pi = std::f64::consts::PI;
    for n in [16, 32] {
        let g = GridSpec::unit_square(n, &[Edge::Right]).build()?;
        let f = g.field_from_fn(|x, y| (pi * x).cos() * (pi * y).cos());
        let grad = g.gradient(&f)?;
        let mut e2 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = g.center(i, j);
                let ex = [-pi * (pi * x).sin() * (pi * y).cos(), -pi * (pi * x).cos() * (pi * y).sin()];
                let d = grad[g.index(i, j)];
                e2 += ((d[0] - ex[0]).powi(2) + (d[1] - ex[1]).powi(2)) * g.cell_volume();
            }
        }
        let area_err = (g.integrate(&g.constant_field(1.0))? - 1.0).abs();
        errs.push((e2.sqrt(), area_err));
    }
    let order = (errs[0].0 / errs[1].0).log2();
    outcome(
        errs.iter().all(|e| e.1 < 1e-14) && order > 1.0,
        order,
        format!("gradient L2 errors {:e}, {:e} (order {order:.3}); constant integral exact", errs[0].0, errs[1].0),
    )
}

fn elementary_inequalities(quick: bool) -> Result<Outcome> {
    let spec = InequalitySampleSpec { samples: if quick { 10_000 } else { 100_000 }, ..Default::default() };
    let rep = diagnostics::check_elementary_inequalities(&spec);
    let violations: usize = rep.checks.iter().map(|c| c.violations).sum();
    outcome(rep.passed, violations as f64, format!("{} inequalities, {violations} violations", rep.checks.len()))
}

fn small(n: usize) -> SimulationConfig {
    let mut c = SimulationConfig::reference(n);
    c.time.t_final = 0.05;
    c.time.dt = 0.005;
    c
}

fn equilibrium() -> Result<Outcome> {
    let mut c = small(8);
    c.bc.phi = PhiSpec::Constant(0.0);
    c.ic.u = InitialCondition::Constant { value: 0.7 };
    c.ic.v = InitialCondition::Constant { value: 0.7 };
    let traj = solver::run(&c)?;
    let drift = traj
        .snapshots
        .iter()
        .flat_map(|s| s.u.values().iter().chain(s.v.values()))
        .map(|x| (x - 0.7).abs())
        .fold(0.0, f64::max);
    outcome(traj.complete && drift < 1e-12, drift, format!("max drift from the constant state {drift:e}"))
}

fn conservation() -> Result<Outcome> {
    let mut c = small(16);
    c.bc.phi = PhiSpec::Constant(0.0);
    let traj = solver::run(&c)?;
    let res = diagnostics::conservation_residual(&traj)?;
    outcome(traj.complete && res < 1e-8, res, format!("relative drift of the total mass {res:e}"))
}

fn dissipation() -> Result<Outcome> {
    let mut c = small(16);
    c.bc.phi = PhiSpec::Constant(0.0);
    let traj = solver::run(&c)?;
    let series = diagnostics::energy_series(&traj)?;
    let worst = series
        .windows(2)
        .map(|w| w[1].mass_energy() - w[0].mass_energy())
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(worst <= 1e-12, worst, format!("largest one-step growth of the L2 energy {worst:e}"))
}

fn heat_order(quick: bool) -> Result<Outcome> {
    let opts = if quick {
        ConvergenceOptions { grids: vec![8, 16], t_final: 0.1, coarse_steps: 2 }
    } else {
        ConvergenceOptions::default()
    };
    let rep = convergence_study(&opts, SolverControls::default())?;
    let orders = rep.orders();
    let worst = orders.iter().map(|p| (p - 2.0).abs()).fold(0.0, f64::max);
    let fine_ok = quick || rep.finest_error() < 5e-3;
    outcome(
        worst <= 0.2 && fine_ok,
        orders.iter().copied().fold(f64::INFINITY, f64::min),
        format!("observed orders {orders:?}, finest error {:e}", rep.finest_error()),
    )
}

fn uniqueness(quick: bool) -> Result<Outcome> {
    let base = if quick { small(8) } else { SimulationConfig::reference(16) };
    let rep = uniqueness_study(&base, &UniquenessOptions { refine: !quick, ..Default::default() })?;
    let envelope_ok = rep.levels.iter().all(|l| l.envelope_violations == 0);
    outcome(
        rep.byte_identical && rep.identical_w_max <= rep.identical_w_bound && envelope_ok,
        rep.identical_w_max,
        format!(
            "identical runs byte-equal: {}, W max {:e} (bound {:e}), fitted C {:?}",
            rep.byte_identical,
            rep.identical_w_max,
            rep.identical_w_bound,
            rep.levels.iter().map(|l| l.fitted_c).collect::<Vec<_>>()
        ),
    )
}

fn trace_feasibility(quick: bool) -> Result<Outcome> {
    let g = ForchheimerPolynomial::new(vec![1.0, 1.0], vec![0.0, 0.5])?;
    let a = g.degeneracy_exponent();
    let ex = TraceExponents::new(a, 0.0, 2.0)?;
    let levels: &[usize] = if quick { &[16] } else { &[16, 32] };
    let mut sup = Vec::new();
    for &n in levels {
        let grid = GridSpec::unit_square(n, &[Edge::Right]).build()?;
        let mut c: f64 = 0.0;
        for ic in diagnostics::standard_trace_corpus() {
            let u = ic.evaluate(&grid)?;
            c = c.max(diagnostics::trace_check(&grid, &u, &ex, 1.0)?.min_feasible_c);
        }
        sup.push(c);
    }
    let stable = sup.windows(2).all(|w| w[1] <= 2.0 * w[0].max(1e-12));
    outcome(
        sup.iter().all(|c| c.is_finite()) && stable,
        *sup.last().expect("non-empty"),
        format!("smallest feasible constant per grid {sup:?}"),
    )
}

fn energy_envelope(quick: bool) -> Result<Outcome> {
    let grids: &[usize] = if quick { &[8] } else { &[16, 32] };
    let rep = energy_envelope_study(grids, 1.0)?;
    let violations: usize = rep.levels.iter().map(|l| l.violations).sum();
    let stable = quick || rep.refinement_stable();
    outcome(
        violations == 0 && stable,
        rep.c_hat_ratio,
        format!(
            "C hat per grid {:?}, ratio {}",
            rep.levels.iter().map(|l| l.c_hat).collect::<Vec<_>>(),
            rep.c_hat_ratio
        ),
    )
}

/// Runs every check; failures to evaluate a check are reported as failed
/// items.
pub fn run_check_suite(quick: bool) -> CheckReport {
    let samples = if quick { 20_000 } else { 200_000 };
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("k1_closed_form", Box::new(k1_closed_form)),
        ("darcy_law_roundtrip", Box::new(darcy_roundtrip)),
        ("k1_prime", Box::new(k1_prime_consistency)),
        ("h_closed_form_vs_quadrature", Box::new(h_routes_agree)),
        ("monotonicity_form", Box::new(move || monotonicity_form(samples))),
        ("k1_bounds", Box::new(k1_sandwich)),
        ("coupling_shape_and_certificates", Box::new(coupling_shape)),
        ("grid_accuracy", Box::new(grid_accuracy)),
        ("elementary_inequalities", Box::new(move || elementary_inequalities(quick))),
        ("constant_equilibrium", Box::new(equilibrium)),
        ("mass_conservation", Box::new(conservation)),
        ("energy_dissipation", Box::new(dissipation)),
        ("heat_mode_order", Box::new(move || heat_order(quick))),
        ("uniqueness", Box::new(move || uniqueness(quick))),
        ("trace_feasibility", Box::new(move || trace_feasibility(quick))),
        ("energy_envelope", Box::new(move || energy_envelope(quick))),
    ];
    let checks: Vec<CheckItem> = checks
        .into_iter()
        .map(|(name, f)| {
            log::info!("check {name}");
            match f() {
                Ok(o) => CheckItem { name, passed: o.passed, value: o.value, detail: o.detail },
                Err(e) => CheckItem { name, passed: false, value: None, detail: e.to_string() },
            }
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    CheckReport { quick, checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let rep = run_check_suite(true);
        let failed: Vec<_> = rep.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        assert!(rep.passed, "{failed:#?}");
        assert_eq!(rep.checks.len(), 16);
    }
}
