use fcl_core::config::{InitialCondition, PhiSpec};
use fcl_core::harness::format_float;
use fcl_core::{diagnostics, solver, CouplingFunction, CouplingVariant, ForchheimerPolynomial, SimulationConfig};
use proptest::prelude::*;

fn polynomial() -> impl Strategy<Value = ForchheimerPolynomial> {
    (0.1f64..10.0, prop::collection::vec((0.01f64..5.0, 0.1f64..3.0), 0..3)).prop_map(|(a0, terms)| {
        let mut exps: Vec<f64> = vec![0.0];
        let mut coefs = vec![a0];
        let mut e = 0.0;
        for (c, step) in terms {
            e += step;
            exps.push(e);
            coefs.push(c);
        }
        ForchheimerPolynomial::new(coefs, exps).unwrap()
    })
}

fn vec2() -> impl Strategy<Value = [f64; 2]> {
    (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| [a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn darcy_inverse_roundtrips(g in polynomial(), e in -6.0f64..6.0) {
        let xi = 10f64.powf(e);
        let s = g.invert_darcy_law(xi).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert!((g.darcy_law(s).unwrap() - xi).abs() <= 1e-11 * xi);
    }

    #[test]
    fn k1_positive_and_nonincreasing(g in polynomial(), e in -4.0f64..4.0, f in 1.0f64..10.0) {
        let xi = 10f64.powf(e);
        let (k, k2) = (g.k1(xi).unwrap(), g.k1(xi * f).unwrap());
        prop_assert!(k > 0.0 && k <= 1.0 / g.a0() * (1.0 + 1e-12));
        prop_assert!(k2 <= k * (1.0 + 1e-12));
        prop_assert!(g.k1_prime(xi).unwrap() <= 0.0);
    }

    #[test]
    fn h_sandwiched_by_k1(g in polynomial(), e in -4.0f64..4.0) {
        let xi = 10f64.powf(e);
        let (k, h) = (g.k1(xi).unwrap(), g.h(xi).unwrap());
        prop_assert!(k * xi * xi <= h * (1.0 + 1e-10));
        prop_assert!(h <= 2.0 * k * xi * xi * (1.0 + 1e-10));
    }

    #[test]
    fn monotonicity_form_nonnegative(g in polynomial(), y in vec2(), yp in vec2()) {
        let phi = g.phi(y, yp).unwrap();
        let scale = (y[0].abs() + y[1].abs() + yp[0].abs() + yp[1].abs()).powi(2) / g.a0();
        prop_assert!(phi >= -1e-13 * scale);
    }

    #[test]
    fn coupling_odd_and_monotone(r in 0.01f64..10.0, sigma in 0.05f64..0.95, z in -1e3f64..1e3, dz in 0.0f64..10.0, clamped: bool) {
        let variant = if clamped { CouplingVariant::PowerClamped } else { CouplingVariant::Saturating };
        let b = CouplingFunction::new(variant, r, sigma).unwrap();
        prop_assert_eq!(b.eval_b(-z), -b.eval_b(z));
        prop_assert!(b.eval_b(z + dz) >= b.eval_b(z));
        prop_assert!((b.eval_b(z + dz) - b.eval_b(z)) <= b.lipschitz() * dz * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn csv_floats_roundtrip(x in any::<f64>()) {
        let s = format_float(Some(x));
        if x.is_finite() {
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        } else {
            prop_assert!(s.is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_runs_conserve_mass(seed in any::<u64>(), hi in 0.1f64..3.0, r in 0.1f64..5.0) {
        let mut cfg = SimulationConfig::reference(6);
        cfg.time.t_final = 0.05;
        cfg.time.dt = 0.01;
        cfg.bc.phi = PhiSpec::Constant(0.0);
        cfg.model.b.as_mut().unwrap().r = r;
        cfg.ic.u = InitialCondition::SeededUniformRandom { lo: 0.0, hi, seed };
        cfg.ic.v = InitialCondition::SeededUniformRandom { lo: 0.0, hi, seed: seed ^ 1 };
        let traj = solver::run(&cfg).unwrap();
        prop_assert!(traj.complete);
        prop_assert!(diagnostics::conservation_residual(&traj).unwrap() <= 1e-8);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let mut cfg = SimulationConfig::reference(6);
        cfg.time.t_final = 0.03;
        cfg.time.dt = 0.01;
        cfg.ic.u = InitialCondition::SeededUniformRandom { lo: 0.0, hi: 2.0, seed };
        let (a, b) = (solver::run(&cfg).unwrap(), solver::run(&cfg).unwrap());
        prop_assert_eq!(a.last().u.values(), b.last().u.values());
        prop_assert_eq!(a.last().v.values(), b.last().v.values());
    }
}
