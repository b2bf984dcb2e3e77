use crate::config::{InitialCondition, SimulationConfig};
use crate::constitutive::ForchheimerPolynomial;
use crate::coupling::{CouplingSpec, CouplingVariant};

/// Trajectory corpus for the energy envelope: the reference setup and
/// four variations of `g`, `b` and the initial data, on an `n × n` grid
/// with `dt = 0.08 / n` and `T = 0.25`.
pub fn energy_corpus(n: usize) -> Vec<(&'static str, SimulationConfig)> {
    let base = {
        let mut c = SimulationConfig::reference(n);
        c.time.dt = 0.08 / n as f64;
        c
    };
    let mut power = base.clone();
    power.model.b = Some(CouplingSpec { variant: CouplingVariant::PowerClamped, r: 2.0, sigma: 0.5 });

    let mut quadratic = base.clone();
    quadratic.model.g = ForchheimerPolynomial::new(vec![1.0, 1.0, 0.5], vec![0.0, 1.0, 2.0]).expect("valid");

    let mut exchange = base.clone();
    exchange.model.b = Some(CouplingSpec { variant: CouplingVariant::Saturating, r: 5.0, sigma: 0.5 });
    exchange.ic.u = InitialCondition::GaussianBump { amplitude: 1.5, offset: 0.2, x0: 0.7, y0: 0.4, width: 0.1 };
    exchange.ic.v = InitialCondition::Constant { value: 1.5 };

    let mut rough = base.clone();
    rough.ic.u = InitialCondition::SeededUniformRandom { lo: 0.0, hi: 1.0, seed: 11 };
    rough.ic.v = InitialCondition::SeededUniformRandom { lo: 0.0, hi: 0.5, seed: 12 };

    vec![
        ("reference", base),
        ("power_clamped", power),
        ("quadratic_g", quadratic),
        ("strong_exchange", exchange),
        ("rough_initial_data", rough),
    ]
}
