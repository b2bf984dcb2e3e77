//! Functionals, inequality checks and fitted envelopes evaluated on
//! discrete fields and trajectories.

mod energy;
mod inequalities;
mod stability;
mod trace;

pub use energy::{
    conservation_residual, energy_report, energy_series, gronwall_fit, time_integral, EnergyReport,
    GRONWALL_FLOOR,
};
pub use inequalities::{
    check_elementary_inequalities, InequalityCheck, InequalityReport, InequalitySampleSpec,
};
pub use stability::{stability_report, Perturbation, StabilityReport};
pub use trace::{
    randomized_trace_corpus, standard_trace_corpus, trace_check, TraceCheck, TraceExponents,
};
