use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{write_pair, CsvCell, CsvMirror, EnergySeries};
use super::{
    check, energy_corpus, sweep_pool, ConvergenceOptions, ExperimentConfig, ExperimentKind,
    ExperimentOutcome, SweepAxis, UniquenessOptions,
};
use crate::config::{InitialCondition, PhiSpec, SimulationConfig};
use crate::constitutive::{BoundsGrid, ConstitutiveBounds, ForchheimerPolynomial};
use crate::diagnostics::{self, StabilityReport};
use crate::error::{Error, Result};
use crate::solver::{self, SolverControls, Trajectory};

/// Per-run statistics written next to the snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub complete: bool,
    pub failure: Option<String>,
    /// Set when `λ < 1`.
    pub experimental_lambda: bool,
    pub steps: usize,
    pub snapshots: usize,
    pub picard_max_iterations: usize,
    pub picard_mean_iterations: f64,
    pub linear_iterations: usize,
    pub max_picard_residual: f64,
    /// `None` when `φ ≠ 0`.
    pub conservation_residual: Option<f64>,
    pub wall_time_s: f64,
}

impl RunMetadata {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let steps = traj.steps.len();
        let picard_total: usize = traj.steps.iter().map(|s| s.picard_iterations).sum();
        let conservation_residual = if traj.params.phi_is_zero() {
            Some(diagnostics::conservation_residual(traj)?)
        } else {
            None
        };
        Ok(Self {
            complete: traj.complete,
            failure: traj.failure.clone(),
            experimental_lambda: traj.params.is_experimental(),
            steps,
            snapshots: traj.snapshots.len(),
            picard_max_iterations: traj.max_picard_iterations(),
            picard_mean_iterations: if steps == 0 { 0.0 } else { picard_total as f64 / steps as f64 },
            linear_iterations: traj.steps.iter().map(|s| s.linear_iterations).sum(),
            max_picard_residual: traj.steps.iter().map(|s| s.residual).fold(0.0, f64::max),
            conservation_residual,
            wall_time_s: traj.wall_time_s,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trajectory: Trajectory,
    pub energy: EnergySeries,
    pub metadata: RunMetadata,
}

impl SimulationOutput {
    /// Snapshot CSVs, the energy series and `run_metadata.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let traj = &self.trajectory;
        let mut files = Vec::new();
        for (k, s) in traj.snapshots.iter().enumerate() {
            let path = dir.join(format!("snapshot_{k:05}.csv"));
            let mut buf = Vec::new();
            traj.grid.write_snapshot_csv(&mut buf, &s.u, &s.v)?;
            fs::write(&path, buf)?;
            files.push(path);
        }
        files.extend(write_pair(&self.energy, dir, "energy")?);
        let meta = dir.join("run_metadata.json");
        fs::write(&meta, super::render_json(&self.metadata)?)?;
        files.push(meta);
        Ok(files)
    }
}

/// Runs one simulation and evaluates its energy series.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationOutput> {
    let trajectory = solver::run(config)?;
    let energy = EnergySeries { series: diagnostics::energy_series(&trajectory)? };
    let metadata = RunMetadata::from_trajectory(&trajectory)?;
    Ok(SimulationOutput { trajectory, energy, metadata })
}

fn snapshot_bytes(traj: &Trajectory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for s in &traj.snapshots {
        traj.grid.write_snapshot_csv(&mut buf, &s.u, &s.v)?;
    }
    Ok(buf)
}

/// Doubles the resolution, halves `dt` and keeps the sampling times.
fn refine(cfg: &SimulationConfig) -> SimulationConfig {
    let mut c = cfg.clone();
    c.domain.nx *= 2;
    c.domain.ny *= 2;
    for r in &mut c.domain.robin_ranges {
        r.start *= 2;
        r.end *= 2;
    }
    c.time.dt /= 2.0;
    c.output.stride *= 2;
    c
}

fn cosine_x(amplitude: f64) -> InitialCondition {
    InitialCondition::cosine(amplitude, 0.0, 1.0, 0.0)
}

// ---------------------------------------------------------------------------
// Heat-mode convergence

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub l2_error: f64,
    /// `log₂(e_{coarser} / e)` relative to the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub t_final: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    pub fn finest_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.l2_error)
    }
}

impl CsvMirror for ConvergenceReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["n", "h", "dt", "steps", "l2_error", "order"]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.rows
            .iter()
            .map(|r| vec![r.n.into(), r.h.into(), r.dt.into(), r.steps.into(), r.l2_error.into(), r.order.into()])
            .collect()
    }
}

/// L² error against `e^{−π² t} cos(πx)` with `dt ∝ h²`.
pub fn convergence_study(opts: &ConvergenceOptions, controls: SolverControls) -> Result<ConvergenceReport> {
    if opts.grids.is_empty() || opts.grids.windows(2).any(|w| w[1] <= w[0]) || opts.grids[0] == 0 {
        return Err(Error::Validation(format!("convergence grids must increase, got {:?}", opts.grids)));
    }
    if !(opts.t_final > 0.0) || opts.coarse_steps == 0 {
        return Err(Error::Validation("convergence needs T > 0 and at least one step".into()));
    }
    let n0 = opts.grids[0];
    let jobs: Vec<(usize, usize)> = opts
        .grids
        .iter()
        .map(|&n| {
            let scale = (n as f64 / n0 as f64).powi(2);
            (n, (opts.coarse_steps as f64 * scale).round() as usize)
        })
        .collect();
    let pool = sweep_pool()?;
    let results: Vec<Result<(usize, usize, f64, f64)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, steps)| {
                let mut cfg = SimulationConfig::heat_mode(n, opts.t_final, steps);
                cfg.solver = controls;
                let traj = solver::run(&cfg)?;
                if let Some(f) = &traj.failure {
                    return Err(Error::Numerical(format!("heat mode on {n}x{n}: {f}")));
                }
                let pi = std::f64::consts::PI;
                let decay = (-pi * pi * opts.t_final).exp();
                let exact = traj.grid.field_from_fn(|x, _| decay * (pi * x).cos());
                let diff = traj.last().u.zip_with(&exact, |a, b| a - b)?;
                Ok((n, steps, cfg.time.dt, traj.grid.lp_norm(&diff, 2.0)?))
            })
            .collect()
    });
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(jobs.len());
    for r in results {
        let (n, steps, dt, err) = r?;
        let order = rows.last().map(|prev: &ConvergenceRow| {
            (prev.l2_error / err).ln() / (n as f64 / prev.n as f64).ln()
        });
        rows.push(ConvergenceRow { n, h: 1.0 / n as f64, dt, steps, l2_error: err, order });
    }
    Ok(ConvergenceReport { t_final: opts.t_final, rows })
}

// ---------------------------------------------------------------------------
// Uniqueness

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessLevel {
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "W0")]
    pub w0: f64,
    #[serde(rename = "W_final")]
    pub w_final: f64,
    #[serde(rename = "fitted_C")]
    pub fitted_c: Option<f64>,
    /// Samples with `W(t) > W(0) e^{C t}`.
    pub envelope_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// Two runs from identical data wrote identical snapshot bytes.
    pub byte_identical: bool,
    #[serde(rename = "identical_W_max")]
    pub identical_w_max: f64,
    /// `10 · linear_tol · max_t(∫|u|^α + ∫v²)`.
    #[serde(rename = "identical_W_bound")]
    pub identical_w_bound: f64,
    pub amplitude: f64,
    pub levels: Vec<UniquenessLevel>,
    /// `max(|C₁|, |C₂|) / min(|C₁|, |C₂|)` over the levels; infinite on a sign change.
    #[serde(rename = "fitted_C_ratio")]
    pub fitted_c_ratio: Option<f64>,
    #[serde(skip)]
    pub pair_reports: Vec<StabilityReport>,
}

impl CsvMirror for UniquenessReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["n", "dt", "W0", "W_final", "fitted_C", "envelope_violations"]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.levels
            .iter()
            .map(|l| {
                vec![
                    l.n.into(),
                    l.dt.into(),
                    l.w0.into(),
                    l.w_final.into(),
                    l.fitted_c.into(),
                    l.envelope_violations.into(),
                ]
            })
            .collect()
    }
}

fn require_complete(traj: &Trajectory, what: &str) -> Result<()> {
    match &traj.failure {
        None => Ok(()),
        Some(f) => Err(Error::Numerical(format!("{what}: {f}"))),
    }
}

/// Identical-data pair plus a `u0 + amplitude · cos(πx)` pair on the base
/// grid and, optionally, one refinement.
pub fn uniqueness_study(base: &SimulationConfig, opts: &UniquenessOptions) -> Result<UniquenessReport> {
    if !(opts.amplitude > 0.0 && opts.amplitude.is_finite()) {
        return Err(Error::Validation(format!("uniqueness amplitude must be positive, got {}", opts.amplitude)));
    }
    let mut configs = vec![base.clone()];
    if opts.refine {
        configs.push(refine(base));
    }
    let mut jobs = vec![base.clone()];
    for c in &configs {
        let mut p = c.clone();
        p.ic.u = c.ic.u.clone().plus(cosine_x(opts.amplitude));
        jobs.push(c.clone());
        jobs.push(p);
    }
    // jobs: [base (repeat), base, perturbed, refined, refined perturbed]
    let pool = sweep_pool()?;
    let runs: Vec<Result<Trajectory>> = pool.install(|| jobs.par_iter().map(solver::run).collect());
    let runs: Vec<Trajectory> = runs.into_iter().collect::<Result<_>>()?;
    for (k, t) in runs.iter().enumerate() {
        require_complete(t, &format!("uniqueness run {k}"))?;
    }

    let byte_identical = snapshot_bytes(&runs[0])? == snapshot_bytes(&runs[1])?;
    let same = diagnostics::stability_report(&runs[0], &runs[1])?;
    let scale = diagnostics::energy_series(&runs[1])?
        .iter()
        .map(|e| e.mass_energy())
        .fold(0.0, f64::max);
    let identical_w_bound = 10.0 * base.solver.linear_tol * scale;

    let mut levels = Vec::new();
    let mut pair_reports = Vec::new();
    for (k, cfg) in configs.iter().enumerate() {
        let (a, b) = (&runs[1 + 2 * k], &runs[2 + 2 * k]);
        let rep = diagnostics::stability_report(a, b)?;
        let c = rep.fitted_c;
        let envelope_violations = match c {
            Some(c) => rep
                .times
                .iter()
                .zip(&rep.w)
                .filter(|(t, w)| **w > rep.w[0] * (c * (**t - rep.times[0])).exp() * (1.0 + 1e-12))
                .count(),
            None => rep.w.len(),
        };
        levels.push(UniquenessLevel {
            n: cfg.domain.nx,
            dt: cfg.time.dt,
            w0: rep.w[0],
            w_final: *rep.w.last().expect("non-empty"),
            fitted_c: c,
            envelope_violations,
        });
        pair_reports.push(rep);
    }
    let cs: Vec<f64> = levels.iter().filter_map(|l| l.fitted_c).collect();
    let fitted_c_ratio = if cs.len() >= 2 && cs.len() == levels.len() {
        let same_sign = cs.iter().all(|c| *c > 0.0) || cs.iter().all(|c| *c < 0.0);
        if same_sign {
            let lo = cs.iter().map(|c| c.abs()).fold(f64::INFINITY, f64::min);
            let hi = cs.iter().map(|c| c.abs()).fold(0.0, f64::max);
            Some(hi / lo)
        } else {
            Some(f64::INFINITY)
        }
    } else {
        None
    };
    Ok(UniquenessReport {
        byte_identical,
        identical_w_max: same.w.iter().copied().fold(0.0, f64::max),
        identical_w_bound,
        amplitude: opts.amplitude,
        levels,
        fitted_c_ratio,
        pair_reports,
    })
}

// ---------------------------------------------------------------------------
// Parameter sweeps

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub axis: SweepAxis,
    /// Configured sweep value.
    pub value: f64,
    /// Matching entry of the perturbation record.
    pub magnitude: Option<f64>,
    #[serde(rename = "max_Z")]
    pub max_z: Option<f64>,
    pub max_grad_distance: Option<f64>,
    pub final_grad_distance: Option<f64>,
    #[serde(rename = "fitted_C")]
    pub fitted_c: Option<f64>,
    #[serde(rename = "forcing_C")]
    pub forcing_c: Option<f64>,
    pub envelope_violations: Option<usize>,
    pub envelope_violations_signfixed: Option<usize>,
    pub error: Option<String>,
}

/// Scaling of `max_t Z` and `grad_distance` along one axis, largest
/// perturbation first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisSummary {
    pub axis: SweepAxis,
    pub magnitudes: Vec<f64>,
    #[serde(rename = "max_Z")]
    pub max_z: Vec<f64>,
    /// `(Z_{k+1} / Z_k) / (m_{k+1} / m_k)`: 1 when `max Z` is proportional to the magnitude.
    pub normalized_ratios: Vec<f64>,
    /// Every normalized ratio lies in `[0.7, 1.3]`.
    pub halving_within_tolerance: bool,
    /// Least-squares slope of `log max Z` against `log magnitude`.
    pub z_exponent: Option<f64>,
    pub max_grad_distance: Vec<f64>,
    pub grad_exponent: Option<f64>,
    /// `max_t grad_distance` decreases strictly as the perturbation shrinks.
    pub grad_monotone: bool,
    /// Every cell finished with finite gradient distances.
    pub grad_bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub r_bar: Option<f64>,
    pub cells: Vec<SweepCell>,
    pub axes: Vec<AxisSummary>,
    #[serde(skip)]
    pub cell_reports: Vec<Option<StabilityReport>>,
}

impl CsvMirror for SweepReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "axis",
            "value",
            "magnitude",
            "max_Z",
            "max_grad_distance",
            "final_grad_distance",
            "fitted_C",
            "forcing_C",
            "envelope_violations",
            "envelope_violations_signfixed",
            "ok",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.cells
            .iter()
            .map(|c| {
                let count = |v: Option<usize>| v.map_or(CsvCell::Float(None), CsvCell::from);
                vec![
                    c.axis.name().into(),
                    c.value.into(),
                    c.magnitude.into(),
                    c.max_z.into(),
                    c.max_grad_distance.into(),
                    c.final_grad_distance.into(),
                    c.fitted_c.into(),
                    c.forcing_c.into(),
                    count(c.envelope_violations),
                    count(c.envelope_violations_signfixed),
                    c.error.is_none().into(),
                ]
            })
            .collect()
    }
}

const HALVING_TOLERANCE: f64 = 0.3;

fn perturbed(base: &SimulationConfig, axis: SweepAxis, value: f64) -> Result<SimulationConfig> {
    let mut c = base.clone();
    match axis {
        SweepAxis::D => c.model.k2 += value,
        SweepAxis::R => match c.model.b.as_mut() {
            Some(b) => b.r += value,
            None => return Err(Error::Validation("r sweep needs an exchange term in the base config".into())),
        },
        SweepAxis::Phi => {
            c.bc.phi = match &base.bc.phi {
                PhiSpec::Constant(p) => PhiSpec::Constant(p + value),
                PhiSpec::PerFace(values) => {
                    let grid = base.domain.build()?;
                    PhiSpec::PerFace(
                        values
                            .iter()
                            .zip(grid.boundary_faces())
                            .map(|(p, f)| if f.robin { p + value } else { *p })
                            .collect(),
                    )
                }
            }
        }
        SweepAxis::U0 => c.ic.u = base.ic.u.clone().plus(cosine_x(value)),
        SweepAxis::V0 => c.ic.v = base.ic.v.clone().plus(cosine_x(value)),
    }
    Ok(c)
}

fn magnitude(rep: &StabilityReport, axis: SweepAxis) -> f64 {
    let p = &rep.perturbation;
    match axis {
        SweepAxis::D => p.d,
        SweepAxis::R => p.r,
        SweepAxis::Phi => p.phi,
        SweepAxis::U0 => p.u0,
        SweepAxis::V0 => p.v0,
    }
}

fn log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn summarize(axis: SweepAxis, cells: &[&SweepCell]) -> AxisSummary {
    let mut rows: Vec<(f64, f64, f64)> = cells
        .iter()
        .filter_map(|c| Some((c.magnitude?, c.max_z?, c.max_grad_distance?)))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let magnitudes: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let max_z: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let grad: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let normalized_ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[1].1 / w[0].1) / (w[1].0 / w[0].0))
        .collect();
    let complete = rows.len() == cells.len() && rows.len() >= 2;
    AxisSummary {
        axis,
        halving_within_tolerance: complete
            && normalized_ratios.iter().all(|r| (r - 1.0).abs() <= HALVING_TOLERANCE),
        z_exponent: log_slope(&magnitudes, &max_z),
        grad_exponent: log_slope(&magnitudes, &grad),
        grad_monotone: complete && grad.windows(2).all(|w| w[1] < w[0]),
        grad_bounded: rows.len() == cells.len() && grad.iter().all(|g| g.is_finite()),
        magnitudes,
        max_z,
        normalized_ratios,
        max_grad_distance: grad,
    }
}

/// One base run and one perturbed run per sweep value, compared pairwise.
pub fn stability_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let r_bar = config.effective_r_bar()?;
    let jobs: Vec<(SweepAxis, f64, SimulationConfig)> = config
        .sweep
        .iter()
        .flat_map(|s| s.values.iter().map(move |&v| (s.axis, v)))
        .map(|(axis, v)| Ok((axis, v, perturbed(&config.base, axis, v)?)))
        .collect::<Result<_>>()?;
    let pool = sweep_pool()?;
    let base = solver::run(&config.base)?;
    require_complete(&base, "sweep base run")?;
    let results: Vec<Result<StabilityReport>> = pool.install(|| {
        jobs.par_iter()
            .map(|(axis, v, cfg)| {
                let traj = solver::run(cfg)?;
                require_complete(&traj, &format!("{} = {v}", axis.name()))?;
                diagnostics::stability_report(&base, &traj)
            })
            .collect()
    });
    let mut cells = Vec::with_capacity(jobs.len());
    let mut cell_reports = Vec::with_capacity(jobs.len());
    for ((axis, value, _), res) in jobs.iter().zip(results) {
        let cell = match &res {
            Ok(rep) => SweepCell {
                axis: *axis,
                value: *value,
                magnitude: Some(magnitude(rep, *axis)),
                max_z: Some(rep.max_z()),
                max_grad_distance: Some(rep.max_grad_distance()),
                final_grad_distance: rep.grad_distance.last().copied(),
                fitted_c: rep.fitted_c,
                forcing_c: Some(rep.forcing_c),
                envelope_violations: Some(rep.envelope_violations),
                envelope_violations_signfixed: Some(rep.envelope_violations_signfixed),
                error: None,
            },
            Err(e) => SweepCell {
                axis: *axis,
                value: *value,
                magnitude: None,
                max_z: None,
                max_grad_distance: None,
                final_grad_distance: None,
                fitted_c: None,
                forcing_c: None,
                envelope_violations: None,
                envelope_violations_signfixed: None,
                error: Some(e.to_string()),
            },
        };
        cells.push(cell);
        cell_reports.push(res.ok());
    }
    let mut axes = Vec::new();
    for s in &config.sweep {
        if axes.iter().any(|a: &AxisSummary| a.axis == s.axis) {
            continue;
        }
        let members: Vec<&SweepCell> = cells.iter().filter(|c| c.axis == s.axis).collect();
        axes.push(summarize(s.axis, &members));
    }
    Ok(SweepReport { r_bar, cells, axes, cell_reports })
}

// ---------------------------------------------------------------------------
// Energy envelope

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyEnvelopeLevel {
    pub n: usize,
    pub dt: f64,
    /// `sup_{member, t>0} log(E(t) / (1 + E(0))) / t` with `E = ∫|u|^α + ∫v²`.
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    /// Samples with `E(t) > e^{Ĉ t}(1 + E(0))`.
    pub violations: usize,
    /// `max_member ∫₀^T (∫|∇u|^{2−a}|u|^{α+δ−2} + ∫|∇v|²) dt / (1 + E(0))`.
    pub max_dissipation_ratio: f64,
    /// `max_{member, t} (∫|∇u|^{2−a} + ∫|∇v|²) / bracket(t)` with
    /// `bracket = Λ(0) + ∫₀^t (1 + ‖u‖^α)^β + ∫₀^t ‖v‖² + ∫|∇v₀|² + 1`.
    pub max_gradient_bracket_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyEnvelopeReport {
    pub members: Vec<&'static str>,
    pub beta: f64,
    pub levels: Vec<EnergyEnvelopeLevel>,
    /// `max(|Ĉ|) / min(|Ĉ|)` across levels; infinite on a sign change.
    #[serde(rename = "C_hat_ratio")]
    pub c_hat_ratio: f64,
}

impl EnergyEnvelopeReport {
    pub fn refinement_stable(&self) -> bool {
        self.c_hat_ratio < 2.0
    }
}

impl CsvMirror for EnergyEnvelopeReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["n", "dt", "C_hat", "violations", "max_dissipation_ratio", "max_gradient_bracket_ratio"]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.levels
            .iter()
            .map(|l| {
                vec![
                    l.n.into(),
                    l.dt.into(),
                    l.c_hat.into(),
                    l.violations.into(),
                    l.max_dissipation_ratio.into(),
                    l.max_gradient_bracket_ratio.into(),
                ]
            })
            .collect()
    }
}

struct MemberStats {
    c: f64,
    times: Vec<f64>,
    e: Vec<f64>,
    dissipation_ratio: f64,
    bracket_ratio: f64,
}

fn member_stats(traj: &Trajectory, beta: f64) -> Result<MemberStats> {
    let series = diagnostics::energy_series(traj)?;
    let times: Vec<f64> = series.iter().map(|e| e.t).collect();
    let e: Vec<f64> = series.iter().map(|e| e.mass_energy()).collect();
    let base = 1.0 + e[0];
    let c = times
        .iter()
        .zip(&e)
        .skip(1)
        .map(|(t, ek)| (ek / base).ln() / (t - times[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let dissipation: Vec<f64> = series.iter().map(|s| s.weighted_grad + s.grad_v_sq).collect();
    let dissipation_ratio = diagnostics::time_integral(&times, &dissipation) / base;
    let grad_v0 = series[0].grad_v_sq;
    let mut bracket_ratio: f64 = 0.0;
    let mut acc = 0.0;
    for k in 0..series.len() {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            acc += dt * ((1.0 + series[k].u_alpha_norm).powf(beta) + series[k].v_sq_norm);
        }
        let bracket = series[k].lambda0 + acc + grad_v0 + 1.0;
        bracket_ratio = bracket_ratio.max((series[k].grad_u_q + series[k].grad_v_sq) / bracket);
    }
    Ok(MemberStats { c, times, e, dissipation_ratio, bracket_ratio })
}

/// Fits one envelope rate over [`energy_corpus`] on each grid in `grids`.
pub fn energy_envelope_study(grids: &[usize], beta: f64) -> Result<EnergyEnvelopeReport> {
    if grids.is_empty() {
        return Err(Error::Validation("energy envelope needs at least one grid".into()));
    }
    let pool = sweep_pool()?;
    let members: Vec<&'static str> = energy_corpus(grids[0]).into_iter().map(|(name, _)| name).collect();
    let mut levels = Vec::new();
    for &n in grids {
        let corpus = energy_corpus(n);
        let dt = corpus[0].1.time.dt;
        let stats: Vec<Result<MemberStats>> = pool.install(|| {
            corpus
                .par_iter()
                .map(|(name, cfg)| {
                    let traj = solver::run(cfg)?;
                    require_complete(&traj, name)?;
                    member_stats(&traj, beta)
                })
                .collect()
        });
        let stats: Vec<MemberStats> = stats.into_iter().collect::<Result<_>>()?;
        let c_hat = stats.iter().map(|s| s.c).fold(f64::NEG_INFINITY, f64::max);
        if !c_hat.is_finite() {
            return Err(Error::Numerical(format!("energy envelope rate is not finite on {n}x{n}")));
        }
        let violations = stats
            .iter()
            .map(|s| {
                s.times
                    .iter()
                    .zip(&s.e)
                    .filter(|(t, e)| **e > (c_hat * (**t - s.times[0])).exp() * (1.0 + s.e[0]) * (1.0 + 1e-12))
                    .count()
            })
            .sum();
        levels.push(EnergyEnvelopeLevel {
            n,
            dt,
            c_hat,
            violations,
            max_dissipation_ratio: stats.iter().map(|s| s.dissipation_ratio).fold(0.0, f64::max),
            max_gradient_bracket_ratio: stats.iter().map(|s| s.bracket_ratio).fold(0.0, f64::max),
        });
    }
    let cs: Vec<f64> = levels.iter().map(|l| l.c_hat).collect();
    let same_sign = cs.iter().all(|c| *c > 0.0) || cs.iter().all(|c| *c < 0.0);
    let c_hat_ratio = if !same_sign {
        f64::INFINITY
    } else {
        let hi = cs.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let lo = cs.iter().map(|c| c.abs()).fold(f64::INFINITY, f64::min);
        hi / lo
    };
    Ok(EnergyEnvelopeReport { members, beta, levels, c_hat_ratio })
}

// ---------------------------------------------------------------------------
// Constitutive table

fn default_xi_min() -> f64 {
    1e-3
}
fn default_xi_max() -> f64 {
    1e3
}
fn default_points() -> usize {
    61
}

/// Input of the `constitutive` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstitutiveTableSpec {
    pub g: ForchheimerPolynomial,
    #[serde(default = "default_xi_min")]
    pub xi_min: f64,
    #[serde(default = "default_xi_max")]
    pub xi_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub bounds: BoundsGrid,
}

impl ConstitutiveTableSpec {
    pub fn new(g: ForchheimerPolynomial) -> Self {
        Self { g, xi_min: default_xi_min(), xi_max: default_xi_max(), points: default_points(), bounds: BoundsGrid::default() }
    }

    /// Accepts either this document or a simulation config (its `g` is used).
    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<Self>(text) {
            Ok(s) => Ok(s),
            Err(e) => match SimulationConfig::from_json(text) {
                Ok(cfg) => Ok(Self::new(cfg.model.g)),
                Err(_) => Err(Error::Json(e)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstitutiveTable {
    pub a: f64,
    pub bounds: ConstitutiveBounds,
    /// `[ξ, K₁, K₁′, H, d₁/(1+ξ)^a, d₂/(1+ξ)^a]` on a log grid.
    pub rows: Vec<[f64; 6]>,
}

impl CsvMirror for ConstitutiveTable {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["xi", "K1", "K1_prime", "H", "lower_A1", "upper_A1"]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.rows.iter().map(|r| r.iter().map(|&x| x.into()).collect()).collect()
    }
}

pub fn constitutive_table(spec: &ConstitutiveTableSpec) -> Result<ConstitutiveTable> {
    if !(spec.xi_min > 0.0 && spec.xi_max > spec.xi_min && spec.points >= 2) {
        return Err(Error::Validation(format!(
            "constitutive table needs 0 < xi_min < xi_max and at least 2 points, got [{}, {}] x {}",
            spec.xi_min, spec.xi_max, spec.points
        )));
    }
    let g = &spec.g;
    let a = g.degeneracy_exponent();
    let bounds = g.estimate_bounds(&spec.bounds)?;
    let (l0, l1) = (spec.xi_min.ln(), spec.xi_max.ln());
    let n = spec.points - 1;
    let rows = (0..=n)
        .map(|k| {
            let xi = if k == n { spec.xi_max } else { (l0 + (l1 - l0) * k as f64 / n as f64).exp() };
            Ok([xi, g.k1(xi)?, g.k1_prime(xi)?, g.h(xi)?, bounds.lower_a1(a, xi), bounds.upper_a1(a, xi)])
        })
        .collect::<Result<_>>()?;
    Ok(ConstitutiveTable { a, bounds, rows })
}

// ---------------------------------------------------------------------------

pub(super) fn dispatch(config: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    let mut outcome = ExperimentOutcome { kind: config.kind, ..Default::default() };
    match config.kind {
        ExperimentKind::Simulate => {
            let sim = simulate(&config.base)?;
            outcome.files = sim.write(out)?;
            if let Some(f) = &sim.metadata.failure {
                outcome.numerical_failures.push(f.clone());
            }
        }
        ExperimentKind::Convergence => {
            let rep = convergence_study(&config.convergence, config.base.solver)?;
            outcome.files = write_pair(&rep, out, "convergence")?;
            for (k, p) in rep.orders().iter().enumerate() {
                if !(1.8..=2.2).contains(p) {
                    outcome
                        .invariant_failures
                        .push(format!("observed order {p:.3} between grids {} and {} is outside [1.8, 2.2]", rep.rows[k].n, rep.rows[k + 1].n));
                }
            }
        }
        ExperimentKind::Uniqueness => {
            let rep = uniqueness_study(&config.base, &config.uniqueness)?;
            outcome.files = write_pair(&rep, out, "uniqueness")?;
            for (level, pair) in rep.levels.iter().zip(&rep.pair_reports) {
                outcome.files.extend(write_pair(pair, out, &format!("uniqueness_pair_{}", level.n))?);
                if level.envelope_violations > 0 {
                    outcome.invariant_failures.push(format!("{} samples above W(0)e^(Ct) on {}x{}", level.envelope_violations, level.n, level.n));
                }
            }
            if !rep.byte_identical {
                outcome.invariant_failures.push("identical runs produced different snapshots".into());
            }
            if rep.identical_w_max > rep.identical_w_bound {
                outcome.invariant_failures.push(format!("identical-data W reached {:e}", rep.identical_w_max));
            }
            if let Some(r) = rep.fitted_c_ratio {
                if !(r < 2.0) {
                    outcome.invariant_failures.push(format!("fitted C changed by a factor {r} under refinement"));
                }
            }
        }
        ExperimentKind::StabilitySweep | ExperimentKind::GradientStability => {
            let rep = stability_sweep(config)?;
            let stem = if config.kind == ExperimentKind::StabilitySweep { "sweep_summary" } else { "gradient_summary" };
            outcome.files = write_pair(&rep, out, stem)?;
            let mut seen = std::collections::HashMap::new();
            for (cell, r) in rep.cells.iter().zip(&rep.cell_reports) {
                let k = seen.entry(cell.axis).or_insert(0usize);
                if let Some(r) = r {
                    outcome.files.extend(write_pair(r, out, &format!("cell_{}_{}", cell.axis.name(), k))?);
                }
                *k += 1;
                if let Some(e) = &cell.error {
                    outcome.numerical_failures.push(format!("{} = {}: {e}", cell.axis.name(), cell.value));
                }
                if cell.envelope_violations_signfixed.unwrap_or(0) > 0 {
                    outcome.invariant_failures.push(format!("{} = {}: Z exceeds the sign-corrected envelope", cell.axis.name(), cell.value));
                }
            }
            for a in &rep.axes {
                if config.kind == ExperimentKind::StabilitySweep && !a.halving_within_tolerance {
                    outcome.invariant_failures.push(format!(
                        "{}: max Z ratios per halving {:?} (normalized) are not within 1 +/- {HALVING_TOLERANCE}; fitted exponent {:?}",
                        a.axis.name(),
                        a.normalized_ratios,
                        a.z_exponent
                    ));
                }
                if config.kind == ExperimentKind::GradientStability && !(a.grad_monotone && a.grad_bounded) {
                    outcome.invariant_failures.push(format!("{}: gradient distance is not monotone and bounded", a.axis.name()));
                }
            }
        }
        ExperimentKind::Check => {
            let rep = check::run_check_suite(config.quick);
            outcome.files = write_pair(&rep, out, "check_report")?;
            for c in rep.checks.iter().filter(|c| !c.passed) {
                outcome.invariant_failures.push(format!("{}: {}", c.name, c.detail));
            }
        }
    }
    Ok(outcome)
}
