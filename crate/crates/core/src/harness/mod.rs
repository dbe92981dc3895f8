//! Experiment orchestration: configuration, cached trajectories and
//! factorizations, error metrics and sweeps.

mod config;
mod diagnostics;
mod output;

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::closure::{close, Closure};
use crate::dynamics::{simulate, simulate_calibrated, SimConfig, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::meso::{exact_recoverables, meso_fields, FineFields, MesoFields, MesoGrid};
use crate::regularize::ConvolutionSystem;
use crate::windows::WindowKernel;

pub use config::{ExperimentConfig, OneOrMany, RunSpec, SampleTimes};
pub use diagnostics::{
    filtered_bound_trace, spectra, theorem_bound_trace, FilteredBoundRow, SpectraRow,
    SpectraSummary, TheoremBoundRow,
};
pub use output::{
    emit_reports, write_approx_stresses, write_energy, write_fine_fields, write_meso_fields,
    write_reconstructed, write_singular_values, write_states, write_table, Manifest, ManifestEntry,
};

/// `l_inf` difference and its ratio to `l_inf(exact)`; `rel` is `None` when
/// the exact field vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelError {
    pub abs: f64,
    pub rel: Option<f64>,
}

pub fn relative_error(exact: &[f64], approx: &[f64]) -> Result<RelError> {
    check_len(exact.len(), approx.len())?;
    let abs = exact
        .iter()
        .zip(approx)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(RelError {
        abs,
        rel: (scale > 0.0).then(|| abs / scale),
    })
}

/// Errors at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub t: f64,
    pub energy: f64,
    /// `(E(t) - E(0)) / |E(0)|`.
    pub energy_drift: f64,
    pub jacobian: RelError,
    pub velocity: RelError,
    pub stress_conv: RelError,
    pub stress_int: RelError,
    pub rank: usize,
    pub clamped_jacobian: usize,
    pub clamped_density: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub spec: RunSpec,
    /// Step actually used, after calibration.
    pub dt_used: f64,
    pub rank: usize,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// Interaction-stress relative errors in sample order.
    pub fn stress_int_rel(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.stress_int.rel).collect()
    }

    pub fn row_at(&self, t: f64) -> Option<&ErrorRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|r| (r.t - t).abs() < 1e-6)
    }
}

/// Exact and reconstructed fields of every sample time.
#[derive(Debug, Clone)]
pub struct RunDetail {
    pub meso: Vec<MesoFields>,
    pub fine: Vec<FineFields>,
    pub closures: Vec<Closure>,
}

/// Result of one run inside a sweep; failures do not abort the sweep.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub result: std::result::Result<ErrorReport, String>,
}

pub fn sim_config(spec: &RunSpec) -> SimConfig {
    let mut cfg = SimConfig::new(spec.n, spec.test_case);
    cfg.dt = spec.dt;
    cfg.t_end = spec.t_end;
    cfg
}

pub fn trajectory_for(spec: &RunSpec) -> Result<Trajectory> {
    let cfg = sim_config(spec);
    if spec.calibrate_dt {
        simulate_calibrated(&cfg, &spec.sample_times)
    } else {
        simulate(&cfg, &spec.sample_times)
    }
}

pub fn system_for(spec: &RunSpec) -> Result<ConvolutionSystem> {
    let kernel = WindowKernel::new(spec.window, 1.0, spec.eta)?;
    let grid = MesoGrid::new(spec.b, spec.nfine, 1.0)?;
    ConvolutionSystem::new(kernel, grid, spec.sigma_cut, spec.rhs_tol)?.with_filter(spec.filter)
}

/// Pipeline of one run against a prepared trajectory and factorization.
pub fn run_detailed(
    spec: &RunSpec,
    traj: &Trajectory,
    system: &ConvolutionSystem,
) -> Result<(ErrorReport, RunDetail)> {
    let potential = traj.config.potential();
    let mass = traj.config.mass_total;
    let e0 = traj.energy_trace[0].total;
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    let mut detail = RunDetail {
        meso: Vec::new(),
        fine: Vec::new(),
        closures: Vec::new(),
    };
    for (state, energy) in traj.snapshots.iter().zip(&traj.energy_trace) {
        let meso = meso_fields(state, &system.kernel, &system.grid, &potential)?;
        let fine = exact_recoverables(state, &system.grid)?;
        let closure = close(system, &meso, spec.n, mass, &potential)?;
        rows.push(ErrorRow {
            t: state.t,
            energy: energy.total,
            energy_drift: (energy.total - e0) / e0.abs(),
            jacobian: relative_error(&fine.j_exact, &closure.fields.j_approx)?,
            velocity: relative_error(&fine.v_exact, &closure.fields.v_approx)?,
            stress_conv: relative_error(&meso.stress_conv, &closure.stress_conv)?,
            stress_int: relative_error(&meso.stress_int, &closure.stress_int)?,
            rank: system.rank(),
            clamped_jacobian: closure.fields.clamped_jacobian,
            clamped_density: closure.fields.clamped_density,
        });
        detail.meso.push(meso);
        detail.fine.push(fine);
        detail.closures.push(closure);
    }
    let report = ErrorReport {
        spec: spec.clone(),
        dt_used: traj.config.dt,
        rank: system.rank(),
        rows,
    };
    Ok((report, detail))
}

fn single_run(config: &ExperimentConfig) -> Result<RunSpec> {
    let mut runs = config.runs()?;
    if runs.len() != 1 {
        return Err(Error::Config(format!(
            "expected a single run, the config expands to {}",
            runs.len()
        )));
    }
    Ok(runs.remove(0))
}

/// Simulates, averages, closes and compares for a single-run config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorReport> {
    let spec = single_run(config)?;
    let traj = trajectory_for(&spec)?;
    let system = system_for(&spec)?;
    Ok(run_detailed(&spec, &traj, &system)?.0)
}

/// Like [`run_experiment`] but also returns the trajectory, the system and
/// every field.
pub fn run_experiment_detailed(
    config: &ExperimentConfig,
) -> Result<(ErrorReport, RunDetail, Trajectory, ConvolutionSystem)> {
    let spec = single_run(config)?;
    let traj = trajectory_for(&spec)?;
    let system = system_for(&spec)?;
    let (report, detail) = run_detailed(&spec, &traj, &system)?;
    Ok((report, detail, traj, system))
}

type Shared<T> = std::result::Result<Arc<T>, String>;

/// Computes each distinct value once, in parallel, keyed by `key`.
fn build_cache<T: Send + Sync>(
    specs: &[RunSpec],
    key: impl Fn(&RunSpec) -> String,
    build: impl Fn(&RunSpec) -> Result<T> + Sync,
) -> HashMap<String, Shared<T>> {
    let mut firsts: Vec<(String, &RunSpec)> = Vec::new();
    for spec in specs {
        let k = key(spec);
        if !firsts.iter().any(|(existing, _)| *existing == k) {
            firsts.push((k, spec));
        }
    }
    firsts
        .into_par_iter()
        .map(|(k, spec)| (k, build(spec).map(Arc::new).map_err(|e| e.to_string())))
        .collect()
}

/// Runs every entry of the config with shared trajectory and SVD caches on
/// `workers` threads. Output order follows [`ExperimentConfig::runs`].
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunOutcome>> {
    let specs = config.runs()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        let trajectories = build_cache(&specs, RunSpec::trajectory_key, trajectory_for);
        let systems = build_cache(&specs, RunSpec::system_key, system_for);
        specs
            .par_iter()
            .map(|spec| {
                let result = (|| {
                    let traj = trajectories[&spec.trajectory_key()].clone()?;
                    let system = systems[&spec.system_key()].clone()?;
                    run_detailed(spec, &traj, &system)
                        .map(|(r, _)| r)
                        .map_err(|e| e.to_string())
                })();
                if let Err(e) = &result {
                    log::error!("{}: {e}", spec.label());
                }
                RunOutcome {
                    spec: spec.clone(),
                    result,
                }
            })
            .collect()
    }))
}

fn require_single(name: &str, len: usize) -> Result<()> {
    if len != 1 {
        return Err(Error::Config(format!(
            "{name} must be a single value for this sweep"
        )));
    }
    Ok(())
}

/// One run per window at fixed `N` and `eta`.
pub fn sweep_window(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunOutcome>> {
    require_single("N", config.n.len())?;
    require_single("eta", config.eta.len())?;
    run_sweep(config, workers)
}

/// One run per `eta` at fixed `N` and window.
pub fn sweep_eta(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunOutcome>> {
    require_single("N", config.n.len())?;
    require_single("window", config.window.len())?;
    run_sweep(config, workers)
}

/// One run per `N` at fixed `B`, `eta` and window.
pub fn sweep_scale(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunOutcome>> {
    require_single("eta", config.eta.len())?;
    require_single("window", config.window.len())?;
    run_sweep(config, workers)
}
