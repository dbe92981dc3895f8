//! Periodic 1D Lennard-Jones chain integrated with Velocity Verlet.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::windows::min_image;

/// Number of ring neighbours on each side that can interact.
pub const NEIGHBOURS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub epsilon_well: f64,
    pub sigma: f64,
    pub cutoff_factor: f64,
    pub force_scale: f64,
}

impl PotentialSpec {
    pub const DEFAULT_WELL: f64 = 0.025;
    pub const DEFAULT_CUTOFF: f64 = 2.5;

    /// Potential whose equilibrium distance equals the lattice spacing `l/n`,
    /// with forces scaled by `1/n`.
    pub fn for_chain(n: usize, l: f64) -> Self {
        Self::with_well(n, l, Self::DEFAULT_WELL, Self::DEFAULT_CUTOFF)
    }

    pub fn with_well(n: usize, l: f64, epsilon_well: f64, cutoff_factor: f64) -> Self {
        let spacing = l / n as f64;
        PotentialSpec {
            epsilon_well,
            sigma: spacing / 2f64.powf(1.0 / 6.0),
            cutoff_factor,
            force_scale: 1.0 / n as f64,
        }
    }

    /// Equilibrium distance `h = 2^(1/6) sigma`.
    pub fn equilibrium(&self) -> f64 {
        2f64.powf(1.0 / 6.0) * self.sigma
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff_factor * self.equilibrium()
    }

    #[inline]
    fn raw(&self, r: f64) -> f64 {
        let s6 = (self.sigma / r).powi(6);
        4.0 * self.epsilon_well * (s6 * s6 - s6)
    }

    /// `U(xi)` inside the cutoff and zero beyond it (no shift).
    pub fn lj_potential(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::invalid(format!(
                "pair distance must be positive, got {xi}"
            )));
        }
        Ok(if xi > self.cutoff() {
            0.0
        } else {
            self.raw(xi)
        })
    }

    /// Pair energy used for the total energy: `U(r) - U(r_c)` inside the
    /// cutoff, zero beyond.
    #[inline]
    pub fn pair_energy(&self, r: f64) -> f64 {
        let rc = self.cutoff();
        if r > rc {
            0.0
        } else {
            self.raw(r) - self.raw(rc)
        }
    }

    /// `U'(r)` from the analytic form, ignoring the cutoff.
    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        let s6 = (self.sigma / r).powi(6);
        4.0 * self.epsilon_well * (-12.0 * s6 * s6 + 6.0 * s6) / r
    }

    /// Scaled force on particle `i` exerted by `j`, where `d = q_j - q_i`;
    /// zero beyond the cutoff.
    #[inline]
    pub fn pair_force(&self, d: f64) -> f64 {
        let r = d.abs();
        if r > self.cutoff() {
            0.0
        } else {
            self.force_scale * self.derivative(r) * d.signum()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestCase {
    /// One-mode sine initial velocity.
    Sine,
    /// Truncated quartic bump on the middle third.
    Quartic,
}

impl TestCase {
    pub fn name(self) -> &'static str {
        match self {
            TestCase::Sine => "sine",
            TestCase::Quartic => "quartic",
        }
    }

    /// Initial velocity at position `x` in a box of length `l`.
    pub fn initial_velocity(self, x: f64, l: f64) -> f64 {
        match self {
            TestCase::Sine => 1e-2 * (2.0 * PI * x / l).sin(),
            TestCase::Quartic => {
                let s = x / l;
                if (1.0 / 3.0..=2.0 / 3.0).contains(&s) {
                    let a = s - 1.0 / 3.0;
                    let b = s - 2.0 / 3.0;
                    25.0 * a * a * b * b
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" | "1" => Ok(TestCase::Sine),
            "quartic" | "2" => Ok(TestCase::Quartic),
            other => Err(Error::Config(format!("unknown test case '{other}'"))),
        }
    }
}

/// Positions and velocities of the chain at one instant.
///
/// Positions are wrapped into `[0, l)`; particle `i + 1` follows `i` along
/// the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub t: f64,
    pub l: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub mass_total: f64,
}

impl ChainState {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn particle_mass(&self) -> f64 {
        self.mass_total / self.n() as f64
    }

    pub fn momentum(&self) -> f64 {
        self.particle_mass() * self.v.iter().sum::<f64>()
    }
}

pub fn init_chain(n: usize, l: f64, test_case: TestCase) -> Result<ChainState> {
    if n < 8 {
        return Err(Error::invalid(format!(
            "need at least 8 particles, got {n}"
        )));
    }
    if !(l > 0.0) {
        return Err(Error::invalid(format!(
            "box length must be positive, got {l}"
        )));
    }
    let dx = l / n as f64;
    let q: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * dx).collect();
    let v = q
        .iter()
        .map(|&x| test_case.initial_velocity(x, l))
        .collect();
    Ok(ChainState {
        t: 0.0,
        l,
        q,
        v,
        mass_total: 1.0,
    })
}

fn check_gap(i: usize, j: usize, d: f64, l: f64) -> Result<()> {
    if d.abs() < 1e-12 * l {
        return Err(Error::Singularity {
            i,
            j,
            distance: d.abs(),
        });
    }
    Ok(())
}

/// Net interaction force on every particle.
///
/// Each unordered pair `(i, i + k)`, `k = 1..=3`, is visited once and its
/// force added with opposite signs, so the forces sum to zero exactly up to
/// rounding.
pub fn net_forces(state: &ChainState, spec: &PotentialSpec) -> Result<Vec<f64>> {
    let mut f = vec![0.0; state.n()];
    accumulate_forces(state, spec, &mut f)?;
    Ok(f)
}

fn accumulate_forces(state: &ChainState, spec: &PotentialSpec, f: &mut [f64]) -> Result<()> {
    let n = state.n();
    f.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..n {
        for k in 1..=NEIGHBOURS.min(n - 1) {
            let j = (i + k) % n;
            let d = min_image(state.q[j] - state.q[i], state.l);
            check_gap(i, j, d, state.l)?;
            let fij = spec.pair_force(d);
            f[i] += fij;
            f[j] -= fij;
        }
    }
    Ok(())
}

/// Kinetic and (force-scaled, shifted) potential energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

pub fn energy(state: &ChainState, spec: &PotentialSpec) -> Energy {
    let n = state.n();
    let m = state.particle_mass();
    let kinetic = 0.5 * m * state.v.iter().map(|v| v * v).sum::<f64>();
    let mut potential = 0.0;
    for i in 0..n {
        for k in 1..=NEIGHBOURS.min(n - 1) {
            let j = (i + k) % n;
            let r = min_image(state.q[j] - state.q[i], state.l).abs();
            potential += spec.pair_energy(r);
        }
    }
    Energy {
        kinetic,
        potential: spec.force_scale * potential,
    }
}

pub fn total_energy(state: &ChainState, spec: &PotentialSpec) -> f64 {
    energy(state, spec).total()
}

fn wrap(x: f64, l: f64) -> f64 {
    let w = x - l * (x / l).floor();
    // floor can round up to l for tiny negative x
    if w >= l {
        w - l
    } else {
        w
    }
}

/// One kick-drift-kick step; forces are recomputed at both ends.
pub fn velocity_verlet_step(
    state: &ChainState,
    dt: f64,
    spec: &PotentialSpec,
) -> Result<ChainState> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let mut integrator = Verlet::new(state.clone(), *spec)?;
    integrator.step(dt)?;
    Ok(integrator.state)
}

/// Velocity Verlet integrator that keeps the forces of the current state.
#[derive(Debug, Clone)]
pub struct Verlet {
    pub state: ChainState,
    spec: PotentialSpec,
    forces: Vec<f64>,
}

impl Verlet {
    pub fn new(state: ChainState, spec: PotentialSpec) -> Result<Self> {
        let forces = net_forces(&state, &spec)?;
        Ok(Verlet {
            state,
            spec,
            forces,
        })
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let inv_m = 1.0 / self.state.particle_mass();
        let l = self.state.l;
        let half = 0.5 * dt * inv_m;
        for ((q, v), f) in self
            .state
            .q
            .iter_mut()
            .zip(&mut self.state.v)
            .zip(&self.forces)
        {
            *v += half * f;
            *q = wrap(*q + dt * *v, l);
        }
        accumulate_forces(&self.state, &self.spec, &mut self.forces)?;
        for (v, f) in self.state.v.iter_mut().zip(&self.forces) {
            *v += half * f;
        }
        self.state.t += dt;
        Ok(())
    }
}

/// Parameters of one molecular dynamics run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub l: f64,
    pub mass_total: f64,
    pub test_case: TestCase,
    pub dt: f64,
    pub t_end: f64,
    pub epsilon_well: f64,
    pub cutoff_factor: f64,
}

impl SimConfig {
    pub fn new(n: usize, test_case: TestCase) -> Self {
        SimConfig {
            n,
            l: 1.0,
            mass_total: 1.0,
            test_case,
            dt: default_dt(n, 1.0),
            t_end: 1.0,
            epsilon_well: PotentialSpec::DEFAULT_WELL,
            cutoff_factor: PotentialSpec::DEFAULT_CUTOFF,
        }
    }

    pub fn potential(&self) -> PotentialSpec {
        PotentialSpec::with_well(self.n, self.l, self.epsilon_well, self.cutoff_factor)
    }

    pub fn initial_state(&self) -> Result<ChainState> {
        let mut s = init_chain(self.n, self.l, self.test_case)?;
        s.mass_total = self.mass_total;
        Ok(s)
    }
}

/// `1e-4`, reduced in proportion to the lattice spacing once `n > 1000`.
///
/// The stiffest lattice mode has angular frequency `2 sqrt(72 eps) / h`, so a
/// fixed step would turn unstable for fine chains.
pub fn default_dt(n: usize, l: f64) -> f64 {
    (0.1 * l / n as f64).min(1e-4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SimConfig,
    pub snapshots: Vec<ChainState>,
    pub energy_trace: Vec<EnergySample>,
}

impl Trajectory {
    /// Largest `|E(t) - E(0)| / |E(0)|` over the recorded samples.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.energy_trace[0].total;
        self.energy_trace
            .iter()
            .map(|e| (e.total - e0).abs() / e0.abs())
            .fold(0.0, f64::max)
    }

    /// Snapshot whose time is closest to `t`.
    pub fn at(&self, t: f64) -> &ChainState {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory has at least one snapshot")
    }
}

/// Integrates the chain and records snapshots at the requested times.
///
/// Sample times are rounded to the nearest step; duplicates after rounding
/// are dropped so snapshot times stay strictly increasing.
pub fn simulate(config: &SimConfig, sample_times: &[f64]) -> Result<Trajectory> {
    if !(config.dt > 0.0) {
        return Err(Error::invalid(format!(
            "time step must be positive, got {}",
            config.dt
        )));
    }
    if config.t_end < 0.0 {
        return Err(Error::invalid("t_end must be non-negative"));
    }
    let mut steps: Vec<u64> = Vec::with_capacity(sample_times.len() + 1);
    for &t in sample_times {
        if t < -1e-12 || t > config.t_end + 1e-12 {
            return Err(Error::invalid(format!(
                "sample time {t} outside [0, {}]",
                config.t_end
            )));
        }
        steps.push((t / config.dt).round().max(0.0) as u64);
    }
    if steps.is_empty() {
        steps.push(0);
    }
    steps.sort_unstable();
    steps.dedup();

    let spec = config.potential();
    let mut integrator = Verlet::new(config.initial_state()?, spec)?;
    let mut snapshots = Vec::with_capacity(steps.len());
    let mut energy_trace = Vec::with_capacity(steps.len());
    let mut done = 0u64;
    for &target in &steps {
        while done < target {
            integrator.step(config.dt)?;
            done += 1;
        }
        let mut snap = integrator.state.clone();
        snap.t = done as f64 * config.dt;
        let e = energy(&snap, &spec);
        energy_trace.push(EnergySample {
            t: snap.t,
            kinetic: e.kinetic,
            potential: e.potential,
            total: e.total(),
        });
        snapshots.push(snap);
    }
    Ok(Trajectory {
        config: *config,
        snapshots,
        energy_trace,
    })
}

/// Relative energy drift tolerated before the step is refined.
pub const ENERGY_DRIFT_LIMIT: f64 = 5e-4;

/// Runs the trajectory, halving `dt` (at most four times) while the relative
/// energy drift over the samples exceeds [`ENERGY_DRIFT_LIMIT`].
pub fn simulate_calibrated(config: &SimConfig, sample_times: &[f64]) -> Result<Trajectory> {
    let mut cfg = *config;
    let mut traj = simulate(&cfg, sample_times)?;
    for _ in 0..4 {
        if traj.max_relative_energy_drift() <= ENERGY_DRIFT_LIMIT {
            break;
        }
        cfg.dt *= 0.5;
        log::info!("energy drift too large, retrying with dt = {:e}", cfg.dt);
        traj = simulate(&cfg, sample_times)?;
    }
    Ok(traj)
}
