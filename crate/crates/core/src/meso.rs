//! Hardy-Murdoch averages, exact stresses and exact recoverable fields.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ChainState, PotentialSpec, NEIGHBOURS};
use crate::error::{check_len, Error, Result};
use crate::quadrature::gauss_legendre_16;
use crate::windows::{min_image, WindowKernel, WindowKind};

/// Coarse observation grid of `b` nodes and fine reconstruction grid of `nf`
/// nodes, both cell-centred on the periodic box `[0, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesoGrid {
    pub b: usize,
    pub nf: usize,
    pub l: f64,
}

impl MesoGrid {
    pub fn new(b: usize, nf: usize, l: f64) -> Result<Self> {
        if b < 2 {
            return Err(Error::invalid(format!(
                "coarse grid needs at least 2 nodes, got {b}"
            )));
        }
        if b > nf {
            return Err(Error::invalid(format!(
                "coarse grid ({b}) finer than fine grid ({nf})"
            )));
        }
        if !(l > 0.0) {
            return Err(Error::invalid(format!(
                "box length must be positive, got {l}"
            )));
        }
        Ok(MesoGrid { b, nf, l })
    }

    pub fn coarse_spacing(&self) -> f64 {
        self.l / self.b as f64
    }

    pub fn fine_spacing(&self) -> f64 {
        self.l / self.nf as f64
    }

    pub fn coarse_node(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.coarse_spacing()
    }

    pub fn fine_node(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.fine_spacing()
    }

    pub fn coarse_nodes(&self) -> Vec<f64> {
        (0..self.b).map(|k| self.coarse_node(k)).collect()
    }

    pub fn fine_nodes(&self) -> Vec<f64> {
        (0..self.nf).map(|m| self.fine_node(m)).collect()
    }
}

/// Calls `f(k)` once for every node `k` of an `n`-node cell-centred periodic
/// grid with spacing `l/n` lying within `radius` of `center`.
#[inline]
pub(crate) fn for_nodes_near(n: usize, l: f64, center: f64, radius: f64, mut f: impl FnMut(usize)) {
    let dx = l / n as f64;
    let lo = ((center - radius) / dx - 0.5).ceil() as i64;
    let hi = ((center + radius) / dx - 0.5).floor() as i64;
    if hi - lo + 1 >= n as i64 {
        (0..n).for_each(f);
        return;
    }
    for k in lo..=hi {
        f(k.rem_euclid(n as i64) as usize);
    }
}

/// Coarse-grid averages and exact stresses at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MesoFields {
    pub t: f64,
    pub density: Vec<f64>,
    pub momentum: Vec<f64>,
    pub velocity: Vec<f64>,
    pub stress_conv: Vec<f64>,
    pub stress_int: Vec<f64>,
    /// Nodes whose density fell below the floor; their velocity is zero.
    pub floored: usize,
}

/// Exact recoverable fields on the fine grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineFields {
    pub t: f64,
    pub j_exact: Vec<f64>,
    pub v_exact: Vec<f64>,
}

/// `sum_i w_i psi_eta(x_k - q_i)` at every coarse node.
pub fn windowed_sum(
    q: &[f64],
    w: &[f64],
    kernel: &WindowKernel,
    grid: &MesoGrid,
) -> Result<Vec<f64>> {
    check_len(q.len(), w.len())?;
    Ok(weighted_average(q, kernel, grid, |i| w[i]))
}

fn weighted_average(
    q: &[f64],
    kernel: &WindowKernel,
    grid: &MesoGrid,
    weight: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.b];
    let r = kernel.support_radius();
    let l = grid.l;
    for (i, &qi) in q.iter().enumerate() {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        for_nodes_near(grid.b, l, qi, r, |k| {
            out[k] += w * kernel.eval_periodic(grid.coarse_node(k) - qi);
        });
    }
    out
}

pub fn average_density(state: &ChainState, kernel: &WindowKernel, grid: &MesoGrid) -> Vec<f64> {
    let m = state.particle_mass();
    weighted_average(&state.q, kernel, grid, |_| m)
}

pub fn average_momentum(state: &ChainState, kernel: &WindowKernel, grid: &MesoGrid) -> Vec<f64> {
    let m = state.particle_mass();
    weighted_average(&state.q, kernel, grid, |i| m * state.v[i])
}

/// Density below which the average velocity is not formed.
pub fn density_floor(mass_total: f64, l: f64) -> f64 {
    1e-10 * mass_total / l
}

/// `momentum / density` where the density reaches `floor`, zero elsewhere;
/// also returns the number of floored nodes.
pub fn average_velocity(
    density: &[f64],
    momentum: &[f64],
    floor: f64,
) -> Result<(Vec<f64>, usize)> {
    if density.len() != momentum.len() {
        return Err(Error::LengthMismatch {
            expected: density.len(),
            got: momentum.len(),
        });
    }
    let mut floored = 0;
    let v = density
        .iter()
        .zip(momentum)
        .map(|(&rho, &p)| {
            if rho >= floor {
                p / rho
            } else {
                floored += 1;
                0.0
            }
        })
        .collect();
    Ok((v, floored))
}

/// `-sum_i m (v_i - vbar(x_k))^2 psi_eta(x_k - q_i)`.
pub fn convective_stress_exact(
    state: &ChainState,
    kernel: &WindowKernel,
    grid: &MesoGrid,
    velocity: &[f64],
) -> Result<Vec<f64>> {
    if velocity.len() != grid.b {
        return Err(Error::LengthMismatch {
            expected: grid.b,
            got: velocity.len(),
        });
    }
    let m = state.particle_mass();
    let r = kernel.support_radius();
    let l = grid.l;
    let mut out = vec![0.0; grid.b];
    for (&q, &v) in state.q.iter().zip(&state.v) {
        for_nodes_near(grid.b, l, q, r, |k| {
            let dv = v - velocity[k];
            out[k] -= m * dv * dv * kernel.eval_periodic(grid.coarse_node(k) - q);
        });
    }
    Ok(out)
}

/// `int_0^1 psi_eta(e - s d) ds` on the periodic box, where `e` is the
/// separation of the node from the first particle of the bond and `d` the
/// bond vector.
pub fn bond_integral(kernel: &WindowKernel, e: f64, d: f64) -> f64 {
    match kernel.kind {
        WindowKind::Characteristic => characteristic_overlap(kernel, e, d),
        WindowKind::Trapezoid => {
            let panels = 64;
            let h = 1.0 / panels as f64;
            (0..panels)
                .map(|p| kernel.eval_periodic(e - (p as f64 + 0.5) * h * d))
                .sum::<f64>()
                * h
        }
        _ => {
            let r = kernel.support_radius();
            if r + d.abs() < 0.5 * kernel.l && e.abs() <= 0.5 * kernel.l {
                // only the minimal image can reach the bond
                gauss_legendre_16().integrate(0.0, 1.0, |s| {
                    let x = e - s * d;
                    if x.abs() > r {
                        0.0
                    } else {
                        kernel.eval_scaled(x)
                    }
                })
            } else {
                gauss_legendre_16().integrate(0.0, 1.0, |s| kernel.eval_periodic(e - s * d))
            }
        }
    }
}

fn characteristic_overlap(kernel: &WindowKernel, e: f64, d: f64) -> f64 {
    let l = kernel.l;
    let a = 0.5 * kernel.eta * l;
    let height = 1.0 / (kernel.eta * l);
    if d == 0.0 {
        return kernel.eval_periodic(e);
    }
    let e = min_image(e, l);
    let (lo, hi) = if d > 0.0 { (e - d, e) } else { (e, e - d) };
    let overlap: f64 = [-l, 0.0, l]
        .iter()
        .map(|&shift| ((hi + shift).min(a) - (lo + shift).max(-a)).max(0.0))
        .sum();
    height * overlap / d.abs()
}

/// `sum_(i,j) f_ij (q_j - q_i) int_0^1 psi_eta(x_k - q_i - s (q_j - q_i)) ds`
/// over unordered interacting pairs.
pub fn interaction_stress_exact(
    state: &ChainState,
    kernel: &WindowKernel,
    grid: &MesoGrid,
    spec: &PotentialSpec,
) -> Vec<f64> {
    let n = state.n();
    let l = grid.l;
    let r = kernel.support_radius();
    let mut out = vec![0.0; grid.b];
    for i in 0..n {
        let qi = state.q[i];
        for k in 1..=NEIGHBOURS.min(n - 1) {
            let j = (i + k) % n;
            let d = min_image(state.q[j] - qi, l);
            let f = spec.pair_force(d);
            if f == 0.0 {
                continue;
            }
            let w = f * d;
            for_nodes_near(grid.b, l, qi + 0.5 * d, r + 0.5 * d.abs(), |node| {
                let e = min_image(grid.coarse_node(node) - qi, l);
                out[node] += w * bond_integral(kernel, e, d);
            });
        }
    }
    out
}

/// All averages and exact stresses of `state` on the coarse grid.
pub fn meso_fields(
    state: &ChainState,
    kernel: &WindowKernel,
    grid: &MesoGrid,
    spec: &PotentialSpec,
) -> Result<MesoFields> {
    check_box(state, grid)?;
    let density = average_density(state, kernel, grid);
    let momentum = average_momentum(state, kernel, grid);
    let (velocity, floored) = average_velocity(
        &density,
        &momentum,
        density_floor(state.mass_total, state.l),
    )?;
    if floored > 0 {
        log::warn!(
            "{floored} coarse nodes below the density floor at t = {}",
            state.t
        );
    }
    let stress_conv = convective_stress_exact(state, kernel, grid, &velocity)?;
    let stress_int = interaction_stress_exact(state, kernel, grid, spec);
    Ok(MesoFields {
        t: state.t,
        density,
        momentum,
        velocity,
        stress_conv,
        stress_int,
        floored,
    })
}

fn check_box(state: &ChainState, grid: &MesoGrid) -> Result<()> {
    if (state.l - grid.l).abs() > 1e-12 * grid.l {
        return Err(Error::GridMismatch(format!(
            "state box {} differs from grid box {}",
            state.l, grid.l
        )));
    }
    Ok(())
}

/// Ring order starting from the particle with the smallest wrapped position,
/// together with the gaps `q_{i+1} - q_i` (wrapped into `(0, l)`).
pub(crate) fn ring_gaps(state: &ChainState) -> Result<(usize, Vec<f64>)> {
    let n = state.n();
    let l = state.l;
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let j = (i + 1) % n;
        let g = (state.q[j] - state.q[i]).rem_euclid(l);
        if !(g > 0.0) || g >= 0.5 * l {
            return Err(Error::Ordering { i, j });
        }
        gaps.push(g);
    }
    let total: f64 = gaps.iter().sum();
    if (total - l).abs() > 1e-9 * l {
        let i = (0..n)
            .max_by(|&a, &b| gaps[a].total_cmp(&gaps[b]))
            .unwrap_or(0);
        return Err(Error::Ordering { i, j: (i + 1) % n });
    }
    let start = (0..n)
        .min_by(|&a, &b| state.q[a].total_cmp(&state.q[b]))
        .unwrap_or(0);
    Ok((start, gaps))
}

/// `J = dx / gap` and piecewise-linear velocity on the fine grid.
pub fn exact_recoverables(state: &ChainState, grid: &MesoGrid) -> Result<FineFields> {
    check_box(state, grid)?;
    let n = state.n();
    let l = state.l;
    let dx = l / n as f64;
    let (start, gaps) = ring_gaps(state)?;

    let mut j_exact = vec![0.0; grid.nf];
    let mut v_exact = vec![0.0; grid.nf];
    // particle `cur` at unwrapped position `left`; the gap to its successor
    // covers [left, left + gaps[cur]); begin one gap before the first particle
    let mut cur = (start + n - 1) % n;
    let mut left = state.q[start] - gaps[cur];
    for m in 0..grid.nf {
        let y = grid.fine_node(m);
        while y >= left + gaps[cur] {
            left += gaps[cur];
            cur = (cur + 1) % n;
        }
        let next = (cur + 1) % n;
        let g = gaps[cur];
        let s = (y - left) / g;
        j_exact[m] = dx / g;
        v_exact[m] = (1.0 - s) * state.v[cur] + s * state.v[next];
    }
    Ok(FineFields {
        t: state.t,
        j_exact,
        v_exact,
    })
}

/// `max_k |(rho(t+dt) - rho(t))/dt + D_x p_mid|` with `p_mid` the mean of the
/// two momenta and `D_x` the centred periodic difference.
pub fn mass_balance_residual(prev: &MesoFields, next: &MesoFields, grid: &MesoGrid) -> Result<f64> {
    for f in [prev, next] {
        if f.density.len() != grid.b || f.momentum.len() != grid.b {
            return Err(Error::GridMismatch(format!(
                "fields have {} nodes, grid has {}",
                f.density.len(),
                grid.b
            )));
        }
    }
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!(
            "fields must be time-ordered, got dt = {dt}"
        )));
    }
    let b = grid.b;
    let h = grid.coarse_spacing();
    let p: Vec<f64> = prev
        .momentum
        .iter()
        .zip(&next.momentum)
        .map(|(a, c)| 0.5 * (a + c))
        .collect();
    Ok((0..b)
        .map(|k| {
            let dp = (p[(k + 1) % b] - p[(k + b - 1) % b]) / (2.0 * h);
            ((next.density[k] - prev.density[k]) / dt + dp).abs()
        })
        .fold(0.0, f64::max))
}
