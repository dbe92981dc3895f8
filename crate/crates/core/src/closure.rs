//! Closure by deconvolution: fine-scale Jacobian and velocity from the
//! averages, reconstructed particles, and stresses of the reinserted chain.

use serde::Serialize;

use crate::dynamics::{ChainState, PotentialSpec};
use crate::error::{check_len, Error, Result};
use crate::meso::{self, MesoFields, MesoGrid};
use crate::regularize::{regularized_solve, ConvolutionSystem};
use crate::windows::{min_image, WindowKernel};

/// Lower bound applied to the reconstructed Jacobian.
pub const JACOBIAN_FLOOR: f64 = 1e-6;
/// Largest tolerated fraction of clamped nodes.
pub const MAX_CLAMPED_FRACTION: f64 = 0.1;

/// Fine-grid field together with the number of nodes raised to the floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clamped {
    pub values: Vec<f64>,
    pub clamped: usize,
}

fn clamp_below(mut values: Vec<f64>, floor: f64) -> Result<Clamped> {
    let mut clamped = 0;
    for x in &mut values {
        if !(*x >= floor) {
            *x = floor;
            clamped += 1;
        }
    }
    let total = values.len();
    if clamped as f64 > MAX_CLAMPED_FRACTION * total as f64 {
        return Err(Error::Degenerate { clamped, total });
    }
    Ok(Clamped { values, clamped })
}

/// Regularized inverse of the averaging operator with the system's filter.
pub fn deconvolve(system: &ConvolutionSystem, field: &[f64]) -> Result<Vec<f64>> {
    regularized_solve(system, field, &system.filter)
}

/// `J = (L/M) Q[rho]`, floored at [`JACOBIAN_FLOOR`].
pub fn reconstruct_jacobian(
    system: &ConvolutionSystem,
    density: &[f64],
    mass_total: f64,
) -> Result<Clamped> {
    let scale = system.grid.l / mass_total;
    let j: Vec<f64> = deconvolve(system, density)?
        .into_iter()
        .map(|x| scale * x)
        .collect();
    clamp_below(j, JACOBIAN_FLOOR)
}

/// `Q[rho v] / Q[rho]` with the denominator floored like the Jacobian.
pub fn reconstruct_velocity(
    system: &ConvolutionSystem,
    density: &[f64],
    momentum: &[f64],
    mass_total: f64,
) -> Result<Clamped> {
    check_len(density.len(), momentum.len())?;
    let floor = JACOBIAN_FLOOR * mass_total / system.grid.l;
    let den = clamp_below(deconvolve(system, density)?, floor)?;
    let num = deconvolve(system, momentum)?;
    Ok(Clamped {
        values: num.iter().zip(&den.values).map(|(p, r)| p / r).collect(),
        clamped: den.clamped,
    })
}

/// Positions solving `C(q_i) = (i - 1/2) C(L) / N`, where `C` is the
/// trapezoidal cumulative integral of `j` from `y = 0`.
///
/// `j` lives on the cell-centred fine grid; its value at `0` and `L` is the
/// periodic average of the two end nodes.
pub fn positions_from_jacobian(j: &[f64], n: usize, l: f64) -> Result<Vec<f64>> {
    let nf = j.len();
    if nf < 2 || n == 0 {
        return Err(Error::invalid(format!(
            "need a fine field and particles, got {nf} and {n}"
        )));
    }
    if let Some(m) = j.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Precondition(format!(
            "jacobian not positive at node {m}"
        )));
    }
    let h = l / nf as f64;
    let edge = 0.5 * (j[0] + j[nf - 1]);

    let mut knots = Vec::with_capacity(nf + 2);
    let mut cum = Vec::with_capacity(nf + 2);
    knots.push(0.0);
    cum.push(0.0);
    let mut prev_y = 0.0;
    let mut prev_j = edge;
    let mut c = 0.0;
    for (m, &jm) in j.iter().enumerate() {
        let y = (m as f64 + 0.5) * h;
        c += 0.5 * (prev_j + jm) * (y - prev_y);
        knots.push(y);
        cum.push(c);
        prev_y = y;
        prev_j = jm;
    }
    c += 0.5 * (prev_j + edge) * (l - prev_y);
    knots.push(l);
    cum.push(c);
    if cum.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Internal(
            "cumulative jacobian is not increasing".into(),
        ));
    }

    let total = c;
    let mut seg = 0;
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let target = (i as f64 + 0.5) * total / n as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let s = (target - cum[seg]) / (cum[seg + 1] - cum[seg]);
        let y = knots[seg] + s * (knots[seg + 1] - knots[seg]);
        q.push(y.rem_euclid(l));
    }
    Ok(q)
}

/// Periodic linear interpolation of a cell-centred fine field at `q`.
pub fn interpolate_fine(field: &[f64], l: f64, x: f64) -> f64 {
    let nf = field.len();
    let s = x.rem_euclid(l) / l * nf as f64 - 0.5;
    let base = s.floor();
    let frac = s - base;
    let m0 = (base as i64).rem_euclid(nf as i64) as usize;
    let m1 = (m0 + 1) % nf;
    (1.0 - frac) * field[m0] + frac * field[m1]
}

pub fn particle_velocities(v_approx: &[f64], q_approx: &[f64], l: f64) -> Vec<f64> {
    q_approx
        .iter()
        .map(|&q| interpolate_fine(v_approx, l, q))
        .collect()
}

/// Exact-stress operators applied to a reconstructed chain, with the average
/// velocity recomputed from the reconstructed particles.
pub fn approximate_stresses(
    q_approx: &[f64],
    v_particles: &[f64],
    mass_total: f64,
    kernel: &WindowKernel,
    grid: &MesoGrid,
    spec: &PotentialSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(q_approx.len(), v_particles.len())?;
    let state = ChainState {
        t: 0.0,
        l: grid.l,
        q: q_approx.to_vec(),
        v: v_particles.to_vec(),
        mass_total,
    };
    let fields = meso::meso_fields(&state, kernel, grid, spec)?;
    Ok((fields.stress_conv, fields.stress_int))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructedFields {
    pub t: f64,
    pub j_approx: Vec<f64>,
    pub v_approx: Vec<f64>,
    pub q_approx: Vec<f64>,
    pub v_particles: Vec<f64>,
    pub clamped_jacobian: usize,
    pub clamped_density: usize,
}

/// Reconstruction and approximate stresses from one set of averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Closure {
    pub fields: ReconstructedFields,
    pub stress_conv: Vec<f64>,
    pub stress_int: Vec<f64>,
}

/// Runs the whole closure for `n` particles of total mass `mass_total`.
pub fn close(
    system: &ConvolutionSystem,
    averages: &MesoFields,
    n: usize,
    mass_total: f64,
    spec: &PotentialSpec,
) -> Result<Closure> {
    let l = system.grid.l;
    let j = reconstruct_jacobian(system, &averages.density, mass_total)?;
    let v = reconstruct_velocity(system, &averages.density, &averages.momentum, mass_total)?;
    let q_approx = positions_from_jacobian(&j.values, n, l)?;
    let v_particles = particle_velocities(&v.values, &q_approx, l);
    let (stress_conv, stress_int) = approximate_stresses(
        &q_approx,
        &v_particles,
        mass_total,
        &system.kernel,
        &system.grid,
        spec,
    )?;
    Ok(Closure {
        fields: ReconstructedFields {
            t: averages.t,
            j_approx: j.values,
            v_approx: v.values,
            q_approx,
            v_particles,
            clamped_jacobian: j.clamped,
            clamped_density: v.clamped,
        },
        stress_conv,
        stress_int,
    })
}

/// Largest position mismatch after the best circular relabelling and the
/// best rigid translation of the reconstructed positions.
pub fn aligned_position_error(exact: &[f64], approx: &[f64], l: f64) -> Result<f64> {
    check_len(exact.len(), approx.len())?;
    let n = exact.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sorted = |x: &[f64]| {
        let mut s: Vec<f64> = x.iter().map(|v| v.rem_euclid(l)).collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let (e, a) = (sorted(exact), sorted(approx));
    let nearest = (0..n)
        .min_by(|&i, &j| {
            min_image(a[i] - e[0], l)
                .abs()
                .total_cmp(&min_image(a[j] - e[0], l).abs())
        })
        .unwrap_or(0) as i64;
    // the l-infinity optimal translation centres the spread of the offsets
    let spread = |shift: i64| {
        let d0 = min_image(a[shift.rem_euclid(n as i64) as usize] - e[0], l);
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let k = (i as i64 + shift).rem_euclid(n as i64) as usize;
            let d = d0 + min_image(a[k] - e[i] - d0, l);
            (lo.min(d), hi.max(d))
        });
        0.5 * (hi - lo)
    };
    Ok((nearest - 2..=nearest + 2)
        .map(spread)
        .fold(f64::INFINITY, f64::min))
}
