#![allow(dead_code)]

use mesoclosure::dynamics::{ChainState, PotentialSpec};
use mesoclosure::regularize::{
    compute_svd, solve_from_coefficients, spectral_filter_rhs, DenseMatrix, FilterSpec, SvdFactors,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` orthonormal vectors of length `dim` from Gram-Schmidt on Gaussian
/// draws (twice, to stay orthogonal to rounding).
pub fn orthonormal(dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    assert!(count <= dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(y, x)| *y -= d * x);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// `A = U diag(sigma) V^T` with prescribed singular values.
pub struct Synthetic {
    pub a: DenseMatrix,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl Synthetic {
    pub fn new(rows: usize, cols: usize, sigma: &[f64], seed: u64) -> Self {
        let mut r = rng(seed);
        let u = orthonormal(rows, sigma.len(), &mut r);
        let v = orthonormal(cols, sigma.len(), &mut r);
        let a = DenseMatrix::from_fn(rows, cols, |i, m| {
            sigma
                .iter()
                .enumerate()
                .map(|(k, s)| u[k][i] * s * v[k][m])
                .sum()
        });
        Synthetic {
            a,
            u,
            v,
            sigma: sigma.to_vec(),
        }
    }

    /// `sum_k c_k v_k`.
    pub fn combine(&self, c: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.a.cols];
        for (ck, vk) in c.iter().zip(&self.v) {
            x.iter_mut().zip(vk).for_each(|(xi, vi)| *xi += ck * vi);
        }
        x
    }

    pub fn svd(&self) -> SvdFactors {
        compute_svd(&self.a, 0.0, "synthetic").unwrap()
    }
}

pub fn logspace(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    let (a, b) = (hi.log10(), lo.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1).max(1) as f64))
        .collect()
}

/// Filtered solve without coefficient thresholding.
pub fn filtered_solve(svd: &SvdFactors, b: &[f64], filter: &FilterSpec) -> Vec<f64> {
    let c = spectral_filter_rhs(b, svd, 0.0).unwrap();
    solve_from_coefficients(svd, &c, filter).unwrap()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn p_norm(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Forces and shifted energy over every pair of particles, closest image,
/// with the potential written out independently.
pub fn all_pairs(state: &ChainState, spec: &PotentialSpec) -> (Vec<f64>, f64) {
    let n = state.q.len();
    let l = state.l;
    let h = l / n as f64;
    let sigma = h / 2f64.powf(1.0 / 6.0);
    let eps = spec.epsilon_well;
    let rc = spec.cutoff_factor * h;
    let u = |r: f64| 4.0 * eps * ((sigma / r).powi(12) - (sigma / r).powi(6));
    let du = |r: f64| {
        4.0 * eps * (-12.0 * sigma.powi(12) / r.powi(13) + 6.0 * sigma.powi(6) / r.powi(7))
    };
    let scale = 1.0 / n as f64;
    let mut f = vec![0.0; n];
    let mut e = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mut d = state.q[j] - state.q[i];
            d -= l * (d / l).round();
            let r = d.abs();
            if r > rc {
                continue;
            }
            e += scale * (u(r) - u(rc));
            // U'(r) dr/dq_j with dr/dq_j = sign(d)
            let fj = -scale * du(r) * d.signum();
            f[j] += fj;
            f[i] -= fj;
        }
    }
    (f, e)
}
