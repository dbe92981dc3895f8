//! Discrete Fourier diagnostics for coarse and fine fields.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::ChainState;
use crate::error::{check_len, Error, Result};
use crate::meso::{windowed_sum, MesoGrid};
use crate::windows::WindowKernel;

/// Relative amplitude mismatch tolerated by [`spectrum_report`].
pub const MATCH_TOLERANCE: f64 = 0.2;
/// Exact amplitudes below this are ignored when matching spectra.
pub const SIGNIFICANT_AMPLITUDE: f64 = 1e-10;

/// Amplitudes `|X_k| / n` for `k = 0..=n/2` of a real sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub n: usize,
    pub amplitude: Vec<f64>,
}

impl SpectrumTable {
    pub fn wavenumbers(&self) -> impl Iterator<Item = usize> {
        0..self.amplitude.len()
    }

    /// `sum_k |c_k|^2` over all `n` coefficients, reconstructed from the
    /// non-negative half.
    pub fn power(&self) -> f64 {
        let n = self.n;
        self.amplitude
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let mult = if k == 0 || (n % 2 == 0 && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                mult * a * a
            })
            .sum()
    }

    /// Number of wavenumbers with amplitude above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.amplitude.iter().filter(|&&a| a > threshold).count()
    }
}

/// Forward DFT normalized by `1/n`.
pub fn dft_complex(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if n == 0 {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

pub fn dft_field(values: &[f64]) -> Result<SpectrumTable> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least two samples, got {n}"
        )));
    }
    let c = dft_complex(values);
    Ok(SpectrumTable {
        n,
        amplitude: c[..=n / 2].iter().map(|z| z.norm()).collect(),
    })
}

/// Outcome of the low-pass identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowpassReport {
    /// `max_k |G_k - psi_d(k) g_sm(k) / L|` over `k = 0..=B/2`.
    pub deviation: f64,
    /// `deviation` divided by `max_k |G_k|` (zero when both sides vanish).
    pub relative: f64,
    /// `max_k |psi_d(k) - psi_c(k)| |g_sm(k)| / L`: how far the sampled kernel
    /// transform is from the continuum one.
    pub aliasing: f64,
}

/// `(L/B) sum_l psi_eta(l L/B) e^{-2 pi i k l / B}` for `k = 0..=B/2`.
pub fn sampled_kernel_transform(kernel: &WindowKernel, b: usize) -> Vec<Complex64> {
    let dx = kernel.l / b as f64;
    let samples: Vec<f64> = (0..b)
        .map(|l| kernel.eval_periodic(l as f64 * dx))
        .collect();
    dft_complex(&samples)[..=b / 2]
        .iter()
        .map(|c| c * kernel.l)
        .collect()
}

/// Continuum transform approximated on a grid `refine` times finer.
fn continuum_kernel_transform(kernel: &WindowKernel, b: usize, refine: usize) -> Vec<Complex64> {
    let fine = sampled_kernel_transform(kernel, b * refine);
    fine[..=b / 2].to_vec()
}

/// Compares the DFT of the windowed average `G(x_k) = sum_i g_i psi_eta(x_k - q_i)`
/// with the low-pass-filtered particle transform
/// `g_sm(k) = sum_i g_i e^{-2 pi i k (q_i - x_0) / L}`.
pub fn lowpass_identity_check(
    state: &ChainState,
    weights: &[f64],
    kernel: &WindowKernel,
    grid: &MesoGrid,
) -> Result<LowpassReport> {
    check_len(state.n(), weights.len())?;
    let b = grid.b;
    let l = grid.l;
    let x0 = grid.coarse_node(0);
    let g = windowed_sum(&state.q, weights, kernel, grid)?;
    let g_hat = dft_complex(&g);
    let psi_d = sampled_kernel_transform(kernel, b);
    let psi_c = continuum_kernel_transform(kernel, b, 16);

    let mut deviation = 0.0f64;
    let mut aliasing = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..=b / 2 {
        let mut sm = Complex64::new(0.0, 0.0);
        let w = -2.0 * std::f64::consts::PI * k as f64 / l;
        for (&q, &gi) in state.q.iter().zip(weights) {
            if gi != 0.0 {
                sm += gi * Complex64::from_polar(1.0, w * (q - x0));
            }
        }
        let predicted = psi_d[k] * sm / l;
        deviation = deviation.max((g_hat[k] - predicted).norm());
        aliasing = aliasing.max((psi_d[k] - psi_c[k]).norm() * sm.norm() / l);
        scale = scale.max(g_hat[k].norm());
    }
    Ok(LowpassReport {
        deviation,
        relative: if scale > 0.0 { deviation / scale } else { 0.0 },
        aliasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub exact: SpectrumTable,
    pub approx: SpectrumTable,
    /// Largest `k` such that every significant exact amplitude up to `k` is
    /// matched within [`MATCH_TOLERANCE`]; `None` if `k = 0` already fails.
    pub k_match: Option<usize>,
}

pub fn spectrum_report(exact: &[f64], approx: &[f64]) -> Result<SpectrumReport> {
    check_len(exact.len(), approx.len())?;
    let e = dft_field(exact)?;
    let a = dft_field(approx)?;
    let first_miss = e
        .amplitude
        .iter()
        .zip(&a.amplitude)
        .position(|(&x, &y)| x >= SIGNIFICANT_AMPLITUDE && (y - x).abs() > MATCH_TOLERANCE * x);
    let k_match = match first_miss {
        None => Some(e.amplitude.len() - 1),
        Some(0) => None,
        Some(k) => Some(k - 1),
    };
    Ok(SpectrumReport {
        exact: e,
        approx: a,
        k_match,
    })
}
