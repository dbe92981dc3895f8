//! Discretized averaging operator, its SVD and filtered regularized solves.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::meso::{for_nodes_near, MesoGrid};
use crate::windows::WindowKernel;

pub const DEFAULT_SIGMA_CUT: f64 = 1e-13;
pub const DEFAULT_RHS_TOL: f64 = 1e-13;

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

/// `A[k][m] = psi_eta(x_k - y_m) L / N'` on the periodic box.
pub fn assemble_matrix(kernel: &WindowKernel, grid: &MesoGrid) -> Result<DenseMatrix> {
    if (kernel.l - grid.l).abs() > 1e-12 * grid.l {
        return Err(Error::GridMismatch(format!(
            "kernel box {} differs from grid box {}",
            kernel.l, grid.l
        )));
    }
    let mut a = DenseMatrix::zeros(grid.b, grid.nf);
    let w = grid.fine_spacing();
    let r = kernel.support_radius();
    for k in 0..grid.b {
        let x = grid.coarse_node(k);
        let row = &mut a.data[k * grid.nf..(k + 1) * grid.nf];
        for_nodes_near(grid.nf, grid.l, x, r, |m| {
            row[m] = kernel.eval_periodic(x - grid.fine_node(m)) * w;
        });
    }
    Ok(a)
}

/// Retained part of a thin SVD.
///
/// `u` holds the left vectors `xi_j` (length `rows`) and `v` the right
/// vectors `xi_hat_j` (length `cols`), each stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub rows: usize,
    pub cols: usize,
    /// Retained singular values, descending and positive.
    pub sigma: Vec<f64>,
    /// Every singular value of the factorization, descending.
    pub full_spectrum: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn u_col(&self, j: usize) -> &[f64] {
        &self.u[j * self.rows..(j + 1) * self.rows]
    }

    pub fn v_col(&self, j: usize) -> &[f64] {
        &self.v[j * self.cols..(j + 1) * self.cols]
    }

    /// Number of singular values strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.full_spectrum
            .iter()
            .filter(|&&s| s > threshold)
            .count()
    }

    /// `sum_j sigma_j xi_j xi_hat_j^T` over the retained triplets.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.rows, self.cols);
        for (j, &s) in self.sigma.iter().enumerate() {
            let u = self.u_col(j);
            let v = self.v_col(j);
            for (i, &ui) in u.iter().enumerate() {
                let row = &mut a.data[i * self.cols..(i + 1) * self.cols];
                let c = s * ui;
                for (x, &vm) in row.iter_mut().zip(v) {
                    *x += c * vm;
                }
            }
        }
        a
    }
}

/// Thin SVD of `a`, dropping singular values below
/// `max(sigma_cut, 1e-15 sigma_1)`.
pub fn compute_svd(a: &DenseMatrix, sigma_cut: f64, label: &str) -> Result<SvdFactors> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Svd {
            config: label.to_string(),
            reason: "matrix has non-finite entries".into(),
        });
    }
    // own thread: the wide-vector kernels leave dirty upper register state
    // behind, which slows later scalar libm calls on the calling thread
    let svd = std::thread::scope(|s| s.spawn(|| a.to_faer().thin_svd()).join())
        .map_err(|_| Error::Svd {
            config: label.to_string(),
            reason: "factorization thread panicked".into(),
        })?
        .map_err(|e| Error::Svd {
            config: label.to_string(),
            reason: format!("{e:?}"),
        })?;
    let s = svd.S().column_vector();
    let full_spectrum: Vec<f64> = (0..s.nrows()).map(|j| s[j]).collect();
    let sigma_1 = full_spectrum.first().copied().unwrap_or(0.0);
    let cut = sigma_cut.max(1e-15 * sigma_1);
    let rank = full_spectrum
        .iter()
        .take_while(|&&x| x >= cut && x > 0.0)
        .count();
    let (u_mat, v_mat) = (svd.U(), svd.V());
    let mut u = Vec::with_capacity(rank * a.rows);
    let mut v = Vec::with_capacity(rank * a.cols);
    for j in 0..rank {
        u.extend((0..a.rows).map(|i| u_mat[(i, j)]));
        v.extend((0..a.cols).map(|m| v_mat[(m, j)]));
    }
    refine_left_vectors(a, &full_spectrum[..rank], &v, &mut u);
    Ok(SvdFactors {
        rows: a.rows,
        cols: a.cols,
        sigma: full_spectrum[..rank].to_vec(),
        full_spectrum,
        u,
        v,
    })
}

/// Singular values below this fraction of `sigma_1` keep their left vector.
const REFINE_RATIO: f64 = 1e-6;

/// Recomputes `u_j = A v_j / |A v_j|` for the well-separated part of the
/// spectrum and reorthonormalizes all left vectors in order of decreasing
/// `sigma`, so small-`sigma` left vectors carry no rounding-level component
/// along the dominant ones.
fn refine_left_vectors(a: &DenseMatrix, sigma: &[f64], v: &[f64], u: &mut [f64]) {
    let (rows, cols) = (a.rows, a.cols);
    let Some(&sigma_1) = sigma.first() else {
        return;
    };
    for (j, &s) in sigma.iter().enumerate() {
        if s < REFINE_RATIO * sigma_1 {
            break;
        }
        let vj = &v[j * cols..(j + 1) * cols];
        let col: Vec<f64> = (0..rows)
            .map(|i| a.row(i).iter().zip(vj).map(|(x, y)| x * y).sum())
            .collect();
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            u[j * rows..(j + 1) * rows]
                .iter_mut()
                .zip(&col)
                .for_each(|(dst, c)| *dst = c / norm);
        }
    }
    for j in 0..sigma.len() {
        let (done, rest) = u.split_at_mut(j * rows);
        let uj = &mut rest[..rows];
        for i in 0..j {
            let ui = &done[i * rows..(i + 1) * rows];
            let d: f64 = ui.iter().zip(uj.iter()).map(|(x, y)| x * y).sum();
            uj.iter_mut().zip(ui).for_each(|(y, x)| *y -= d * x);
        }
        let norm = uj.iter().map(|x| x * x).sum::<f64>().sqrt();
        uj.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Filter function replacing `1/sigma` by `phi(sigma)/sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum FilterSpec {
    Tsvd { sigma_cut: f64 },
    Tikhonov { alpha: f64 },
    Landweber { n: i64 },
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec::Tsvd {
            sigma_cut: DEFAULT_SIGMA_CUT,
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::Tsvd { sigma_cut } => write!(f, "tsvd({sigma_cut:e})"),
            FilterSpec::Tikhonov { alpha } => write!(f, "tikhonov({alpha:e})"),
            FilterSpec::Landweber { n } => write!(f, "landweber({n})"),
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::Tsvd { sigma_cut } if !(sigma_cut >= 0.0) => Err(Error::invalid(format!(
                "sigma_cut must be non-negative, got {sigma_cut}"
            ))),
            FilterSpec::Tikhonov { alpha } if !(alpha >= 0.0) => Err(Error::invalid(format!(
                "alpha must be non-negative, got {alpha}"
            ))),
            FilterSpec::Landweber { n } if n < 0 => Err(Error::invalid(format!(
                "iteration count must be non-negative, got {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// `phi(sigma)` without validation.
    #[inline]
    pub fn factor(&self, sigma: f64) -> f64 {
        match *self {
            FilterSpec::Tsvd { sigma_cut } => {
                if sigma >= sigma_cut {
                    1.0
                } else {
                    0.0
                }
            }
            FilterSpec::Tikhonov { alpha } => {
                let s2 = sigma * sigma;
                s2 / (s2 + alpha)
            }
            // expm1/ln_1p keep full relative accuracy where sigma^2 is below rounding of 1
            FilterSpec::Landweber { n } if sigma < 1.0 => {
                -((n + 1) as f64 * (-sigma * sigma).ln_1p()).exp_m1()
            }
            FilterSpec::Landweber { n } => 1.0 - (1.0 - sigma * sigma).powi((n + 1) as i32),
        }
    }

    /// `1 - phi(sigma)`, accurate where `phi` is close to one.
    #[inline]
    pub fn complement(&self, sigma: f64) -> f64 {
        match *self {
            FilterSpec::Tikhonov { alpha } => alpha / (sigma * sigma + alpha),
            FilterSpec::Landweber { n } if sigma < 1.0 => ((n + 1) as f64 * (-sigma * sigma).ln_1p()).exp(),
            _ => 1.0 - self.factor(sigma),
        }
    }

    /// Constant `c` with `phi(sigma) <= c sigma` on `(0, 1]`.
    pub fn growth_constant(&self) -> f64 {
        match *self {
            FilterSpec::Tsvd { sigma_cut } => 1.0 / sigma_cut,
            FilterSpec::Tikhonov { alpha } => 0.5 / alpha.sqrt(),
            FilterSpec::Landweber { n } => (n + 1) as f64,
        }
    }
}

pub fn filter_factor(spec: &FilterSpec, sigma: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.factor(sigma))
}

/// Coefficients `<b, xi_j>` with those below `rhs_tol` in magnitude zeroed.
pub fn spectral_filter_rhs(b: &[f64], svd: &SvdFactors, rhs_tol: f64) -> Result<Vec<f64>> {
    check_len(svd.rows, b.len())?;
    Ok((0..svd.rank())
        .map(|j| {
            let c: f64 = svd.u_col(j).iter().zip(b).map(|(u, x)| u * x).sum();
            if c.abs() < rhs_tol {
                0.0
            } else {
                c
            }
        })
        .collect())
}

/// `sum_j c_j phi(sigma_j)/sigma_j xi_hat_j` for given coefficients.
pub fn solve_from_coefficients(
    svd: &SvdFactors,
    coeffs: &[f64],
    filter: &FilterSpec,
) -> Result<Vec<f64>> {
    check_len(svd.rank(), coeffs.len())?;
    filter.validate()?;
    let mut x = vec![0.0; svd.cols];
    for (j, (&c, &s)) in coeffs.iter().zip(&svd.sigma).enumerate() {
        let w = c * filter.factor(s) / s;
        if w == 0.0 {
            continue;
        }
        for (xm, vm) in x.iter_mut().zip(svd.v_col(j)) {
            *xm += w * vm;
        }
    }
    Ok(x)
}

/// Averaging operator on a pair of grids with its cached factorization.
#[derive(Debug, Clone)]
pub struct ConvolutionSystem {
    pub kernel: WindowKernel,
    pub grid: MesoGrid,
    pub matrix: Arc<DenseMatrix>,
    pub svd: Arc<SvdFactors>,
    pub sigma_cut: f64,
    pub rhs_tol: f64,
    /// Filter used by the closure; TSVD at `sigma_cut` unless overridden.
    pub filter: FilterSpec,
}

impl ConvolutionSystem {
    pub fn new(kernel: WindowKernel, grid: MesoGrid, sigma_cut: f64, rhs_tol: f64) -> Result<Self> {
        let matrix = assemble_matrix(&kernel, &grid)?;
        let label = format!(
            "{} eta={} B={} N'={}",
            kernel.kind, kernel.eta, grid.b, grid.nf
        );
        let svd = compute_svd(&matrix, sigma_cut, &label)?;
        log::debug!("{label}: retained rank {}", svd.rank());
        Ok(ConvolutionSystem {
            kernel,
            grid,
            matrix: Arc::new(matrix),
            svd: Arc::new(svd),
            sigma_cut,
            rhs_tol,
            filter: FilterSpec::Tsvd { sigma_cut },
        })
    }

    pub fn with_filter(mut self, filter: FilterSpec) -> Result<Self> {
        filter.validate()?;
        self.filter = filter;
        Ok(self)
    }

    pub fn with_defaults(kernel: WindowKernel, grid: MesoGrid) -> Result<Self> {
        Self::new(kernel, grid, DEFAULT_SIGMA_CUT, DEFAULT_RHS_TOL)
    }

    /// `A x` for a fine-grid field `x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.mul_vec(x)
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }
}

pub fn regularized_solve(
    system: &ConvolutionSystem,
    b: &[f64],
    filter: &FilterSpec,
) -> Result<Vec<f64>> {
    let coeffs = spectral_filter_rhs(b, &system.svd, system.rhs_tol)?;
    solve_from_coefficients(&system.svd, &coeffs, filter)
}
