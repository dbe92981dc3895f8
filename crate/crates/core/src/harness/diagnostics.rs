use serde::Serialize;

use super::{relative_error, RunDetail};
use crate::bounds::{
    filtered_error_bound, holder_error_bound, interaction_stress_bound, shell_lower_radius,
    BoundInputs,
};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::meso::ring_gaps;
use crate::regularize::{solve_from_coefficients, spectral_filter_rhs, ConvolutionSystem};
use crate::spectral::{spectrum_report, SpectrumReport, SIGNIFICANT_AMPLITUDE};

/// Amplitudes of one field at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectraRow {
    pub t: f64,
    pub field: &'static str,
    pub k: usize,
    pub exact: f64,
    pub approx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectraSummary {
    pub t: f64,
    pub field: &'static str,
    pub k_match: Option<usize>,
    /// Every exact amplitude above the significance threshold is matched.
    pub all_significant_matched: bool,
    pub significant_modes: usize,
}

fn summarize(t: f64, field: &'static str, r: &SpectrumReport) -> SpectraSummary {
    SpectraSummary {
        t,
        field,
        k_match: r.k_match,
        all_significant_matched: r.k_match == Some(r.exact.amplitude.len() - 1),
        significant_modes: r.exact.count_above(SIGNIFICANT_AMPLITUDE),
    }
}

/// Spectra of `J` (fine grid) and `T_int` (coarse grid), exact against
/// reconstructed, at every sample time.
pub fn spectra(detail: &RunDetail) -> Result<(Vec<SpectraRow>, Vec<SpectraSummary>)> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for ((meso, fine), closure) in detail.meso.iter().zip(&detail.fine).zip(&detail.closures) {
        let t = meso.t;
        let pairs: [(&'static str, &[f64], &[f64]); 3] = [
            ("J", &fine.j_exact, &closure.fields.j_approx),
            ("v", &fine.v_exact, &closure.fields.v_approx),
            ("Tint", &meso.stress_int, &closure.stress_int),
        ];
        for (field, exact, approx) in pairs {
            let r = spectrum_report(exact, approx)?;
            rows.extend(r.exact.wavenumbers().map(|k| SpectraRow {
                t,
                field,
                k,
                exact: r.exact.amplitude[k],
                approx: r.approx.amplitude[k],
            }));
            summary.push(summarize(t, field, &r));
        }
    }
    Ok((rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremBoundRow {
    pub t: f64,
    pub l1_error: f64,
    pub bound: f64,
    pub observed: f64,
    /// `bound / observed`, infinite when nothing is observed.
    pub ratio: f64,
}

/// Interaction-stress bound with `M = max J` and the shell starting at the
/// smallest pair distance of the whole trajectory.
pub fn theorem_bound_trace(
    traj: &Trajectory,
    detail: &RunDetail,
    system: &ConvolutionSystem,
) -> Result<Vec<TheoremBoundRow>> {
    let spec = traj.config.potential();
    let mut r_min = f64::INFINITY;
    for s in &traj.snapshots {
        let (_, gaps) = ring_gaps(s)?;
        r_min = gaps.iter().fold(r_min, |m, &g| m.min(g));
    }
    let r_min = shell_lower_radius(r_min);
    let m_bound = detail
        .fine
        .iter()
        .flat_map(|f| f.j_exact.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut rows = Vec::with_capacity(detail.fine.len());
    for ((meso, fine), closure) in detail.meso.iter().zip(&detail.fine).zip(&detail.closures) {
        let b = interaction_stress_bound(
            &fine.j_exact,
            &closure.fields.j_approx,
            &system.kernel,
            &spec,
            m_bound,
            r_min,
        )?;
        let observed = relative_error(&meso.stress_int, &closure.stress_int)?.abs;
        rows.push(TheoremBoundRow {
            t: meso.t,
            l1_error: b.l1_error,
            bound: b.bound,
            observed,
            ratio: if observed > 0.0 {
                b.bound / observed
            } else {
                f64::INFINITY
            },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredBoundRow {
    pub t: f64,
    pub observed: f64,
    pub filtered_bound: f64,
    pub holder_bound: f64,
}

/// Filtered-solve bounds for the Jacobian reconstruction.
///
/// `x` is the part of `J_exact` spanned by the retained right singular
/// vectors and the perturbation is `(L/M) density - A x`; the observed error
/// is that of the filtered solve without coefficient thresholding.
pub fn filtered_bound_trace(
    traj: &Trajectory,
    detail: &RunDetail,
    system: &ConvolutionSystem,
    p: f64,
    q: f64,
) -> Result<Vec<FilteredBoundRow>> {
    let svd = &system.svd;
    let scale = system.grid.l / traj.config.mass_total;
    let mut rows = Vec::with_capacity(detail.fine.len());
    for (meso, fine) in detail.meso.iter().zip(&detail.fine) {
        let coeffs: Vec<f64> = (0..svd.rank())
            .map(|j| {
                svd.v_col(j)
                    .iter()
                    .zip(&fine.j_exact)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let mut x = vec![0.0; svd.cols];
        for (j, c) in coeffs.iter().enumerate() {
            x.iter_mut()
                .zip(svd.v_col(j))
                .for_each(|(xi, v)| *xi += c * v);
        }
        let b: Vec<f64> = meso.density.iter().map(|d| d * scale).collect();
        let ax = system.apply(&x)?;
        let delta: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        let solved =
            solve_from_coefficients(svd, &spectral_filter_rhs(&b, svd, 0.0)?, &system.filter)?;
        let err: Vec<f64> = x.iter().zip(&solved).map(|(u, v)| u - v).collect();
        let observed = if p == 1.0 {
            err.iter().map(|e| e.abs()).sum()
        } else {
            err.iter()
                .map(|e| e.abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        };
        let inputs = BoundInputs {
            svd,
            filter: system.filter,
            p,
            q,
            x: &x,
            delta: &delta,
        };
        rows.push(FilteredBoundRow {
            t: meso.t,
            observed,
            filtered_bound: filtered_error_bound(&inputs)?,
            holder_bound: holder_error_bound(&inputs)?,
        });
    }
    Ok(rows)
}
