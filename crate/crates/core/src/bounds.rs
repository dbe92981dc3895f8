//! Analytical error bounds for filtered solves and for the interaction
//! stress of the closure.

use serde::Serialize;

use crate::dynamics::PotentialSpec;
use crate::error::{check_len, Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::regularize::{FilterSpec, SvdFactors};
use crate::windows::WindowKernel;

/// Continuous, non-increasing `f` with `f(0) = 1`, `f(j) = sigma_j`,
/// linear in `log f` between knots and exponential beyond the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularInterpolant {
    log_knots: Vec<f64>,
    tail_slope: f64,
}

impl SingularInterpolant {
    pub fn new(sigma: &[f64]) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::invalid("need at least one singular value"));
        }
        let mut prev = 1.0;
        for (j, &s) in sigma.iter().enumerate() {
            if !(s > 0.0 && s <= prev * (1.0 + 1e-12)) {
                return Err(Error::invalid(format!(
                    "singular value {} = {s} is not in (0, {prev}]",
                    j + 1
                )));
            }
            prev = s;
        }
        let mut log_knots = Vec::with_capacity(sigma.len() + 1);
        log_knots.push(0.0);
        log_knots.extend(sigma.iter().map(|s| s.ln().min(0.0)));
        // keep knots non-increasing after clipping sigma_1 to 1
        for j in 1..log_knots.len() {
            log_knots[j] = log_knots[j].min(log_knots[j - 1]);
        }
        let d = sigma.len();
        let slope = log_knots[d] - log_knots[d - 1];
        let tail_slope = if slope < 0.0 { slope } else { -1.0 };
        Ok(SingularInterpolant {
            log_knots,
            tail_slope,
        })
    }

    /// Number of singular values `D`.
    pub fn terms(&self) -> usize {
        self.log_knots.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let d = self.terms();
        if t >= d as f64 {
            return (self.log_knots[d] + self.tail_slope * (t - d as f64)).exp();
        }
        let t = t.max(0.0);
        let j = t.floor() as usize;
        let s = t - j as f64;
        ((1.0 - s) * self.log_knots[j] + s * self.log_knots[j + 1]).exp()
    }
}

/// `(int_0^{D+1} |g(f(t))|^p dt)^(1/p)` by adaptive Simpson on unit pieces.
fn lp_norm_on_interpolant(f: &SingularInterpolant, p: f64, g: impl Fn(f64) -> f64) -> f64 {
    let d = f.terms();
    let h = |t: f64| g(f.eval(t)).abs().powf(p);
    let scale = (0..=4 * (d + 1))
        .map(|i| h(0.25 * i as f64))
        .fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let total: f64 = (0..=d)
        .map(|j| adaptive_simpson(j as f64, j as f64 + 1.0, tol, &h))
        .sum();
    total.powf(1.0 / p)
}

fn p_norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return x.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale
        * x.iter()
            .map(|v| (v.abs() / scale).powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
}

/// Inputs of the filtered-solve bounds.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub svd: &'a SvdFactors,
    pub filter: FilterSpec,
    /// Norm exponent of the error, `p >= 1`.
    pub p: f64,
    /// Hoelder exponent, `q >= 1`; only used by [`holder_error_bound`].
    pub q: f64,
    /// Exact solution.
    pub x: &'a [f64],
    /// Data perturbation `b - b_delta`.
    pub delta: &'a [f64],
}

impl BoundInputs<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.q >= 1.0) {
            return Err(Error::invalid(format!(
                "need p >= 1 and q >= 1, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        check_len(self.svd.cols, self.x.len())?;
        check_len(self.svd.rows, self.delta.len())?;
        self.filter.validate()?;
        if self.svd.rank() == 0 {
            return Err(Error::invalid("factorization retains no singular values"));
        }
        Ok(())
    }

    fn max_vector_norms(&self, s: f64) -> (f64, f64) {
        let d = self.svd.rank();
        let right = (0..d)
            .map(|j| p_norm(self.svd.v_col(j), s))
            .fold(0.0, f64::max);
        let left = (0..d)
            .map(|j| p_norm(self.svd.u_col(j), s))
            .fold(0.0, f64::max);
        (right, left)
    }
}

/// `C_1 = D^{max(0, 1 - 1/p)} max_j |xi_hat_j|_p max(max_j |xi_hat_j|_1, max_j |xi_j|_1)`.
///
/// The last factor bounds `|<x, xi_hat_j>| / |x|_inf` and
/// `|<b - b_delta, xi_j>| / |b - b_delta|_inf`.
pub fn constant_c1(inputs: &BoundInputs) -> f64 {
    let d = inputs.svd.rank() as f64;
    let p = inputs.p;
    let (vp, _) = inputs.max_vector_norms(p);
    let (v1, u1) = inputs.max_vector_norms(1.0);
    d.powf((1.0 - 1.0 / p).max(0.0)) * vp * v1.max(u1)
}

/// `C_2 = D^{1 - 1/(p q')} max_j |xi_hat_j|_p max(max_j |xi_hat_j|_{s'}, max_j |xi_j|_{s'})`
/// with `s = p q` and `s'` its conjugate exponent.
pub fn constant_c2(inputs: &BoundInputs) -> f64 {
    let d = inputs.svd.rank() as f64;
    let (p, q) = (inputs.p, inputs.q);
    let s = p * q;
    let s_conj = if s > 1.0 {
        s / (s - 1.0)
    } else {
        f64::INFINITY
    };
    let inner = if q > 1.0 { (q - 1.0) / (p * q) } else { 0.0 };
    let (vp, _) = inputs.max_vector_norms(p);
    let (vs, us) = inputs.max_vector_norms(s_conj);
    d.powf(1.0 - inner) * vp * vs.max(us)
}

fn finite_or_infinite(value: f64, what: &str) -> f64 {
    if value.is_finite() {
        value
    } else {
        log::warn!("{what}: integrand is unbounded for this filter");
        f64::INFINITY
    }
}

/// `C_1 (|x|_inf |1 - phi(f)|_{L^p} + |b - b_delta|_inf |phi(f)/f|_{L^p})`
/// over `(0, D + 1)`.
pub fn filtered_error_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let f = SingularInterpolant::new(&inputs.svd.sigma)?;
    let filter = inputs.filter;
    let p = inputs.p;
    let x_inf = p_norm(inputs.x, f64::INFINITY);
    let delta_inf = p_norm(inputs.delta, f64::INFINITY);
    let bias = if x_inf > 0.0 {
        x_inf * lp_norm_on_interpolant(&f, p, |s| filter.complement(s))
    } else {
        0.0
    };
    let noise = if delta_inf > 0.0 {
        delta_inf * lp_norm_on_interpolant(&f, p, |s| filter.factor(s) / s)
    } else {
        0.0
    };
    Ok(finite_or_infinite(
        constant_c1(inputs) * (bias + noise),
        "filtered bound",
    ))
}

/// `C_2 (|x|_{pq} |1 - phi(f)|_{L^{pq'}} + |b - b_delta|_{pq} |phi(f)/f|_{L^{pq'}})`.
pub fn holder_error_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if !(inputs.q > 1.0) {
        return Err(Error::invalid(format!(
            "Hoelder exponent must exceed 1, got {}",
            inputs.q
        )));
    }
    let f = SingularInterpolant::new(&inputs.svd.sigma)?;
    let filter = inputs.filter;
    let (p, q) = (inputs.p, inputs.q);
    let r = p * q / (q - 1.0);
    let x_norm = p_norm(inputs.x, p * q);
    let delta_norm = p_norm(inputs.delta, p * q);
    let bias = if x_norm > 0.0 {
        x_norm * lp_norm_on_interpolant(&f, r, |s| filter.complement(s))
    } else {
        0.0
    };
    let noise = if delta_norm > 0.0 {
        delta_norm * lp_norm_on_interpolant(&f, r, |s| filter.factor(s) / s)
    } else {
        0.0
    };
    Ok(finite_or_infinite(
        constant_c2(inputs) * (bias + noise),
        "Hoelder bound",
    ))
}

/// `sup |U'(r) r|` over `10^5` equally spaced points of `[r_min, r_max]`.
pub fn phi_sup(spec: &PotentialSpec, r_min: f64, r_max: f64) -> Result<f64> {
    if !(r_min > 0.0 && r_min <= r_max) {
        return Err(Error::invalid(format!(
            "need 0 < r_min <= r_max, got [{r_min}, {r_max}]"
        )));
    }
    let samples = 100_000;
    Ok((0..samples)
        .map(|i| r_min + (r_max - r_min) * i as f64 / (samples - 1) as f64)
        .map(|r| (spec.derivative(r) * r).abs())
        .fold(0.0, f64::max))
}

/// Shell lower radius: the smallest pair distance seen, lowered by 5%.
pub fn shell_lower_radius(min_distance: f64) -> f64 {
    0.95 * min_distance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBound {
    pub bound: f64,
    /// Discrete `L^1` norm `(L/N') sum |J - Q|`.
    pub l1_error: f64,
    pub kernel_sup: f64,
    pub phi_sup: f64,
}

/// `sup|psi_eta| sup|Phi| (2 M |J - Q|_1 + |J - Q|_1^2)` with `Phi` taken
/// over the shell `[r_min, cutoff]`.
pub fn interaction_stress_bound(
    j: &[f64],
    q: &[f64],
    kernel: &WindowKernel,
    spec: &PotentialSpec,
    m_bound: f64,
    r_min: f64,
) -> Result<TheoremBound> {
    check_len(j.len(), q.len())?;
    let j_max = j.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !(m_bound >= j_max) {
        return Err(Error::Precondition(format!(
            "bound {m_bound} is below max J = {j_max}"
        )));
    }
    let h = kernel.l / j.len() as f64;
    let l1_error = h * j.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let kernel_sup = kernel.peak();
    let phi = phi_sup(spec, r_min.min(spec.cutoff()), spec.cutoff())?;
    Ok(TheoremBound {
        bound: kernel_sup * phi * (2.0 * m_bound * l1_error + l1_error * l1_error),
        l1_error,
        kernel_sup,
        phi_sup: phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::{
        compute_svd, solve_from_coefficients, spectral_filter_rhs, DenseMatrix,
    };
    use crate::windows::WindowKind;

    /// 5x5 system `U diag(sigma) V^T` with rotations built from Householder
    /// reflections.
    fn synthetic(sigma: &[f64]) -> (DenseMatrix, SvdFactors) {
        let n = sigma.len();
        let reflect = |seed: f64| {
            let v: Vec<f64> = (0..n).map(|i| (seed + i as f64 * 1.7).sin()).collect();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            DenseMatrix::from_fn(n, n, |i, j| {
                (if i == j { 1.0 } else { 0.0 }) - 2.0 * v[i] * v[j] / vv
            })
        };
        let (u, v) = (reflect(0.3), reflect(1.1));
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| u.get(i, k) * sigma[k] * v.get(j, k)).sum()
        });
        let svd = compute_svd(&a, 0.0, "synthetic").unwrap();
        (a, svd)
    }

    fn solve(svd: &SvdFactors, b: &[f64], filter: FilterSpec) -> Vec<f64> {
        let c = spectral_filter_rhs(b, svd, 0.0).unwrap();
        solve_from_coefficients(svd, &c, &filter).unwrap()
    }

    #[test]
    fn interpolant_matches_knots() {
        let sigma = [0.9, 0.5, 0.1, 1e-3];
        let f = SingularInterpolant::new(&sigma).unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        for (j, s) in sigma.iter().enumerate() {
            assert!((f.eval(j as f64 + 1.0) - s).abs() < 1e-15);
        }
        let mut prev = f64::INFINITY;
        for i in 0..=500 {
            let v = f.eval(i as f64 * 0.01);
            assert!(v < prev);
            prev = v;
        }
        assert!(SingularInterpolant::new(&[0.5, 0.7]).is_err());
    }

    #[test]
    fn exact_data_and_full_tsvd_give_zero() {
        let (_, svd) = synthetic(&[0.9, 0.5, 0.1, 0.01, 1e-3]);
        let inputs = BoundInputs {
            svd: &svd,
            filter: FilterSpec::Tsvd { sigma_cut: 1e-13 },
            p: 2.0,
            q: 2.0,
            x: &[1.0, -2.0, 0.5, 0.0, 3.0],
            delta: &[0.0; 5],
        };
        assert_eq!(filtered_error_bound(&inputs).unwrap(), 0.0);
        let zero = BoundInputs {
            x: &[0.0; 5],
            ..inputs
        };
        assert_eq!(holder_error_bound(&zero).unwrap(), 0.0);
    }

    #[test]
    fn tikhonov_noise_term_grows_as_alpha_shrinks() {
        let (_, svd) = synthetic(&[0.9, 0.3, 1e-2, 1e-4, 1e-6]);
        let mut prev = 0.0;
        for k in 2..=8 {
            let inputs = BoundInputs {
                svd: &svd,
                filter: FilterSpec::Tikhonov {
                    alpha: 10f64.powi(-k),
                },
                p: 2.0,
                q: 2.0,
                x: &[0.0; 5],
                delta: &[1e-3; 5],
            };
            let b = filtered_error_bound(&inputs).unwrap();
            assert!(b > prev, "alpha = 1e-{k}");
            prev = b;
        }
    }

    #[test]
    fn bounds_dominate_synthetic_errors() {
        let sigma = [0.95, 0.4, 0.05, 3e-3, 2e-4];
        let (a, svd) = synthetic(&sigma);
        let x = [0.7, -1.2, 0.4, 2.0, -0.3];
        let b = a.mul_vec(&x).unwrap();
        for delta_scale in [0.0, 1e-6, 1e-3] {
            let delta: Vec<f64> = svd.u_col(0).iter().map(|u| delta_scale * u).collect();
            let b_delta: Vec<f64> = b.iter().zip(&delta).map(|(x, d)| x + d).collect();
            let filters = [
                FilterSpec::Tikhonov { alpha: 1e-2 },
                FilterSpec::Tikhonov { alpha: 1e-6 },
                FilterSpec::Tsvd { sigma_cut: 1e-2 },
                FilterSpec::Landweber { n: 50 },
            ];
            for filter in filters {
                let xa = solve(&svd, &b_delta, filter);
                let err: Vec<f64> = x.iter().zip(&xa).map(|(u, v)| u - v).collect();
                let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
                for (p, q) in [(1.0, 2.0), (2.0, 2.0)] {
                    let inputs = BoundInputs {
                        svd: &svd,
                        filter,
                        p,
                        q,
                        x: &x,
                        delta: &neg,
                    };
                    let observed = p_norm(&err, p);
                    let filtered = filtered_error_bound(&inputs).unwrap();
                    let holder = holder_error_bound(&inputs).unwrap();
                    assert!(filtered >= observed, "{filter} p={p}: {filtered} < {observed}");
                    assert!(holder >= observed, "{filter} p={p} q={q}: {holder} < {observed}");
                }
            }
        }
    }

    #[test]
    fn holder_bound_approaches_filtered_bound() {
        let (_, svd) = synthetic(&[0.9, 0.5, 0.1, 0.01, 1e-3]);
        let x = [1.0, -2.0, 0.5, 0.1, 3.0];
        let delta = [1e-4, -2e-4, 0.0, 5e-5, 1e-4];
        let inputs = BoundInputs {
            svd: &svd,
            filter: FilterSpec::Tikhonov { alpha: 1e-4 },
            p: 2.0,
            q: 1e3,
            x: &x,
            delta: &delta,
        };
        let filtered = filtered_error_bound(&inputs).unwrap();
        let holder = holder_error_bound(&inputs).unwrap();
        assert!((holder / filtered - 1.0).abs() < 0.01, "{filtered} {holder}");
    }

    #[test]
    fn invalid_exponents_are_rejected() {
        let (_, svd) = synthetic(&[0.9, 0.5, 0.1, 0.01, 1e-3]);
        let inputs = BoundInputs {
            svd: &svd,
            filter: FilterSpec::default(),
            p: 0.5,
            q: 2.0,
            x: &[0.0; 5],
            delta: &[0.0; 5],
        };
        assert!(filtered_error_bound(&inputs).is_err());
        assert!(holder_error_bound(&BoundInputs {
            p: 1.0,
            q: 1.0,
            ..inputs
        })
        .is_err());
    }

    #[test]
    fn phi_sup_examples() {
        let spec = PotentialSpec::for_chain(1000, 1.0);
        let h = spec.equilibrium();
        assert!(phi_sup(&spec, h, h).unwrap() < 1e-12);
        let shell = phi_sup(&spec, 0.9 * h, 2.5 * h).unwrap();
        assert!(shell.is_finite() && shell > 0.0);
        let r = 1.3 * h;
        let point = (spec.derivative(r) * r).abs();
        let narrow = phi_sup(&spec, r, r * (1.0 + 1e-9)).unwrap();
        assert!((narrow - point).abs() < 1e-6 * point);
        assert!(phi_sup(&spec, 2.0 * h, h).is_err());
    }

    #[test]
    fn theorem_bound_basics() {
        let spec = PotentialSpec::for_chain(100, 1.0);
        let kernel = WindowKernel::new(WindowKind::Gaussian, 1.0, 0.1).unwrap();
        let j = vec![1.0; 100];
        let r = 0.95 * spec.equilibrium();
        assert_eq!(
            interaction_stress_bound(&j, &j, &kernel, &spec, 1.0, r)
                .unwrap()
                .bound,
            0.0
        );
        let mut prev = 0.0;
        for e in [1e-4, 1e-3, 1e-2] {
            let q: Vec<f64> = j.iter().map(|x| x + e).collect();
            let b = interaction_stress_bound(&j, &q, &kernel, &spec, 1.0, r)
                .unwrap()
                .bound;
            assert!(b > prev);
            prev = b;
        }
        assert!(interaction_stress_bound(&j, &j, &kernel, &spec, 0.5, r).is_err());
    }
}
