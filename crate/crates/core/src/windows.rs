//! Averaging window functions and their `eta` scaling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::simpson_piecewise;

/// Gaussian values below `exp(-GAUSS_EXPONENT_CUT)` times the peak are
/// treated as zero, which makes the kernel numerically compact.
const GAUSS_EXPONENT_CUT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[serde(rename = "char")]
    Characteristic,
    Trapezoid,
    Triangle,
    Quadratic,
    Quartic,
    Gaussian,
}

impl WindowKind {
    pub const ALL: [WindowKind; 6] = [
        WindowKind::Characteristic,
        WindowKind::Trapezoid,
        WindowKind::Triangle,
        WindowKind::Quadratic,
        WindowKind::Quartic,
        WindowKind::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Characteristic => "char",
            WindowKind::Trapezoid => "trapezoid",
            WindowKind::Triangle => "triangle",
            WindowKind::Quadratic => "quadratic",
            WindowKind::Quartic => "quartic",
            WindowKind::Gaussian => "gaussian",
        }
    }

    /// Half-width of the support of the unscaled window in units of `L`,
    /// `None` for the Gaussian.
    pub fn support_factor(self) -> Option<f64> {
        match self {
            WindowKind::Trapezoid => Some(1.5),
            WindowKind::Gaussian => None,
            _ => Some(0.5),
        }
    }

    /// Points where the unscaled window (with `L = l`) is not smooth.
    fn breakpoints(self, l: f64) -> Vec<f64> {
        match self {
            WindowKind::Trapezoid => vec![-1.5 * l, -0.5 * l, 0.5 * l, 1.5 * l],
            WindowKind::Triangle => vec![-0.5 * l, 0.0, 0.5 * l],
            WindowKind::Gaussian => vec![],
            _ => vec![-0.5 * l, 0.5 * l],
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WindowKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown window '{s}'")))
    }
}

/// Evaluates the unscaled window `kind` with box length `l` at `x`.
pub fn eval_window(kind: WindowKind, x: f64, l: f64) -> Result<f64> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::invalid(format!(
            "box length must be positive, got {l}"
        )));
    }
    Ok(window_value(kind, x, l))
}

#[inline]
fn window_value(kind: WindowKind, x: f64, l: f64) -> f64 {
    let a = x.abs();
    let half = 0.5 * l;
    match kind {
        WindowKind::Characteristic => {
            if a <= half {
                1.0 / l
            } else {
                0.0
            }
        }
        // flat top of height 1/(2L) with linear shoulders reaching zero at 3L/2
        WindowKind::Trapezoid => {
            if a <= half {
                0.5 / l
            } else if a <= 1.5 * l {
                (1.5 * l - a) / (2.0 * l * l)
            } else {
                0.0
            }
        }
        WindowKind::Triangle => {
            if a <= half {
                4.0 / (l * l) * (half - a)
            } else {
                0.0
            }
        }
        WindowKind::Quadratic => {
            if a < half {
                -6.0 / (l * l * l) * (x * x - 0.25 * l * l)
            } else {
                0.0
            }
        }
        WindowKind::Quartic => {
            if a <= half {
                let s = x * x - 0.25 * l * l;
                30.0 / l.powi(5) * s * s
            } else {
                0.0
            }
        }
        WindowKind::Gaussian => {
            6.0 / (l * (2.0 * std::f64::consts::PI).sqrt()) * (-18.0 * x * x / (l * l)).exp()
        }
    }
}

/// A window of a given kind, scaled by the resolution parameter `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowKernel {
    pub kind: WindowKind,
    pub l: f64,
    pub eta: f64,
}

impl WindowKernel {
    pub fn new(kind: WindowKind, l: f64, eta: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid(format!(
                "box length must be positive, got {l}"
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(WindowKernel { kind, l, eta })
    }

    /// `(1/eta) psi(x/eta)` on the real line.
    #[inline]
    pub fn eval_scaled(&self, x: f64) -> f64 {
        window_value(self.kind, x / self.eta, self.l) / self.eta
    }

    /// Radius beyond which the scaled kernel on the real line is zero.
    pub fn support_radius(&self) -> f64 {
        match self.kind.support_factor() {
            Some(c) => c * self.eta * self.l,
            None => self.eta * self.l * (GAUSS_EXPONENT_CUT / 18.0).sqrt(),
        }
    }

    /// Kernel evaluated at a separation `d` on the periodic box: the sum of
    /// every image inside the support, which is the minimal image alone
    /// whenever the support radius is below `l/2`.
    #[inline]
    pub fn eval_periodic(&self, d: f64) -> f64 {
        let l = self.l;
        let r = self.support_radius();
        let m = min_image(d, l);
        if r < 0.5 * l {
            return if m.abs() > r {
                0.0
            } else {
                self.eval_scaled(m)
            };
        }
        let reach = (r / l).ceil() as i64 + 1;
        (-reach..=reach)
            .map(|n| m + n as f64 * l)
            .filter(|x| x.abs() <= r)
            .map(|x| self.eval_scaled(x))
            .sum()
    }

    /// `sup |psi_eta|` on the periodic box.
    pub fn peak(&self) -> f64 {
        let base = self.eval_periodic(0.0);
        if self.support_radius() < 0.5 * self.l {
            return base;
        }
        let samples = 4096;
        (0..=samples)
            .map(|i| self.eval_periodic(0.5 * self.l * i as f64 / samples as f64))
            .fold(base, f64::max)
    }

    /// Breakpoints of the scaled kernel on the real line.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.kind
            .breakpoints(self.l)
            .into_iter()
            .map(|b| b * self.eta)
            .collect()
    }
}

/// Wraps a separation into `[-l/2, l/2)`.
#[inline]
pub fn min_image(d: f64, l: f64) -> f64 {
    d - l * (d / l + 0.5).floor()
}

/// Outcome of checking the admissibility conditions of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub non_negative: bool,
    pub unit_mass: bool,
    pub decays: bool,
    pub max_at_zero: bool,
    pub mass: f64,
}

const CONDITION_PANELS: usize = 1 << 17;

/// Checks non-negativity, unit mass, decay at infinity and a strict maximum
/// at the origin for the unscaled window with `L = 1`.
pub fn verify_conditions(kind: WindowKind) -> ConditionReport {
    let l = 1.0;
    let f = |x: f64| window_value(kind, x, l);

    let span = 2.0 * l;
    let samples = 100_000;
    let grid = (0..=samples).map(|i| -span + 2.0 * span * i as f64 / samples as f64);
    let non_negative = grid.clone().all(|x| f(x) >= 0.0);

    let mut breaks = vec![-span];
    breaks.extend(kind.breakpoints(l));
    breaks.push(span);
    let mass = simpson_piecewise(&breaks, CONDITION_PANELS, f);
    let unit_mass = (mass - 1.0).abs() <= 1e-10;

    let far: Vec<f64> = [2.0, 5.0, 10.0, 100.0].iter().map(|&k| f(k * l)).collect();
    let decays = far.iter().all(|v| v.abs() < 1e-12) && far.windows(2).all(|w| w[1] <= w[0]);

    let peak = f(0.0);
    let max_at_zero = (1..=2000).all(|i| {
        let x = i as f64 * l / 1000.0;
        f(x) < peak && f(-x) < peak
    });

    ConditionReport {
        non_negative,
        unit_mass,
        decays,
        max_at_zero,
        mass,
    }
}

/// Mass of the periodic scaled kernel over one box, by piecewise Simpson.
pub fn periodic_mass(kernel: &WindowKernel) -> f64 {
    let l = kernel.l;
    let mut breaks = vec![-0.5 * l];
    for b in kernel.breakpoints() {
        for n in -3..=3 {
            let m = b + n as f64 * l;
            if m > -0.5 * l && m < 0.5 * l {
                breaks.push(m);
            }
        }
    }
    let r = kernel.support_radius();
    if r < 0.5 * l {
        breaks.extend([-r, r]);
    }
    breaks.push(0.5 * l);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    simpson_piecewise(&breaks, CONDITION_PANELS, |x| kernel.eval_periodic(x))
}
