use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_dt, TestCase};
use crate::error::{Error, Result};
use crate::regularize::{FilterSpec, DEFAULT_RHS_TOL, DEFAULT_SIGMA_CUT};
use crate::windows::WindowKind;

/// A scalar config entry that may also be given as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OneOrMany::One(_) => 1,
            OneOrMany::Many(xs) => xs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `"coarse"` (0, 0.1, ..., t_end), `"fine"` (adds a 0.01 grid) or explicit times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleTimes {
    Named(String),
    List(Vec<f64>),
}

impl Default for SampleTimes {
    fn default() -> Self {
        SampleTimes::Named("coarse".into())
    }
}

impl SampleTimes {
    pub fn resolve(&self, t_end: f64) -> Result<Vec<f64>> {
        let grid = |step: f64| -> Vec<f64> {
            let count = (t_end / step + 1e-9).floor() as usize;
            (0..=count).map(|k| k as f64 * step).collect()
        };
        let mut times = match self {
            SampleTimes::Named(name) if name == "coarse" => grid(0.1),
            SampleTimes::Named(name) if name == "fine" => {
                let mut t = grid(0.1);
                t.extend(grid(0.01));
                t
            }
            SampleTimes::Named(other) => {
                return Err(Error::Config(format!(
                    "sample_times must be \"coarse\", \"fine\" or a list, got \"{other}\""
                )))
            }
            SampleTimes::List(list) => list.clone(),
        };
        if let Some(bad) = times.iter().find(|t| !(**t >= 0.0 && **t <= t_end + 1e-12)) {
            return Err(Error::Config(format!(
                "sample time {bad} outside [0, {t_end}]"
            )));
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Ok(times)
    }
}

fn default_n() -> OneOrMany<usize> {
    OneOrMany::One(1000)
}
fn default_b() -> usize {
    500
}
fn default_eta() -> OneOrMany<f64> {
    OneOrMany::One(0.1)
}
fn default_window() -> OneOrMany<WindowKind> {
    OneOrMany::One(WindowKind::Gaussian)
}
fn default_t_end() -> f64 {
    1.0
}
fn default_sigma_cut() -> f64 {
    DEFAULT_SIGMA_CUT
}
fn default_rhs_tol() -> f64 {
    DEFAULT_RHS_TOL
}
fn default_true() -> bool {
    true
}

/// Experiment description read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub test_case: TestCase,
    #[serde(rename = "N", default = "default_n")]
    pub n: OneOrMany<usize>,
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    /// Fine-grid size; each run uses its own `N` when absent.
    #[serde(rename = "Nfine", default)]
    pub nfine: Option<usize>,
    #[serde(default = "default_eta")]
    pub eta: OneOrMany<f64>,
    #[serde(default = "default_window")]
    pub window: OneOrMany<WindowKind>,
    /// Time step; `min(1e-4, 0.1 L/N)` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub sample_times: SampleTimes,
    /// Closure filter; TSVD at `sigma_cut` when absent.
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    #[serde(default = "default_sigma_cut")]
    pub sigma_cut: f64,
    #[serde(default = "default_rhs_tol")]
    pub rhs_tol: f64,
    /// Halve `dt` while the energy drift exceeds its limit.
    #[serde(default = "default_true")]
    pub calibrate_dt: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for everything but the test case.
    pub fn new(test_case: TestCase) -> Self {
        ExperimentConfig {
            test_case,
            n: default_n(),
            b: default_b(),
            nfine: None,
            eta: default_eta(),
            window: default_window(),
            dt: None,
            t_end: default_t_end(),
            sample_times: SampleTimes::default(),
            filter: None,
            sigma_cut: default_sigma_cut(),
            rhs_tol: default_rhs_tol(),
            calibrate_dt: true,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Cartesian product `N x window x eta`, validated.
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n.is_empty() || self.eta.is_empty() || self.window.is_empty() {
            return cfg("N, eta and window must not be empty lists".into());
        }
        if self.b < 2 {
            return cfg(format!("B must be at least 2, got {}", self.b));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return cfg(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return cfg(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.sigma_cut >= 0.0) || !(self.rhs_tol >= 0.0) {
            return cfg("sigma_cut and rhs_tol must be non-negative".into());
        }
        let filter = self.filter.unwrap_or(FilterSpec::Tsvd {
            sigma_cut: self.sigma_cut,
        });
        filter
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let times = self.sample_times.resolve(self.t_end)?;

        let mut runs = Vec::new();
        for n in self.n.values() {
            let nfine = self.nfine.unwrap_or(n);
            if n < 2 {
                return cfg(format!("N must be at least 2, got {n}"));
            }
            if self.b > nfine {
                return cfg(format!("B = {} exceeds Nfine = {nfine}", self.b));
            }
            for window in self.window.values() {
                for eta in self.eta.values() {
                    if !(eta > 0.0 && eta < 1.0) {
                        return cfg(format!("eta must lie in (0, 1), got {eta}"));
                    }
                    runs.push(RunSpec {
                        test_case: self.test_case,
                        n,
                        b: self.b,
                        nfine,
                        window,
                        eta,
                        dt: self.dt.unwrap_or_else(|| default_dt(n, 1.0)),
                        t_end: self.t_end,
                        sample_times: times.clone(),
                        filter,
                        sigma_cut: self.sigma_cut,
                        rhs_tol: self.rhs_tol,
                        calibrate_dt: self.calibrate_dt,
                    });
                }
            }
        }
        Ok(runs)
    }
}

/// One fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub test_case: TestCase,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "Nfine")]
    pub nfine: usize,
    pub window: WindowKind,
    pub eta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    pub filter: FilterSpec,
    pub sigma_cut: f64,
    pub rhs_tol: f64,
    pub calibrate_dt: bool,
}

impl RunSpec {
    /// Runs sharing this key share one trajectory.
    pub(crate) fn trajectory_key(&self) -> String {
        format!(
            "{}|{}|{:e}|{:e}|{:?}|{}",
            self.test_case, self.n, self.dt, self.t_end, self.sample_times, self.calibrate_dt
        )
    }

    /// Runs sharing this key share one factorization.
    pub(crate) fn system_key(&self) -> String {
        format!(
            "{}|{:e}|{}|{}|{:e}|{:e}",
            self.window, self.eta, self.b, self.nfine, self.sigma_cut, self.rhs_tol
        )
    }

    pub fn label(&self) -> String {
        format!(
            "{}_{}_eta{}_N{}_B{}_Nf{}",
            self.test_case, self.window, self.eta, self.n, self.b, self.nfine
        )
    }
}
