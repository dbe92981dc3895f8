use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{ErrorReport, ExperimentConfig, RelError, RunOutcome, RunSpec};
use crate::closure::Closure;
use crate::dynamics::{EnergySample, Trajectory};
use crate::error::{Error, Result};
use crate::meso::{FineFields, MesoFields, MesoGrid};
use crate::regularize::SvdFactors;

pub(crate) fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes a header row and the given records.
pub fn write_table<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    R: IntoIterator<Item = String>,
    I: IntoIterator<Item = R>,
{
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const REPORT_HEADER: [&str; 15] = [
    "t",
    "energy",
    "energy_drift",
    "J_abs",
    "J_rel",
    "v_abs",
    "v_rel",
    "Tc_abs",
    "Tc_rel",
    "Tint_abs",
    "Tint_rel",
    "rank",
    "clamped_J",
    "clamped_density",
    "undefined",
];

pub fn write_report(path: &Path, report: &ErrorReport) -> Result<()> {
    write_table(
        path,
        &REPORT_HEADER,
        report.rows.iter().map(|r| {
            let named: [(&str, RelError); 4] = [
                ("J", r.jacobian),
                ("v", r.velocity),
                ("Tc", r.stress_conv),
                ("Tint", r.stress_int),
            ];
            let undefined: Vec<&str> = named
                .iter()
                .filter(|(_, e)| e.rel.is_none())
                .map(|(n, _)| *n)
                .collect();
            let mut row = vec![num(r.t), num(r.energy), num(r.energy_drift)];
            for (_, e) in named {
                row.push(num(e.abs));
                row.push(opt(e.rel));
            }
            row.push(r.rank.to_string());
            row.push(r.clamped_jacobian.to_string());
            row.push(r.clamped_density.to_string());
            row.push(undefined.join(";"));
            row
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub spec: RunSpec,
    pub status: String,
    pub file: Option<String>,
    pub sha256: Option<String>,
    pub rank: Option<usize>,
    pub dt_used: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub runs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One CSV per successful run plus `manifest.json` with the resolved
/// config, per-run status and checksums.
pub fn emit_reports(
    outcomes: &[RunOutcome],
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Manifest> {
    create_dir(dir)?;
    let mut runs = Vec::with_capacity(outcomes.len());
    for (index, outcome) in outcomes.iter().enumerate() {
        let entry = match &outcome.result {
            Ok(report) => {
                let name = format!("run{index:03}_{}.csv", outcome.spec.label());
                let path = dir.join(&name);
                write_report(&path, report)?;
                ManifestEntry {
                    index,
                    spec: outcome.spec.clone(),
                    status: "ok".into(),
                    file: Some(name),
                    sha256: Some(sha256_file(&path)?),
                    rank: Some(report.rank),
                    dt_used: Some(report.dt_used),
                    error: None,
                }
            }
            Err(e) => ManifestEntry {
                index,
                spec: outcome.spec.clone(),
                status: "failed".into(),
                file: None,
                sha256: None,
                rank: None,
                dt_used: None,
                error: Some(e.clone()),
            },
        };
        runs.push(entry);
    }
    let manifest = Manifest {
        config: config.clone(),
        runs,
    };
    let path = dir.join("manifest.json");
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Columns `t, x, density, momentum, velocity, stress_conv, stress_int`.
pub fn write_meso_fields(path: &Path, fields: &[MesoFields], grid: &MesoGrid) -> Result<()> {
    write_table(
        path,
        &[
            "t",
            "x",
            "density",
            "momentum",
            "velocity",
            "stress_conv",
            "stress_int",
        ],
        fields.iter().flat_map(|f| {
            (0..grid.b).map(move |k| {
                vec![
                    num(f.t),
                    num(grid.coarse_node(k)),
                    num(f.density[k]),
                    num(f.momentum[k]),
                    num(f.velocity[k]),
                    num(f.stress_conv[k]),
                    num(f.stress_int[k]),
                ]
            })
        }),
    )
}

/// Columns `t, y, J_exact, v_exact`.
pub fn write_fine_fields(path: &Path, fields: &[FineFields], grid: &MesoGrid) -> Result<()> {
    write_table(
        path,
        &["t", "y", "J_exact", "v_exact"],
        fields.iter().flat_map(|f| {
            (0..grid.nf).map(move |m| {
                vec![
                    num(f.t),
                    num(grid.fine_node(m)),
                    num(f.j_exact[m]),
                    num(f.v_exact[m]),
                ]
            })
        }),
    )
}

/// Columns `t, y, J_approx, v_approx`.
pub fn write_reconstructed(path: &Path, closures: &[Closure], grid: &MesoGrid) -> Result<()> {
    write_table(
        path,
        &["t", "y", "J_approx", "v_approx"],
        closures.iter().flat_map(|c| {
            let f = &c.fields;
            (0..grid.nf).map(move |m| {
                vec![
                    num(f.t),
                    num(grid.fine_node(m)),
                    num(f.j_approx[m]),
                    num(f.v_approx[m]),
                ]
            })
        }),
    )
}

/// Columns `t, x, stress_conv, stress_int` of the closed stresses.
pub fn write_approx_stresses(path: &Path, closures: &[Closure], grid: &MesoGrid) -> Result<()> {
    write_table(
        path,
        &["t", "x", "stress_conv", "stress_int"],
        closures.iter().flat_map(|c| {
            (0..grid.b).map(move |k| {
                vec![
                    num(c.fields.t),
                    num(grid.coarse_node(k)),
                    num(c.stress_conv[k]),
                    num(c.stress_int[k]),
                ]
            })
        }),
    )
}

/// Columns `j, sigma` over the full spectrum, `j` starting at 1.
pub fn write_singular_values(path: &Path, svd: &SvdFactors) -> Result<()> {
    write_table(
        path,
        &["j", "sigma"],
        svd.full_spectrum
            .iter()
            .enumerate()
            .map(|(j, s)| vec![(j + 1).to_string(), num(*s)]),
    )
}

pub fn write_energy(path: &Path, trace: &[EnergySample]) -> Result<()> {
    write_table(
        path,
        &["t", "kinetic", "potential", "total"],
        trace
            .iter()
            .map(|e| vec![num(e.t), num(e.kinetic), num(e.potential), num(e.total)]),
    )
}

/// Columns `t, i, q, v` for every snapshot.
pub fn write_states(path: &Path, traj: &Trajectory) -> Result<()> {
    write_table(
        path,
        &["t", "i", "q", "v"],
        traj.snapshots.iter().flat_map(|s| {
            (0..s.n()).map(move |i| vec![num(s.t), i.to_string(), num(s.q[i]), num(s.v[i])])
        }),
    )
}
