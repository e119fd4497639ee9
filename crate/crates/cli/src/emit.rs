//! Result persistence: CSV tables and a JSON summary.
//!
//! Nothing time- or host-dependent is written, so reruns of one configuration
//! produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{HarnessError, Result};
use crate::experiment::{
    CheckRow, CollapseFit, CollapseRow, ExperimentResult, InstanceRow, PtBin, PtSummary, SampleRow,
    SweepRow,
};

/// A row type with a fixed column list, so empty tables still get a header.
pub trait Record: Serialize {
    const HEADER: &'static [&'static str];
}

impl Record for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "N", "n", "N_d", "p_noise", "F_mlxeb", "stderr", "F_true", "F_pred", "n_s", "N_s", "n_max", "n_c",
        "seed", "instance_stderr", "F_true_stderr",
    ];
}

impl Record for InstanceRow {
    const HEADER: &'static [&'static str] = &[
        "instance", "N", "n", "N_d", "p_noise", "n_max", "F_mlxeb", "stderr", "F_true", "F_true_stderr",
        "n_s", "N_s", "seed",
    ];
}

impl Record for SampleRow {
    const HEADER: &'static [&'static str] =
        &["instance", "trajectory", "bitstring_hex", "sector", "N_d", "p_noise", "n_max"];
}

impl Record for PtBin {
    const HEADER: &'static [&'static str] = &["N_d", "bin_lo", "bin_hi", "density", "expected"];
}

impl Record for CheckRow {
    const HEADER: &'static [&'static str] =
        &["instance", "N", "n", "N_d", "p_noise", "F_traj", "stderr", "F_exact", "z", "trajectories"];
}

impl Record for CollapseRow {
    const HEADER: &'static [&'static str] = &["N", "n", "N_d", "F_mlxeb", "stderr", "f_scaled"];
}

/// CSV text for `rows`, header first.
pub fn csv_string<T: Record>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let wrap = |e: csv::Error| HarnessError::Csv { path: PathBuf::from("<memory>"), source: e };
    w.write_record(T::HEADER).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Provenance and aggregate results.
#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub config: Option<&'a ExperimentConfig>,
    /// How every random stream is keyed.
    pub streams: Streams,
    pub rows: usize,
    pub porter_thomas: &'a [PtSummary],
    pub fit: Option<&'a CollapseFit>,
    pub fidelity_check_max_abs_z: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Streams {
    pub circuit: &'static str,
    pub noise: &'static str,
    pub measurement: &'static str,
}

pub fn summary(result: &ExperimentResult) -> Summary<'_> {
    let mut notes = Vec::new();
    if let Some(cfg) = &result.config {
        if cfg.sampling.samples_per_trajectory > 1 {
            notes.push(format!(
                "{} measurements share each noise trajectory instead of one each",
                cfg.sampling.samples_per_trajectory
            ));
        }
        if cfg.mode == Mode::NoiseSweep && !cfg.sampling.dump {
            notes.push(
                "noisy samples are drawn within the initial sector from the pruned trajectory state; \
                 outcomes outside it count as out-of-sector without a bitstring"
                    .into(),
            );
        }
    }
    if let Some(reason) = &result.fit_failure {
        notes.push(format!("no stretched-exponential fit: {reason}"));
    }
    let max_z = result.checks.iter().map(|c| c.z.abs()).fold(None, |m: Option<f64>, z| {
        Some(m.map_or(z, |m| m.max(z)))
    });
    Summary {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: result.config.as_ref(),
        streams: Streams {
            circuit: "(seed, instance, circuit, 0)",
            noise: "(seed, instance, noise, trajectory)",
            measurement: "(seed, instance, measure, trajectory), or (seed, instance, measure, N_d) for noiseless sweeps",
        },
        rows: result.rows.len(),
        porter_thomas: &result.pt,
        fit: result.fit.as_ref(),
        fidelity_check_max_abs_z: max_z,
        notes,
    }
}

pub fn summary_json(result: &ExperimentResult) -> String {
    let mut s = serde_json::to_string_pretty(&summary(result)).expect("summary serializes");
    s.push('\n');
    s
}

/// Writes the files for `result`'s mode into `dir` and returns their paths.
pub fn emit(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mode = result.config.as_ref().map(|c| c.mode);
    let dump = result.config.as_ref().is_some_and(|c| c.sampling.dump);
    let mut files: Vec<(&str, String)> = Vec::new();
    match mode {
        Some(Mode::DepthSweep | Mode::NoiseSweep | Mode::Collapse) | None => {
            files.push(("results.csv", csv_string(&result.rows)?));
            files.push(("instances.csv", csv_string(&result.instances)?));
        }
        _ => {}
    }
    if mode == Some(Mode::PtHist) {
        files.push(("pt_hist.csv", csv_string(&result.pt_bins)?));
    }
    if mode == Some(Mode::FidelityCheck) {
        files.push(("fidelity_check.csv", csv_string(&result.checks)?));
    }
    if mode == Some(Mode::Collapse) {
        files.push(("collapse.csv", csv_string(&result.collapse_rows)?));
    }
    if dump {
        files.push(("samples.csv", csv_string(&result.samples)?));
    }
    files.push(("summary.json", summary_json(result)));
    let mut paths = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        write(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}
