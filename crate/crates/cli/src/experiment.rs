//! Mode dispatch and the per-point computations behind each output row.
//!
//! Every random quantity is drawn from a stream keyed by the master seed and
//! the instance: circuit angles by the instance alone, noise and measurement
//! by the trajectory index (noiseless sweeps key measurement by depth). Work
//! is split into tasks that each own their streams and results are gathered
//! in index order, so output does not depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use sector_xeb_core::circuit::build_circuit;
use sector_xeb_core::metrics::{self, mean_stderr, ScalingSeries, PT_BIN_WIDTH};
use sector_xeb_core::noise::{predicted_fidelity, trajectory_for, Execution, TrajectoryEngine};
use sector_xeb_core::oracle::exact_noisy_fidelity;
use sector_xeb_core::rng::{self, StreamKind};
use sector_xeb_core::sampling::{self, NORM_TOLERANCE};
use sector_xeb_core::subspace::binom;
use sector_xeb_core::{
    AngleMode, Circuit, CircuitSpec, Coord, LatticeLayout, NoiseModel, Outcome, SectorSpace,
};

use crate::config::{placement_for, ExperimentConfig, Mode, Resolved};
use crate::error::{HarnessError, Result};

/// Trajectories per scheduled task.
const CHUNK: usize = 64;

/// One sweep point, pooled over instances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub num_qubits: usize,
    pub n: usize,
    #[serde(rename = "N_d")]
    pub depth: usize,
    pub p_noise: f64,
    #[serde(rename = "F_mlxeb")]
    pub f_mlxeb: f64,
    /// From the per-sample contribution variance over all `n_c * N_s` samples.
    pub stderr: f64,
    #[serde(rename = "F_true")]
    pub f_true: f64,
    #[serde(rename = "F_pred")]
    pub f_pred: f64,
    /// In-sector samples over all instances.
    pub n_s: usize,
    /// Samples over all instances.
    #[serde(rename = "N_s")]
    pub samples: usize,
    pub n_max: usize,
    pub n_c: usize,
    pub seed: u64,
    /// Spread of the per-instance estimates (empty for a single instance).
    pub instance_stderr: Option<f64>,
    #[serde(rename = "F_true_stderr")]
    pub f_true_stderr: f64,
}

/// One sweep point for one circuit instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceRow {
    pub instance: u64,
    #[serde(rename = "N")]
    pub num_qubits: usize,
    pub n: usize,
    #[serde(rename = "N_d")]
    pub depth: usize,
    pub p_noise: f64,
    pub n_max: usize,
    #[serde(rename = "F_mlxeb")]
    pub f_mlxeb: f64,
    pub stderr: f64,
    #[serde(rename = "F_true")]
    pub f_true: f64,
    #[serde(rename = "F_true_stderr")]
    pub f_true_stderr: f64,
    pub n_s: usize,
    #[serde(rename = "N_s")]
    pub samples: usize,
    pub seed: u64,
}

/// One measured bitstring.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRow {
    pub instance: u64,
    pub trajectory: u64,
    /// Empty when the weight had left the simulated band.
    pub bitstring_hex: String,
    pub sector: Option<usize>,
    #[serde(rename = "N_d")]
    pub depth: usize,
    pub p_noise: f64,
    pub n_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PtBin {
    #[serde(rename = "N_d")]
    pub depth: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub density: f64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PtSummary {
    #[serde(rename = "N_d")]
    pub depth: usize,
    pub dim: usize,
    pub instances: usize,
    /// KS distance of the instance-averaged sorted distribution against Exp(1).
    pub ks: f64,
    /// KS distance of all instances' values pooled.
    pub pooled_ks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub instance: u64,
    #[serde(rename = "N")]
    pub num_qubits: usize,
    pub n: usize,
    #[serde(rename = "N_d")]
    pub depth: usize,
    pub p_noise: f64,
    #[serde(rename = "F_traj")]
    pub f_traj: f64,
    pub stderr: f64,
    #[serde(rename = "F_exact")]
    pub f_exact: f64,
    /// `(F_traj - F_exact) / stderr`.
    pub z: f64,
    pub trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseRow {
    #[serde(rename = "N")]
    pub num_qubits: usize,
    pub n: usize,
    #[serde(rename = "N_d")]
    pub depth: usize,
    #[serde(rename = "F_mlxeb")]
    pub f_mlxeb: f64,
    pub stderr: f64,
    /// Empty when the point falls outside the transform's domain.
    pub f_scaled: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseFit {
    pub a: f64,
    pub collapse_distance: f64,
    pub tau: f64,
    pub beta: f64,
    pub tau_stderr: f64,
    pub beta_stderr: f64,
    pub residual_norm: f64,
    pub weighted: bool,
    pub points_used: usize,
    /// Points dropped by the transform or by the fit's domain.
    pub points_excluded: usize,
}

/// Everything a run produces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentResult {
    pub config: Option<ExperimentConfig>,
    pub rows: Vec<SweepRow>,
    pub instances: Vec<InstanceRow>,
    pub samples: Vec<SampleRow>,
    pub pt_bins: Vec<PtBin>,
    pub pt: Vec<PtSummary>,
    pub checks: Vec<CheckRow>,
    pub collapse_rows: Vec<CollapseRow>,
    pub fit: Option<CollapseFit>,
    /// Why a collapse produced no fit.
    pub fit_failure: Option<String>,
}

/// Circuit family: lattice, excitations and angle rule.
#[derive(Clone, Debug)]
struct System {
    layout: LatticeLayout,
    initial: Vec<Coord>,
    angle_mode: AngleMode,
}

impl System {
    fn particles(&self) -> usize {
        self.initial.len()
    }

    fn num_qubits(&self) -> usize {
        self.layout.num_qubits()
    }

    fn dim(&self) -> Result<usize> {
        Ok(binom(self.num_qubits(), self.particles())? as usize)
    }

    fn circuit(&self, depth: usize, seed: u64, instance: u64) -> Result<Circuit> {
        Ok(build_circuit(&CircuitSpec {
            layout: self.layout,
            depth,
            angle_mode: self.angle_mode,
            initial: self.initial.clone(),
            seed,
            instance,
        })?)
    }
}

/// Per-instance raw material for one sweep point.
#[derive(Clone, Debug, Default)]
struct InstanceData {
    contributions: Vec<f64>,
    overlaps: Vec<f64>,
    in_sector: usize,
    samples: Vec<SampleRow>,
}

struct Point<'a> {
    system: &'a System,
    depth: usize,
    p_noise: f64,
    n_max: usize,
    f_pred: f64,
    seed: u64,
}

fn aggregate(point: &Point, data: Vec<InstanceData>, out: &mut ExperimentResult) {
    let (nq, n) = (point.system.num_qubits(), point.system.particles());
    let mut estimates = Vec::with_capacity(data.len());
    let mut all_contrib = Vec::new();
    let mut all_overlap = Vec::new();
    let mut in_sector = 0;
    for (c, d) in data.into_iter().enumerate() {
        let (f, se) = mean_stderr(&d.contributions);
        let (ft, fse) = mean_stderr(&d.overlaps);
        out.instances.push(InstanceRow {
            instance: c as u64,
            num_qubits: nq,
            n,
            depth: point.depth,
            p_noise: point.p_noise,
            n_max: point.n_max,
            f_mlxeb: f,
            stderr: se,
            f_true: ft,
            f_true_stderr: fse,
            n_s: d.in_sector,
            samples: d.contributions.len(),
            seed: point.seed,
        });
        estimates.push(f);
        in_sector += d.in_sector;
        all_contrib.extend_from_slice(&d.contributions);
        all_overlap.extend_from_slice(&d.overlaps);
        out.samples.extend(d.samples);
    }
    let (f, se) = mean_stderr(&all_contrib);
    let (ft, fse) = mean_stderr(&all_overlap);
    out.rows.push(SweepRow {
        num_qubits: nq,
        n,
        depth: point.depth,
        p_noise: point.p_noise,
        f_mlxeb: f,
        stderr: se,
        f_true: ft,
        f_pred: point.f_pred,
        n_s: in_sector,
        samples: all_contrib.len(),
        n_max: point.n_max,
        n_c: estimates.len(),
        seed: point.seed,
        instance_stderr: (estimates.len() > 1).then(|| mean_stderr(&estimates).1),
        f_true_stderr: fse,
    });
}

fn hex(bits: &sector_xeb_core::BitString, nq: usize) -> String {
    bits.to_hex(nq)
}

/// Noiseless samples of one instance at one depth.
fn noiseless_instance(
    system: &System,
    depth: usize,
    seed: u64,
    instance: u64,
    n_samples: usize,
    dump: bool,
) -> Result<InstanceData> {
    let n = system.particles();
    let circuit = system.circuit(depth, seed, instance)?;
    let space = Arc::new(SectorSpace::single(system.num_qubits(), n)?.with_pairs(&circuit.pairs())?);
    let ideal = sector_xeb_core::noise::run_ideal(&circuit, &space)?;
    ideal.check_normalized(NORM_TOLERANCE)?;
    let probs = ideal.probabilities(n)?;
    let mut rng = rng::stream(seed, instance, StreamKind::Measure, depth as u64);
    let set = sampling::sample(&ideal, n_samples, &mut rng)?;
    let contributions = metrics::mlxeb_contributions(&probs, &set, n)?;
    let in_sector = set.filter_sector(n).1;
    let samples = if dump {
        sample_rows(&set.outcomes, system.num_qubits(), instance, depth, 0.0, n, |k| k as u64)
    } else {
        Vec::new()
    };
    Ok(InstanceData { contributions, overlaps: vec![1.0], in_sector, samples })
}

fn sample_rows(
    outcomes: &[Outcome],
    nq: usize,
    instance: u64,
    depth: usize,
    p_noise: f64,
    n_max: usize,
    trajectory: impl Fn(usize) -> u64,
) -> Vec<SampleRow> {
    outcomes
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let (bitstring_hex, sector) = match o {
                Outcome::Basis { bits, sector, .. } => (hex(bits, nq), Some(*sector)),
                Outcome::OutOfBand => (String::new(), None),
            };
            SampleRow { instance, trajectory: trajectory(k), bitstring_hex, sector, depth, p_noise, n_max }
        })
        .collect()
}

/// Noiseless depth sweep of one system.
fn noiseless_sweep(
    system: &System,
    depths: &[usize],
    cfg: &ExperimentConfig,
    out: &mut ExperimentResult,
) -> Result<()> {
    let s = &cfg.sampling;
    for &depth in depths {
        let data: Vec<InstanceData> = (0..s.instances as u64)
            .into_par_iter()
            .map(|c| noiseless_instance(system, depth, cfg.seed, c, s.samples, s.dump))
            .collect::<Result<_>>()?;
        let point = Point { system, depth, p_noise: 0.0, n_max: system.particles(), f_pred: 1.0, seed: cfg.seed };
        aggregate(&point, data, out);
    }
    Ok(())
}

/// One trajectory's results on one band.
#[derive(Clone, Debug)]
struct TrajectoryOutcome {
    contributions: Vec<f64>,
    in_sector: usize,
    overlap: f64,
    outcomes: Vec<Outcome>,
    peak_sector: usize,
}

/// Shared inputs of the trajectories of one instance.
struct NoisyInstance {
    engine: TrajectoryEngine,
    /// Ideal probabilities of the initial sector.
    probs: Vec<f64>,
    /// `(n_max, band)`, largest first.
    bands: Vec<(usize, Arc<SectorSpace>)>,
}

impl NoisyInstance {
    fn new(circuit: Circuit, n_max: &[usize]) -> Result<Self> {
        let n = circuit.particles();
        let nq = circuit.num_qubits();
        let pairs = circuit.pairs();
        let engine = TrajectoryEngine::new(circuit)?;
        engine.ideal().check_normalized(NORM_TOLERANCE)?;
        let probs = engine.ideal().probabilities(n)?;
        let mut tops: Vec<usize> = n_max.to_vec();
        tops.sort_unstable_by(|a, b| b.cmp(a));
        tops.dedup();
        let bands = tops
            .into_iter()
            .map(|m| Ok((m, Arc::new(SectorSpace::new(nq, 0, m)?.with_pairs(&pairs)?))))
            .collect::<Result<_>>()?;
        Ok(Self { engine, probs, bands })
    }

    fn contribution(&self, index: usize) -> f64 {
        self.probs.len() as f64 * self.probs[index] - 1.0
    }

    /// Draws from the initial sector only. The pruned state is exact there, so
    /// `u` below its weight picks an in-sector outcome with the right law; any
    /// other `u` is a sample outside the sector, which contributes 0.
    fn sample_pruned(
        &self,
        exec: Execution,
        draws: usize,
        rng: &mut rng::StreamRng,
    ) -> Result<TrajectoryOutcome> {
        let n = self.engine.circuit().particles();
        let overlap = if exec.state.is_zero() {
            0.0
        } else {
            self.engine.ideal().inner(&exec.state)?.norm_sqr()
        };
        let mut cdf = Vec::new();
        if let Some(amps) = exec.state.raw_sector(n) {
            let mut acc = 0.0;
            cdf.reserve(amps.len());
            for a in amps {
                acc += a.norm_sqr();
                cdf.push(acc);
            }
        }
        let weight = cdf.last().copied().unwrap_or(0.0);
        if weight > 1.0 + NORM_TOLERANCE {
            return Err(sector_xeb_core::Error::Integrity(format!(
                "sector weight {weight} exceeds 1"
            ))
            .into());
        }
        let mut contributions = Vec::with_capacity(draws);
        let mut in_sector = 0;
        for _ in 0..draws {
            let u = rng::uniform(rng);
            let pos = cdf.partition_point(|&c| c <= u);
            if pos < cdf.len() {
                contributions.push(self.contribution(pos));
                in_sector += 1;
            } else {
                contributions.push(0.0);
            }
        }
        Ok(TrajectoryOutcome {
            contributions,
            in_sector,
            overlap,
            outcomes: Vec::new(),
            peak_sector: exec.peak_sector,
        })
    }

    /// Draws from the full banded state, keeping every outcome.
    fn sample_full(
        &self,
        exec: Execution,
        draws: usize,
        rng: &mut rng::StreamRng,
    ) -> Result<TrajectoryOutcome> {
        let n = self.engine.circuit().particles();
        let overlap = self.engine.ideal().inner(&exec.state)?.norm_sqr();
        let set = sampling::sample(&exec.state, draws, rng)?;
        let mut contributions = Vec::with_capacity(draws);
        let mut in_sector = 0;
        for o in &set.outcomes {
            match *o {
                Outcome::Basis { sector, index, .. } if sector == n => {
                    contributions.push(self.contribution(index as usize));
                    in_sector += 1;
                }
                _ => contributions.push(0.0),
            }
        }
        Ok(TrajectoryOutcome {
            contributions,
            in_sector,
            overlap,
            outcomes: set.outcomes,
            peak_sector: exec.peak_sector,
        })
    }

    /// Results for every band, in `bands` order. A run whose highest sector
    /// stayed within a smaller band is reused for it unchanged.
    fn trajectory(
        &self,
        noise: &NoiseModel,
        seed: u64,
        instance: u64,
        t: u64,
        draws: usize,
        full: bool,
    ) -> Result<Vec<TrajectoryOutcome>> {
        let traj = trajectory_for(self.engine.circuit(), noise, seed, instance, t);
        let mut out: Vec<TrajectoryOutcome> = Vec::with_capacity(self.bands.len());
        for (m, space) in &self.bands {
            if let Some(prev) = out.last() {
                if prev.peak_sector <= *m {
                    out.push(prev.clone());
                    continue;
                }
            }
            let mut rng = rng::stream(seed, instance, StreamKind::Measure, t);
            let result = if full {
                self.sample_full(self.engine.run(&traj, space)?, draws, &mut rng)?
            } else {
                self.sample_pruned(self.engine.run_pruned(&traj, space)?, draws, &mut rng)?
            };
            out.push(result);
        }
        Ok(out)
    }
}

/// Noisy sweep over depths and rates of one system, one row per band top.
fn noisy_sweep(
    system: &System,
    depths: &[usize],
    n_max: &[usize],
    cfg: &ExperimentConfig,
    out: &mut ExperimentResult,
) -> Result<()> {
    let s = &cfg.sampling;
    let draws = s.samples_per_trajectory;
    let n_traj = s.samples / draws;
    let nq = system.num_qubits();
    if cfg.noise.rates.is_empty() {
        return Ok(());
    }
    for &depth in depths {
        let instances: Vec<NoisyInstance> = (0..s.instances as u64)
            .into_par_iter()
            .map(|c| NoisyInstance::new(system.circuit(depth, cfg.seed, c)?, n_max))
            .collect::<Result<_>>()?;
        let counts = instances[0].engine.circuit().gate_counts();
        let bands: Vec<usize> = instances[0].bands.iter().map(|(m, _)| *m).collect();
        for &p in &cfg.noise.rates {
            let noise = NoiseModel::uniform(p)?;
            let tasks: Vec<(usize, usize)> = (0..instances.len())
                .flat_map(|c| (0..n_traj.div_ceil(CHUNK)).map(move |k| (c, k)))
                .collect();
            let chunks: Vec<Vec<Vec<TrajectoryOutcome>>> = tasks
                .par_iter()
                .map(|&(c, k)| {
                    let inst = &instances[c];
                    (k * CHUNK..((k + 1) * CHUNK).min(n_traj))
                        .map(|t| inst.trajectory(&noise, cfg.seed, c as u64, t as u64, draws, s.dump))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;

            // Regroup as [band][instance].
            let mut data: Vec<Vec<InstanceData>> =
                vec![vec![InstanceData::default(); instances.len()]; bands.len()];
            for (&(c, k), chunk) in tasks.iter().zip(chunks) {
                for (j, per_band) in chunk.into_iter().enumerate() {
                    let t = (k * CHUNK + j) as u64;
                    for (b, r) in per_band.into_iter().enumerate() {
                        let d = &mut data[b][c];
                        d.contributions.extend_from_slice(&r.contributions);
                        d.overlaps.push(r.overlap);
                        d.in_sector += r.in_sector;
                        if s.dump {
                            d.samples.extend(sample_rows(&r.outcomes, nq, c as u64, depth, p, bands[b], |_| t));
                        }
                    }
                }
            }
            // Rows ascend in band top.
            for (b, per_instance) in data.into_iter().enumerate().rev() {
                let point = Point {
                    system,
                    depth,
                    p_noise: p,
                    n_max: bands[b],
                    f_pred: predicted_fidelity(&counts, &noise),
                    seed: cfg.seed,
                };
                aggregate(&point, per_instance, out);
            }
        }
    }
    Ok(())
}

fn pt_hist(system: &System, depths: &[usize], cfg: &ExperimentConfig, out: &mut ExperimentResult) -> Result<()> {
    let n = system.particles();
    for &depth in depths {
        let probs: Vec<Vec<f64>> = (0..cfg.sampling.instances as u64)
            .into_par_iter()
            .map(|c| {
                let circuit = system.circuit(depth, cfg.seed, c)?;
                let space =
                    Arc::new(SectorSpace::single(system.num_qubits(), n)?.with_pairs(&circuit.pairs())?);
                let ideal = sector_xeb_core::noise::run_ideal(&circuit, &space)?;
                ideal.check_normalized(NORM_TOLERANCE)?;
                Ok(ideal.probabilities(n)?)
            })
            .collect::<Result<_>>()?;
        let report = metrics::pt_check(&probs, PT_BIN_WIDTH)?;
        let h = &report.histogram;
        for (k, (&density, &expected)) in h.density.iter().zip(&h.expected).enumerate() {
            out.pt_bins.push(PtBin {
                depth,
                bin_lo: k as f64 * h.bin_width,
                bin_hi: (k + 1) as f64 * h.bin_width,
                density,
                expected,
            });
        }
        out.pt.push(PtSummary {
            depth,
            dim: report.dim,
            instances: report.instances,
            ks: report.ks,
            pooled_ks: report.pooled_ks,
        });
    }
    Ok(())
}

fn fidelity_check(system: &System, depths: &[usize], cfg: &ExperimentConfig, out: &mut ExperimentResult) -> Result<()> {
    let nq = system.num_qubits();
    let n_traj = cfg.sampling.samples;
    for &depth in depths {
        for &p in &cfg.noise.rates {
            let noise = NoiseModel::uniform(p)?;
            for c in 0..cfg.sampling.instances as u64 {
                let circuit = system.circuit(depth, cfg.seed, c)?;
                let exact = exact_noisy_fidelity(&circuit, &noise)?;
                let space = Arc::new(SectorSpace::new(nq, 0, nq)?.with_pairs(&circuit.pairs())?);
                let engine = TrajectoryEngine::new(circuit)?;
                let terms: Vec<Vec<f64>> = (0..n_traj.div_ceil(CHUNK))
                    .into_par_iter()
                    .map(|k| {
                        (k * CHUNK..((k + 1) * CHUNK).min(n_traj))
                            .map(|t| {
                                let traj = trajectory_for(engine.circuit(), &noise, cfg.seed, c, t as u64);
                                Ok(engine.overlap(&traj, &space)?.value)
                            })
                            .collect::<Result<_>>()
                    })
                    .collect::<Result<_>>()?;
                let terms: Vec<f64> = terms.concat();
                let (f, se) = mean_stderr(&terms);
                let z = if se > 0.0 {
                    (f - exact) / se
                } else if (f - exact).abs() < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                out.checks.push(CheckRow {
                    instance: c,
                    num_qubits: nq,
                    n: system.particles(),
                    depth,
                    p_noise: p,
                    f_traj: f,
                    stderr: se,
                    f_exact: exact,
                    z,
                    trajectories: n_traj,
                });
            }
        }
    }
    Ok(())
}

fn collapse(r: &Resolved, base: &System, out: &mut ExperimentResult) -> Result<()> {
    let cfg = &r.config;
    let systems: Vec<System> = if cfg.collapse.systems.is_empty() {
        vec![base.clone()]
    } else {
        cfg.collapse
            .systems
            .iter()
            .map(|s| {
                let layout = LatticeLayout::new(s.rows, s.cols)?;
                let initial = placement_for(&layout, s.n, &cfg.lattice.placement)?;
                Ok(System { layout, initial, angle_mode: base.angle_mode })
            })
            .collect::<Result<_>>()?
    };
    let mut series = Vec::with_capacity(systems.len());
    let mut stderrs = Vec::with_capacity(systems.len());
    for sys in &systems {
        let first = out.rows.len();
        noiseless_sweep(sys, &r.depths, cfg, out)?;
        let rows = &out.rows[first..];
        series.push(ScalingSeries {
            dim: sys.dim()? as f64,
            particles: sys.particles(),
            points: rows.iter().map(|row| (row.depth as f64, row.f_mlxeb)).collect(),
        });
        stderrs.push(rows.iter().map(|row| row.stderr).collect::<Vec<f64>>());
    }
    let (a, distance) = match &cfg.collapse.scan {
        Some(grid) => metrics::scan_scaling_offset(&series, grid)?,
        None => (cfg.collapse.offset, metrics::collapse_distance(&series, cfg.collapse.offset)?),
    };
    let mut points = Vec::new();
    let mut sigmas = Vec::new();
    let mut dropped = 0;
    for (sys, (ser, errs)) in systems.iter().zip(series.iter().zip(&stderrs)) {
        for (&(nd, f), &se) in ser.points.iter().zip(errs) {
            let scaled = metrics::scaling_transform(f, ser.dim, ser.particles, a)?;
            out.collapse_rows.push(CollapseRow {
                num_qubits: sys.num_qubits(),
                n: sys.particles(),
                depth: nd as usize,
                f_mlxeb: f,
                stderr: se,
                f_scaled: scaled,
            });
            match scaled {
                Some(t) => {
                    points.push((nd, t));
                    // First-order propagation through the power law.
                    sigmas.push(t * se / ((ser.particles as f64 + a) * (f - 1.0).abs()));
                }
                None => dropped += 1,
            }
        }
    }
    let fitted = if cfg.collapse.weighted {
        metrics::stretched_fit_weighted(&points, &sigmas)
    } else {
        metrics::stretched_fit(&points)
    };
    // A curve outside the stretched-exponential family is a finding, not a
    // failed run: keep the collapse table and report why there is no fit.
    let fit = match fitted {
        Ok(fit) => fit,
        Err(sector_xeb_core::Error::Fit(reason)) => {
            out.fit_failure = Some(format!("offset a = {a}: {reason}"));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    out.fit = Some(CollapseFit {
        a,
        collapse_distance: distance,
        tau: fit.tau,
        beta: fit.beta,
        tau_stderr: fit.tau_stderr,
        beta_stderr: fit.beta_stderr,
        residual_norm: fit.residual_norm,
        weighted: cfg.collapse.weighted,
        points_used: fit.points_used,
        points_excluded: fit.points_excluded + dropped,
    });
    Ok(())
}

/// Runs the configured mode on a pool of `threads` workers.
pub fn run(r: &Resolved) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.config.threads)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    pool.install(|| run_here(r))
}

fn run_here(r: &Resolved) -> Result<ExperimentResult> {
    let cfg = &r.config;
    let system = System { layout: r.layout, initial: r.initial.clone(), angle_mode: r.angle_mode };
    let mut out = ExperimentResult { config: Some(cfg.clone()), ..Default::default() };
    match cfg.mode {
        Mode::DepthSweep => noiseless_sweep(&system, &r.depths, cfg, &mut out)?,
        Mode::NoiseSweep => noisy_sweep(&system, &r.depths, &r.n_max, cfg, &mut out)?,
        Mode::PtHist => pt_hist(&system, &r.depths, cfg, &mut out)?,
        Mode::FidelityCheck => fidelity_check(&system, &r.depths, cfg, &mut out)?,
        Mode::Collapse => collapse(r, &system, &mut out)?,
    }
    Ok(out)
}
