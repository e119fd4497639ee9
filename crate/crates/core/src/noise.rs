//! Stochastic Pauli noise: trajectory sampling, sector-banded execution and
//! trajectory-averaged fidelity.
//!
//! Every noisy site gets one Bernoulli draw. After each `Rz` and preparation
//! `X` a uniform Pauli from `{X, Y, Z}` is inserted with probability `e_g1`;
//! after each XXZ a uniform element of `{I,X,Y,Z}^2 \ {I I}` with probability
//! `e_g2`; before measurement each qubit independently receives a uniform
//! `{X, Y, Z}` with probability `e_q`.

use alloc::sync::Arc;
use alloc::vec::Vec;

// Inherent f64 math shadows this whenever std is linked into the build.
#[allow(unused_imports)]
use num_traits::Float;

use crate::circuit::{Circuit, GateCounts, GateOp};
use crate::error::{domain, Result};
use crate::metrics;
use crate::rng::{self, StreamKind};
use crate::state::{SectorSpace, SectorState};

pub use crate::state::Pauli;

/// Depolarizing rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub e_g1: f64,
    pub e_g2: f64,
    pub e_q: f64,
}

impl NoiseModel {
    pub fn new(e_g1: f64, e_g2: f64, e_q: f64) -> Result<Self> {
        for (name, p) in [("e_g1", e_g1), ("e_g2", e_g2), ("e_q", e_q)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain!("{name} = {p} outside [0, 1]"));
            }
        }
        Ok(Self { e_g1, e_g2, e_q })
    }

    /// All three rates equal to `p`.
    pub fn uniform(p: f64) -> Result<Self> {
        Self::new(p, p, p)
    }

    pub const fn noiseless() -> Self {
        Self { e_g1: 0.0, e_g2: 0.0, e_q: 0.0 }
    }

    pub fn is_noiseless(&self) -> bool {
        self.e_g1 == 0.0 && self.e_g2 == 0.0 && self.e_q == 0.0
    }
}

/// A Pauli error placed into the gate sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insertion {
    One { qubit: usize, pauli: Pauli },
    Two { q1: usize, q2: usize, p1: Pauli, p2: Pauli },
}

impl Insertion {
    /// Number of X/Y factors, i.e. the largest particle-number change it causes.
    pub fn flips(&self) -> usize {
        match *self {
            Insertion::One { pauli, .. } => usize::from(pauli.flips()),
            Insertion::Two { p1, p2, .. } => usize::from(p1.flips()) + usize::from(p2.flips()),
        }
    }

    fn apply(&self, state: &mut SectorState) -> Result<()> {
        match *self {
            Insertion::One { qubit, pauli } => state.apply_pauli(qubit, pauli),
            Insertion::Two { q1, q2, p1, p2 } => state.apply_pauli2(q1, q2, p1, p2),
        }
    }
}

/// Pauli insertions of one trajectory. `before` is the index of the circuit op
/// the insertion precedes; entries are sorted by it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub insertions: Vec<(usize, Insertion)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.insertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insertions.is_empty()
    }

    /// Total X/Y factors over all insertions.
    pub fn flips(&self) -> usize {
        self.insertions.iter().map(|(_, i)| i.flips()).sum()
    }
}

/// Circuit op or inserted error, in execution order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResolvedOp {
    Gate(GateOp),
    Error(Insertion),
}

/// Draws the insertions of one trajectory.
pub fn sample_trajectory<R: rand_core::RngCore + ?Sized>(
    circuit: &Circuit,
    noise: &NoiseModel,
    rng: &mut R,
) -> Trajectory {
    let mut insertions = Vec::new();
    let one = |rng: &mut R| Pauli::from_index(rng::below(rng, 3) as usize + 1);
    for (k, op) in circuit.ops().iter().enumerate() {
        match *op {
            GateOp::Rz { qubit, .. } | GateOp::PrepX { qubit } => {
                if rng::uniform(rng) < noise.e_g1 {
                    insertions.push((k + 1, Insertion::One { qubit, pauli: one(rng) }));
                }
            }
            GateOp::Xxz { q1, q2, .. } => {
                if rng::uniform(rng) < noise.e_g2 {
                    let idx = rng::below(rng, 15) as usize + 1;
                    let (p1, p2) = (Pauli::from_index(idx / 4), Pauli::from_index(idx % 4));
                    insertions.push((k + 1, Insertion::Two { q1, q2, p1, p2 }));
                }
            }
            GateOp::Measure => {
                for qubit in 1..=circuit.num_qubits() {
                    if rng::uniform(rng) < noise.e_q {
                        insertions.push((k, Insertion::One { qubit, pauli: one(rng) }));
                    }
                }
            }
        }
    }
    // Gate insertions at k + 1 and measurement insertions at the measure index
    // can share a position; a stable sort keeps gate errors first.
    insertions.sort_by_key(|&(pos, _)| pos);
    Trajectory { insertions }
}

/// Trajectory `index` of circuit instance `instance` under `master_seed`.
pub fn trajectory_for(
    circuit: &Circuit,
    noise: &NoiseModel,
    master_seed: u64,
    instance: u64,
    index: u64,
) -> Trajectory {
    if noise.is_noiseless() {
        return Trajectory::default();
    }
    let mut rng = rng::stream(master_seed, instance, StreamKind::Noise, index);
    sample_trajectory(circuit, noise, &mut rng)
}

/// Merges circuit ops and insertions into one execution sequence.
pub fn resolve(circuit: &Circuit, trajectory: &Trajectory) -> Vec<ResolvedOp> {
    let mut out = Vec::with_capacity(circuit.ops().len() + trajectory.len());
    let mut ins = trajectory.insertions.iter().peekable();
    for (k, op) in circuit.ops().iter().enumerate() {
        while let Some(&&(pos, i)) = ins.peek() {
            if pos > k {
                break;
            }
            out.push(ResolvedOp::Error(i));
            ins.next();
        }
        out.push(ResolvedOp::Gate(*op));
    }
    out.extend(ins.map(|&(_, i)| ResolvedOp::Error(i)));
    out
}

/// Executor options.
#[derive(Clone, Copy, Debug, Default)]
struct Pruning {
    /// Drop sectors that can no longer return to this sector before the end.
    target: Option<usize>,
}

/// Result of executing a resolved sequence.
#[derive(Clone, Debug)]
pub struct Execution {
    pub state: SectorState,
    /// Highest sector that held amplitude at any point.
    pub peak_sector: usize,
}

/// Runs a resolved sequence from the vacuum on `space`. Leading preparation
/// gates become a product state, so a noiseless run needs only band `[n, n]`.
pub fn run_resolved(ops: &[ResolvedOp], space: &Arc<SectorSpace>) -> Result<SectorState> {
    Ok(execute(ops, space, Pruning::default())?.state)
}

/// Runs `circuit` with `trajectory`'s insertions on `space`.
pub fn run_trajectory(
    circuit: &Circuit,
    trajectory: &Trajectory,
    space: &Arc<SectorSpace>,
) -> Result<Execution> {
    execute(&resolve(circuit, trajectory), space, Pruning::default())
}

/// Noiseless final state of `circuit` on `space`.
pub fn run_ideal(circuit: &Circuit, space: &Arc<SectorSpace>) -> Result<SectorState> {
    Ok(run_trajectory(circuit, &Trajectory::default(), space)?.state)
}

fn execute(ops: &[ResolvedOp], space: &Arc<SectorSpace>, pruning: Pruning) -> Result<Execution> {
    execute_from(ops, None, space, pruning)
}

/// Executes `ops` starting from `start`, or from the vacuum with the leading
/// preparation block folded into a product state.
fn execute_from(
    ops: &[ResolvedOp],
    start: Option<SectorState>,
    space: &Arc<SectorSpace>,
    pruning: Pruning,
) -> Result<Execution> {
    // Remaining X/Y budget after each op, for pruning.
    let mut budget_after = alloc::vec![0usize; ops.len()];
    let mut acc = 0;
    for (k, op) in ops.iter().enumerate().rev() {
        budget_after[k] = acc;
        if let ResolvedOp::Error(i) = op {
            acc += i.flips();
        }
    }
    let total_budget = acc;

    // Leading preparation block: X gates on distinct qubits plus the single-qubit
    // errors that follow them (each on an already prepared qubit).
    let mut k = 0;
    let mut prep = Vec::new();
    let mut prep_errors = Vec::new();
    while start.is_none() && k < ops.len() {
        match ops[k] {
            ResolvedOp::Gate(GateOp::PrepX { qubit }) if !prep.contains(&qubit) => prep.push(qubit),
            ResolvedOp::Error(i @ Insertion::One { qubit, .. }) if prep.contains(&qubit) => {
                prep_errors.push(i)
            }
            _ => break,
        }
        k += 1;
    }
    prep.sort_unstable();
    let mut state = match start {
        Some(s) => s,
        None => SectorState::product(Arc::clone(space), &prep)?,
    };
    let mut peak = state.max_active_sector().unwrap_or(0);
    let prune = |state: &mut SectorState, budget: usize| {
        if let Some(t) = pruning.target {
            state.retain_near(t, budget);
        }
    };
    if !prep_errors.is_empty() {
        let mut remaining = total_budget;
        for i in &prep_errors {
            i.apply(&mut state)?;
            remaining -= i.flips();
            peak = peak.max(state.max_active_sector().unwrap_or(0));
            prune(&mut state, remaining);
        }
    } else {
        prune(&mut state, total_budget);
    }

    let mut rz_run: Vec<(usize, f64)> = Vec::new();
    let mut deferred: Vec<Insertion> = Vec::new();
    let mut touched: Vec<bool> = alloc::vec![false; space.num_qubits() + 1];

    let flush = |state: &mut SectorState,
                     rz_run: &mut Vec<(usize, f64)>,
                     deferred: &mut Vec<Insertion>,
                     touched: &mut Vec<bool>|
     -> Result<()> {
        if !rz_run.is_empty() {
            state.apply_rz_layer(rz_run)?;
            rz_run.clear();
        }
        for i in deferred.drain(..) {
            i.apply(state)?;
        }
        touched.iter_mut().for_each(|t| *t = false);
        Ok(())
    };

    while k < ops.len() {
        if state.is_zero() {
            break;
        }
        match ops[k] {
            ResolvedOp::Gate(GateOp::Rz { qubit, theta }) => {
                state.space().check_qubit(qubit)?;
                if touched[qubit] {
                    flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
                }
                rz_run.push((qubit, theta));
                touched[qubit] = true;
            }
            ResolvedOp::Error(i @ Insertion::One { qubit, .. }) if !rz_run.is_empty() => {
                // A Pauli on a qubit whose Rz already sits in the run commutes
                // with the rest of the run (other qubits only).
                state.space().check_qubit(qubit)?;
                if !touched[qubit] {
                    flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
                    i.apply(&mut state)?;
                } else {
                    deferred.push(i);
                }
                if i.flips() > 0 {
                    // Pruning needs the state after the error; flush the run now.
                    flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
                    peak = peak.max(state.max_active_sector().unwrap_or(0));
                    prune(&mut state, budget_after[k]);
                }
            }
            ResolvedOp::Error(i) => {
                flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
                i.apply(&mut state)?;
                if i.flips() > 0 {
                    peak = peak.max(state.max_active_sector().unwrap_or(0));
                    prune(&mut state, budget_after[k]);
                }
            }
            ResolvedOp::Gate(GateOp::Xxz { q1, q2, alpha1, alpha2 }) => {
                flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
                state.apply_xxz(q1, q2, alpha1, alpha2)?;
            }
            ResolvedOp::Gate(GateOp::PrepX { qubit }) => {
                flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
                state.apply_pauli(qubit, Pauli::X)?;
                peak = peak.max(state.max_active_sector().unwrap_or(0));
            }
            ResolvedOp::Gate(GateOp::Measure) => {
                flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
            }
        }
        k += 1;
    }
    flush(&mut state, &mut rz_run, &mut deferred, &mut touched)?;
    Ok(Execution { state, peak_sector: peak })
}

/// `|<ideal|psi_traj>|^2` for one trajectory, computed on `space` with every
/// sector that cannot reach the ideal's sector again dropped along the way.
/// Exact for the overlap; the trajectory's final state is not kept.
pub fn trajectory_overlap(
    ideal: &SectorState,
    circuit: &Circuit,
    trajectory: &Trajectory,
    space: &Arc<SectorSpace>,
    target: usize,
) -> Result<OverlapTerm> {
    if trajectory.is_empty() {
        return Ok(OverlapTerm { value: 1.0, peak_sector: circuit.particles() });
    }
    let exec = execute(&resolve(circuit, trajectory), space, Pruning { target: Some(target) })?;
    let value = if exec.state.is_zero() { 0.0 } else { ideal.inner(&exec.state)?.norm_sqr() };
    Ok(OverlapTerm { value, peak_sector: exec.peak_sector })
}

/// One trajectory's fidelity term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapTerm {
    pub value: f64,
    /// Highest sector reached; the term is identical for every band whose top
    /// is at least this sector.
    pub peak_sector: usize,
}

/// Mean and standard error of a trajectory average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FidelityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub trajectories: usize,
}

/// Trajectory-averaged fidelity `mean |<ideal|psi_traj>|^2` over trajectories
/// `0..n_traj` of `(master_seed, instance)`.
pub fn trajectory_fidelity(
    ideal: &SectorState,
    circuit: &Circuit,
    noise: &NoiseModel,
    space: &Arc<SectorSpace>,
    n_traj: usize,
    master_seed: u64,
    instance: u64,
) -> Result<FidelityEstimate> {
    if n_traj == 0 {
        return Err(domain!("trajectory count must be at least 1"));
    }
    let target = circuit.particles();
    let mut terms = Vec::with_capacity(n_traj);
    for t in 0..n_traj {
        let traj = trajectory_for(circuit, noise, master_seed, instance, t as u64);
        terms.push(trajectory_overlap(ideal, circuit, &traj, space, target)?.value);
    }
    let (value, stderr) = metrics::mean_stderr(&terms);
    Ok(FidelityEstimate { value, stderr, trajectories: n_traj })
}

/// Budget for stored ideal checkpoints, in amplitudes.
const CHECKPOINT_BUDGET: usize = 1 << 22;

/// Noiseless snapshots of one circuit at layer boundaries. A trajectory
/// resumes from the last snapshot before its first insertion, so the shared
/// noiseless prefix is simulated once per circuit instead of once per
/// trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine {
    circuit: Circuit,
    /// Op index each snapshot precedes, ascending.
    starts: Vec<usize>,
    snapshots: Vec<SectorState>,
    ideal: SectorState,
}

impl TrajectoryEngine {
    pub fn new(circuit: Circuit) -> Result<Self> {
        let n = circuit.particles();
        let space =
            Arc::new(SectorSpace::single(circuit.num_qubits(), n)?.with_pairs(&circuit.pairs())?);
        let ops = circuit.ops();
        let boundaries: Vec<usize> = (1..ops.len())
            .filter(|&k| {
                matches!(ops[k], GateOp::Rz { .. }) && !matches!(ops[k - 1], GateOp::Rz { .. })
            })
            .collect();
        let dim = space.dim(n).unwrap_or(1).max(1);
        let stride = (boundaries.len() * dim).div_ceil(CHECKPOINT_BUDGET).max(1);
        let starts: Vec<usize> = boundaries.into_iter().step_by(stride).collect();

        let resolved: Vec<ResolvedOp> = ops.iter().map(|&g| ResolvedOp::Gate(g)).collect();
        let mut snapshots = Vec::with_capacity(starts.len());
        let mut done = 0;
        let mut state: Option<SectorState> = None;
        for &k in &starts {
            let next = execute_from(&resolved[done..k], state.take(), &space, Pruning::default())?;
            snapshots.push(next.state.clone());
            state = Some(next.state);
            done = k;
        }
        let ideal = execute_from(&resolved[done..], state, &space, Pruning::default())?.state;
        Ok(Self { circuit, starts, snapshots, ideal })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Noiseless final state on band `[n, n]`.
    pub fn ideal(&self) -> &SectorState {
        &self.ideal
    }

    /// Resolved ops from the latest snapshot not after the first insertion.
    fn resume(&self, trajectory: &Trajectory) -> (Option<&SectorState>, Vec<ResolvedOp>) {
        let first = trajectory.insertions.first().map_or(usize::MAX, |&(pos, _)| pos);
        let slot = self.starts.partition_point(|&k| k <= first);
        if slot == 0 {
            return (None, resolve(&self.circuit, trajectory));
        }
        let start = self.starts[slot - 1];
        let mut out = Vec::with_capacity(self.circuit.ops().len() - start + trajectory.len());
        let mut ins = trajectory.insertions.iter().peekable();
        for (k, op) in self.circuit.ops().iter().enumerate().skip(start) {
            while let Some(&&(pos, i)) = ins.peek() {
                if pos > k {
                    break;
                }
                out.push(ResolvedOp::Error(i));
                ins.next();
            }
            out.push(ResolvedOp::Gate(*op));
        }
        out.extend(ins.map(|&(_, i)| ResolvedOp::Error(i)));
        (Some(&self.snapshots[slot - 1]), out)
    }

    fn execute(&self, trajectory: &Trajectory, space: &Arc<SectorSpace>, pruning: Pruning) -> Result<Execution> {
        if trajectory.is_empty() {
            let state = self.ideal.rebase(Arc::clone(space))?;
            return Ok(Execution { state, peak_sector: self.circuit.particles() });
        }
        let (start, ops) = self.resume(trajectory);
        let start = start.map(|s| s.rebase(Arc::clone(space))).transpose()?;
        execute_from(&ops, start, space, pruning)
    }

    /// Same result as [`run_trajectory`].
    pub fn run(&self, trajectory: &Trajectory, space: &Arc<SectorSpace>) -> Result<Execution> {
        self.execute(trajectory, space, Pruning::default())
    }

    /// Final state with every sector that could not reach the initial sector
    /// again dropped along the way. Exact on that sector, and therefore for
    /// its weight and for sampling conditioned on it.
    pub fn run_pruned(&self, trajectory: &Trajectory, space: &Arc<SectorSpace>) -> Result<Execution> {
        let target = self.circuit.particles();
        if trajectory.flips() % 2 == 1 {
            // Odd flip count: the final state has no weight in the initial sector.
            return Ok(Execution { state: SectorState::zero(Arc::clone(space)), peak_sector: target });
        }
        self.execute(trajectory, space, Pruning { target: Some(target) })
    }

    /// Same result as [`trajectory_overlap`] against the engine's ideal state.
    pub fn overlap(&self, trajectory: &Trajectory, space: &Arc<SectorSpace>) -> Result<OverlapTerm> {
        if trajectory.is_empty() {
            return Ok(OverlapTerm { value: 1.0, peak_sector: self.circuit.particles() });
        }
        let exec = self.run_pruned(trajectory, space)?;
        let value = if exec.state.is_zero() { 0.0 } else { self.ideal.inner(&exec.state)?.norm_sqr() };
        Ok(OverlapTerm { value, peak_sector: exec.peak_sector })
    }
}

/// Lower-bound fidelity prediction
/// `(1 - e_g1)^{#1q} (1 - e_g2)^{#2q} (1 - 2 e_q / 3)^{#measured}`.
pub fn predicted_fidelity(counts: &GateCounts, noise: &NoiseModel) -> f64 {
    let pow = |base: f64, k: usize| base.powf(k as f64);
    pow(1.0 - noise.e_g1, counts.one_qubit)
        * pow(1.0 - noise.e_g2, counts.two_qubit)
        * pow(1.0 - 2.0 * noise.e_q / 3.0, counts.measured)
}
