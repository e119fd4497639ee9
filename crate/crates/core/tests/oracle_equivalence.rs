use std::sync::Arc;

use sector_xeb_core::circuit::{build_circuit, corner_positions};
use sector_xeb_core::noise::{self, resolve, trajectory_for, ResolvedOp};
use sector_xeb_core::oracle::{self, dense_run, expm_xxz, ideal_ops};
use sector_xeb_core::rng::{self, StreamKind};
use sector_xeb_core::{
    AngleMode, Circuit, CircuitSpec, Complex64, LatticeLayout, NoiseModel, SectorSpace, SectorState,
};

fn random_circuit(rows: usize, cols: usize, n: usize, depth: usize, seed: u64, mode: AngleMode) -> Circuit {
    let layout = LatticeLayout::new(rows, cols).unwrap();
    build_circuit(&CircuitSpec {
        layout,
        depth,
        angle_mode: mode,
        initial: corner_positions(&layout, n).unwrap(),
        seed,
        instance: 0,
    })
    .unwrap()
}

fn max_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn xxz_kernel_matches_matrix_exponential_on_all_two_qubit_inputs() {
    let space = Arc::new(SectorSpace::new(2, 0, 2).unwrap());
    let mut rng = rng::stream(17, 0, StreamKind::Synthetic, 0);
    for _ in 0..1000 {
        let (a1, a2) = (rng::angle(&mut rng), rng::angle(&mut rng));
        let m = expm_xxz(a1, a2);
        for input in 0..4usize {
            let bits: Vec<usize> = (0..2).filter(|&b| input >> b & 1 == 1).map(|b| b + 1).collect();
            let mut s = SectorState::product(space.clone(), &bits).unwrap();
            s.apply_xxz(1, 2, a1, a2).unwrap();
            // Dense matrix column for the input, local index 2 b(q1) + b(q2).
            let col = 2 * (input & 1) + (input >> 1 & 1);
            for output in 0..4usize {
                let row = 2 * (output & 1) + (output >> 1 & 1);
                let n = output.count_ones() as usize;
                let want = m[row][col];
                let got = if n == bits.len() {
                    let basis = space.basis(n).unwrap();
                    let b = sector_xeb_core::BitString::from_u128(output as u128);
                    s.amplitude(n, basis.rank(&b).unwrap() as usize).unwrap()
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((got - want).norm() < 1e-12, "angles ({a1}, {a2}) input {input:02b} output {output:02b}");
            }
        }
    }
}

#[test]
fn sector_evolution_matches_dense_evolution_on_random_circuits() {
    let mut case = 0u64;
    for (rows, cols) in [(3, 3), (3, 4)] {
        for k in 0..50u64 {
            let n = 1 + (k % 3) as usize;
            let depth = 1 + (k as usize * 7) % 24;
            let mode = if k % 5 == 0 { AngleMode::Fixed } else { AngleMode::Random };
            let c = random_circuit(rows, cols, n, depth, 1000 + case, mode);
            case += 1;
            let space = Arc::new(SectorSpace::single(c.num_qubits(), n).unwrap().with_pairs(&c.pairs()).unwrap());
            let sector = noise::run_ideal(&c, &space).unwrap();
            let dense = dense_run(&ideal_ops(&c), c.num_qubits()).unwrap();
            let gap = max_gap(&sector.amplitudes(n).unwrap(), &dense.sector_amplitudes(n).unwrap());
            assert!(gap < 1e-10, "{rows}x{cols} n={n} depth={depth}: {gap}");
            let (p, q) = (sector.probabilities(n).unwrap(), dense.sector_amplitudes(n).unwrap());
            for (x, y) in p.iter().zip(&q) {
                assert!((x - y.norm_sqr()).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn noisy_trajectories_match_dense_evolution_across_sectors() {
    let noise = NoiseModel::uniform(0.03).unwrap();
    for seed in 0..20u64 {
        let c = random_circuit(3, 3, 2, 12, seed, AngleMode::Random);
        let nq = c.num_qubits();
        let space = Arc::new(SectorSpace::new(nq, 0, nq).unwrap().with_pairs(&c.pairs()).unwrap());
        let traj = trajectory_for(&c, &noise, 99, 0, seed);
        let ops: Vec<ResolvedOp> = resolve(&c, &traj);
        let sector = noise::run_resolved(&ops, &space).unwrap();
        let dense = dense_run(&ops, nq).unwrap();
        for n in 0..=nq {
            let gap = max_gap(&sector.amplitudes(n).unwrap(), &dense.sector_amplitudes(n).unwrap());
            assert!(gap < 1e-10, "seed {seed} sector {n}: {gap}");
        }
    }
}

#[test]
fn unregistered_pairs_use_the_generic_kernel_correctly() {
    let c = random_circuit(3, 4, 3, 16, 5, AngleMode::Random);
    let bare = Arc::new(SectorSpace::single(12, 3).unwrap());
    let s = noise::run_ideal(&c, &bare).unwrap();
    let d = dense_run(&ideal_ops(&c), 12).unwrap();
    assert!(max_gap(&s.amplitudes(3).unwrap(), &d.sector_amplitudes(3).unwrap()) < 1e-10);
}

#[test]
fn dense_state_limits() {
    assert!(oracle::DenseState::vacuum(oracle::MAX_DENSE_QUBITS).is_ok());
    assert!(oracle::DenseState::vacuum(oracle::MAX_DENSE_QUBITS + 1).is_err());
}
