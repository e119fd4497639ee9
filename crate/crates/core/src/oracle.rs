//! Brute-force references over the full `2^N` space, for validation only.
//!
//! Dense index convention: qubit `l` is bit `l - 1` of the basis integer. Two
//! qubit matrices act on the local index `2 b(q1) + b(q2)`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::circuit::{Circuit, GateOp};
use crate::error::{capacity, domain, Result};
use crate::noise::{Insertion, NoiseModel, Pauli, ResolvedOp};
use crate::subspace::{BitString, SectorBasis};

pub const MAX_DENSE_QUBITS: usize = 14;
pub const MAX_DENSITY_QUBITS: usize = 9;

pub type Matrix2 = [[Complex64; 2]; 2];
pub type Matrix4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn rz_matrix(theta: f64) -> Matrix2 {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

pub fn pauli_matrix(p: Pauli) -> Matrix2 {
    match p {
        Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
        Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
        Pauli::Y => [[ZERO, -I], [I, ZERO]],
        Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

/// `exp(i[a1 (XX + YY) + a2 ZZ])` from its eigendecomposition: `|00>`, `|11>`
/// with eigenvalue `a2` and `(|01> +- |10>)/sqrt 2` with `+-2 a1 - a2`.
pub fn expm_xxz(alpha1: f64, alpha2: f64) -> Matrix4 {
    let outer = Complex64::from_polar(1.0, alpha2);
    let plus = Complex64::from_polar(1.0, 2.0 * alpha1 - alpha2);
    let minus = Complex64::from_polar(1.0, -2.0 * alpha1 - alpha2);
    let (sum, diff) = ((plus + minus) * 0.5, (plus - minus) * 0.5);
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = outer;
    m[3][3] = outer;
    m[1][1] = sum;
    m[2][2] = sum;
    m[1][2] = diff;
    m[2][1] = diff;
    m
}

fn kron(a: &Matrix2, b: &Matrix2) -> Matrix4 {
    let mut m = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = a[r >> 1][c >> 1] * b[r & 1][c & 1];
        }
    }
    m
}

fn conj2(m: &Matrix2) -> Matrix2 {
    m.map(|row| row.map(|x| x.conj()))
}

fn conj4(m: &Matrix4) -> Matrix4 {
    m.map(|row| row.map(|x| x.conj()))
}

/// Applies a 1-qubit matrix on bit `b` of a vector indexed by bit strings.
fn apply1(v: &mut [Complex64], b: usize, m: &Matrix2) {
    let stride = 1usize << b;
    for base in 0..v.len() {
        if base & stride != 0 {
            continue;
        }
        let (x0, x1) = (v[base], v[base | stride]);
        v[base] = m[0][0] * x0 + m[0][1] * x1;
        v[base | stride] = m[1][0] * x0 + m[1][1] * x1;
    }
}

/// Applies a 2-qubit matrix on bits `(b1, b2)`, local index `2 bit(b1) + bit(b2)`.
fn apply2(v: &mut [Complex64], b1: usize, b2: usize, m: &Matrix4) {
    let (s1, s2) = (1usize << b1, 1usize << b2);
    for base in 0..v.len() {
        if base & (s1 | s2) != 0 {
            continue;
        }
        let idx = [base, base | s2, base | s1, base | s1 | s2];
        let x = idx.map(|i| v[i]);
        for r in 0..4 {
            v[idx[r]] = m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2] + m[r][3] * x[3];
        }
    }
}

/// Full `2^N` statevector.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl DenseState {
    pub fn vacuum(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_DENSE_QUBITS {
            return Err(capacity!("dense state limited to 1..={MAX_DENSE_QUBITS} qubits, got {num_qubits}"));
        }
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    fn check(&self, q: usize) -> Result<()> {
        if q == 0 || q > self.num_qubits {
            Err(domain!("qubit {q} outside [1, {}]", self.num_qubits))
        } else {
            Ok(())
        }
    }

    pub fn apply_1q(&mut self, q: usize, m: &Matrix2) -> Result<()> {
        self.check(q)?;
        apply1(&mut self.amps, q - 1, m);
        Ok(())
    }

    pub fn apply_2q(&mut self, q1: usize, q2: usize, m: &Matrix4) -> Result<()> {
        self.check(q1)?;
        self.check(q2)?;
        if q1 == q2 {
            return Err(domain!("two-qubit gate on a single qubit {q1}"));
        }
        apply2(&mut self.amps, q1 - 1, q2 - 1, m);
        Ok(())
    }

    pub fn apply_op(&mut self, op: &ResolvedOp) -> Result<()> {
        match *op {
            ResolvedOp::Gate(GateOp::Rz { qubit, theta }) => self.apply_1q(qubit, &rz_matrix(theta)),
            ResolvedOp::Gate(GateOp::Xxz { q1, q2, alpha1, alpha2 }) => {
                self.apply_2q(q1, q2, &expm_xxz(alpha1, alpha2))
            }
            ResolvedOp::Gate(GateOp::PrepX { qubit }) => self.apply_1q(qubit, &pauli_matrix(Pauli::X)),
            ResolvedOp::Gate(GateOp::Measure) => Ok(()),
            ResolvedOp::Error(Insertion::One { qubit, pauli }) => self.apply_1q(qubit, &pauli_matrix(pauli)),
            ResolvedOp::Error(Insertion::Two { q1, q2, p1, p2 }) => {
                self.apply_2q(q1, q2, &kron(&pauli_matrix(p1), &pauli_matrix(p2)))
            }
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Amplitudes of sector `n` in combinadic rank order.
    pub fn sector_amplitudes(&self, n: usize) -> Result<Vec<Complex64>> {
        let basis = SectorBasis::new(self.num_qubits, n)?;
        Ok(basis.iter().map(|b| self.amps[b.to_u64().unwrap() as usize]).collect())
    }

    pub fn amplitude(&self, bits: &BitString) -> Complex64 {
        bits.to_u64().and_then(|x| self.amps.get(x as usize).copied()).unwrap_or(ZERO)
    }

    pub fn inner(&self, other: &DenseState) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Circuit ops without any insertions.
pub fn ideal_ops(circuit: &Circuit) -> Vec<ResolvedOp> {
    circuit.ops().iter().map(|&g| ResolvedOp::Gate(g)).collect()
}

/// Runs `ops` from the vacuum on the full space.
pub fn dense_run(ops: &[ResolvedOp], num_qubits: usize) -> Result<DenseState> {
    let mut s = DenseState::vacuum(num_qubits)?;
    for op in ops {
        s.apply_op(op)?;
    }
    Ok(s)
}

/// Density matrix stored as a `2N`-qubit vector: row bits above column bits,
/// `rho[r * 2^N + c]`. `U rho U^dagger` is `U` on the row bits and `conj(U)`
/// on the column bits.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    num_qubits: usize,
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn pure(state: &DenseState) -> Result<Self> {
        let n = state.num_qubits;
        if n > MAX_DENSITY_QUBITS {
            return Err(capacity!("density matrix limited to {MAX_DENSITY_QUBITS} qubits, got {n}"));
        }
        let a = &state.amps;
        let mut rho = vec![ZERO; a.len() * a.len()];
        for (r, x) in a.iter().enumerate() {
            for (c, y) in a.iter().enumerate() {
                rho[r * a.len() + c] = x * y.conj();
            }
        }
        Ok(Self { num_qubits: n, rho })
    }

    pub fn vacuum(num_qubits: usize) -> Result<Self> {
        Self::pure(&DenseState::vacuum(num_qubits)?)
    }

    fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        self.rho[r * self.dim() + c]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entry(i, i).re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i).re).collect()
    }

    pub fn conjugate_1q(&mut self, q: usize, m: &Matrix2) {
        apply1(&mut self.rho, self.num_qubits + q - 1, m);
        apply1(&mut self.rho, q - 1, &conj2(m));
    }

    pub fn conjugate_2q(&mut self, q1: usize, q2: usize, m: &Matrix4) {
        let n = self.num_qubits;
        apply2(&mut self.rho, n + q1 - 1, n + q2 - 1, m);
        apply2(&mut self.rho, q1 - 1, q2 - 1, &conj4(m));
    }

    /// `(1 - p) rho + (p / 3) sum_{P in X,Y,Z} P rho P` on qubit `q`.
    pub fn depolarize_1q(&mut self, q: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let mut acc: Vec<Complex64> = self.rho.iter().map(|x| x * (1.0 - p)).collect();
        for pauli in [Pauli::X, Pauli::Y, Pauli::Z] {
            let mut term = self.clone();
            term.conjugate_1q(q, &pauli_matrix(pauli));
            for (a, t) in acc.iter_mut().zip(&term.rho) {
                *a += t * (p / 3.0);
            }
        }
        self.rho = acc;
    }

    /// `(1 - p) rho + (p / 15) sum_{P1 P2 != I I} (P1 P2) rho (P1 P2)` on `(q1, q2)`.
    pub fn depolarize_2q(&mut self, q1: usize, q2: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let mut acc: Vec<Complex64> = self.rho.iter().map(|x| x * (1.0 - p)).collect();
        for k in 1..16 {
            let m = kron(&pauli_matrix(Pauli::from_index(k / 4)), &pauli_matrix(Pauli::from_index(k % 4)));
            let mut term = self.clone();
            term.conjugate_2q(q1, q2, &m);
            for (a, t) in acc.iter_mut().zip(&term.rho) {
                *a += t * (p / 15.0);
            }
        }
        self.rho = acc;
    }

    /// `<psi| rho |psi>`.
    pub fn expectation(&self, psi: &DenseState) -> f64 {
        let d = self.dim();
        let mut acc = ZERO;
        for r in 0..d {
            let row = &self.rho[r * d..(r + 1) * d];
            let v: Complex64 = row.iter().zip(&psi.amps).map(|(x, y)| x * y).sum();
            acc += psi.amps[r].conj() * v;
        }
        acc.re
    }
}

/// Exact density-matrix evolution of `circuit` under `noise`: each gate is
/// followed by its depolarizing channel and every qubit is depolarized before
/// measurement.
pub fn exact_noisy_state(circuit: &Circuit, noise: &NoiseModel) -> Result<DensityMatrix> {
    let mut rho = DensityMatrix::vacuum(circuit.num_qubits())?;
    for op in circuit.ops() {
        match *op {
            GateOp::Rz { qubit, theta } => {
                rho.conjugate_1q(qubit, &rz_matrix(theta));
                rho.depolarize_1q(qubit, noise.e_g1);
            }
            GateOp::PrepX { qubit } => {
                rho.conjugate_1q(qubit, &pauli_matrix(Pauli::X));
                rho.depolarize_1q(qubit, noise.e_g1);
            }
            GateOp::Xxz { q1, q2, alpha1, alpha2 } => {
                rho.conjugate_2q(q1, q2, &expm_xxz(alpha1, alpha2));
                rho.depolarize_2q(q1, q2, noise.e_g2);
            }
            GateOp::Measure => {
                for q in 1..=circuit.num_qubits() {
                    rho.depolarize_1q(q, noise.e_q);
                }
            }
        }
    }
    Ok(rho)
}

/// `<psi_ideal| rho_noisy |psi_ideal>`.
pub fn exact_noisy_fidelity(circuit: &Circuit, noise: &NoiseModel) -> Result<f64> {
    if circuit.num_qubits() > MAX_DENSITY_QUBITS {
        return Err(capacity!("exact noisy fidelity limited to {MAX_DENSITY_QUBITS} qubits"));
    }
    let ideal = dense_run(&ideal_ops(circuit), circuit.num_qubits())?;
    Ok(exact_noisy_state(circuit, noise)?.expectation(&ideal))
}

/// Exact outcome distribution over all `2^N` bitstrings under `noise`.
pub fn exact_noisy_distribution(circuit: &Circuit, noise: &NoiseModel) -> Result<Vec<f64>> {
    Ok(exact_noisy_state(circuit, noise)?.diagonal())
}
