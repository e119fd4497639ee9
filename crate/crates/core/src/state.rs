//! Statevector over a contiguous band of particle-number sectors.
//!
//! [`SectorSpace`] holds everything that depends only on `(N, n_min, n_max)`:
//! sector bases, the position table of every basis state, and optional pair
//! tables for the qubit pairs a circuit acts on. It is immutable once built and
//! shared between states through an `Arc`.
//!
//! [`SectorState`] stores one amplitude vector per sector. Sectors that are
//! identically zero are not allocated, so a noiseless run touches only its own
//! sector and a noisy trajectory grows into neighbouring sectors only after a
//! bit-flipping Pauli. A scalar global phase is kept separately and folded
//! into every read (and into the next diagonal layer).
//!
//! Gate conventions:
//! - `Rz(t) = diag(e^{-it/2}, e^{it/2})`
//! - `w(a1, a2) = exp(i[a1 (XX + YY) + a2 ZZ])`, which equals
//!   `e^{i a2}` on `|00>, |11>` and `e^{-i a2} [[cos 2a1, i sin 2a1], [i sin 2a1, cos 2a1]]`
//!   on `{|01>, |10>}`
//! - `Y|0> = i|1>`, `Y|1> = -i|0>`

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
// Inherent f64 math shadows this whenever std is linked into the build.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{capacity, domain, integrity, Result};
use crate::subspace::{PascalTable, SectorBasis};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Single-qubit Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(i: usize) -> Pauli {
        Self::ALL[i & 3]
    }

    /// Flips the computational-basis bit (changes particle number by one).
    pub fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Clone, Debug)]
struct PairTable {
    /// Per band sector: `[i, j]` with `i` having the first qubit set and `j`
    /// the partner with the bit moved to the second qubit.
    per_sector: Vec<Vec<[u32; 2]>>,
}

/// Immutable basis data for sectors `n_min..=n_max` of an `N`-qubit register.
#[derive(Clone, Debug)]
pub struct SectorSpace {
    num_qubits: usize,
    n_min: usize,
    n_max: usize,
    bases: Vec<SectorBasis>,
    positions: Vec<Vec<u8>>,
    table: PascalTable,
    pair_slot: Vec<u32>,
    pairs: Vec<PairTable>,
}

impl SectorSpace {
    pub fn new(num_qubits: usize, n_min: usize, n_max: usize) -> Result<Self> {
        if n_min > n_max || n_max > num_qubits {
            return Err(domain!(
                "sector band [{n_min}, {n_max}] invalid for {num_qubits} qubits"
            ));
        }
        let mut bases = Vec::with_capacity(n_max - n_min + 1);
        for m in n_min..=n_max {
            let basis = SectorBasis::new(num_qubits, m)?;
            if basis.dim() > u32::MAX as u64 {
                return Err(capacity!(
                    "sector C({num_qubits}, {m}) = {} exceeds 32-bit indexing",
                    basis.dim()
                ));
            }
            bases.push(basis);
        }
        let positions = bases.iter().map(|b| b.positions_table()).collect();
        Ok(Self {
            num_qubits,
            n_min,
            n_max,
            bases,
            positions,
            table: PascalTable::new(num_qubits, (n_max + 1).min(num_qubits)),
            pair_slot: vec![u32::MAX; num_qubits * num_qubits],
            pairs: Vec::new(),
        })
    }

    /// Band `[n, n]`: the space of noiseless evolution from an `n`-particle state.
    pub fn single(num_qubits: usize, n: usize) -> Result<Self> {
        Self::new(num_qubits, n, n)
    }

    /// Precomputes partner tables for the given 1-based qubit pairs; XXZ gates on
    /// these pairs then run in time proportional to the number of mixed pairs.
    pub fn with_pairs(mut self, pairs: &[(usize, usize)]) -> Result<Self> {
        for &(q1, q2) in pairs {
            self.check_qubit(q1)?;
            self.check_qubit(q2)?;
            if q1 == q2 {
                return Err(domain!("pair ({q1}, {q2}) repeats a qubit"));
            }
            let (a, b) = (q1 - 1, q2 - 1);
            if self.pair_slot[a * self.num_qubits + b] != u32::MAX {
                continue;
            }
            let table = self.build_pair_table(a, b);
            let slot = self.pairs.len() as u32;
            self.pairs.push(table);
            self.pair_slot[a * self.num_qubits + b] = slot;
        }
        Ok(self)
    }

    fn build_pair_table(&self, a: usize, b: usize) -> PairTable {
        let others: Vec<u8> = (0..self.num_qubits)
            .filter(|&q| q != a && q != b)
            .map(|q| q as u8)
            .collect();
        let mut per_sector = Vec::with_capacity(self.bases.len());
        let mut buf = Vec::new();
        for m in self.n_min..=self.n_max {
            let mut entries = Vec::new();
            if m >= 1 && m - 1 <= others.len() {
                let k = m - 1;
                let count = crate::subspace::binom(others.len(), k).unwrap_or(0);
                let mut idx: Vec<u8> = (0..k as u8).collect();
                entries.reserve(count as usize);
                for _ in 0..count {
                    let rest: Vec<u8> = idx.iter().map(|&t| others[t as usize]).collect();
                    let i = self.rank_with(&rest, a as u8, &mut buf);
                    let j = self.rank_with(&rest, b as u8, &mut buf);
                    entries.push([i as u32, j as u32]);
                    crate::subspace::next_colex(&mut idx, others.len());
                }
            }
            per_sector.push(entries);
        }
        PairTable { per_sector }
    }

    fn rank_with(&self, rest: &[u8], extra: u8, buf: &mut Vec<u8>) -> u64 {
        buf.clear();
        buf.extend_from_slice(rest);
        let at = buf.partition_point(|&p| p < extra);
        buf.insert(at, extra);
        self.rank_positions(buf)
    }

    #[inline]
    fn rank_positions(&self, positions: &[u8]) -> u64 {
        positions
            .iter()
            .enumerate()
            .map(|(k, &c)| self.table.get(c as usize, k + 1))
            .sum()
    }

    /// Rank in sector `m - 1` after removing `c[j]`.
    #[inline]
    fn rank_removed(&self, c: &[u8], j: usize) -> u64 {
        let mut r = 0;
        for (k, &p) in c.iter().enumerate() {
            if k < j {
                r += self.table.get(p as usize, k + 1);
            } else if k > j {
                r += self.table.get(p as usize, k);
            }
        }
        r
    }

    /// Rank in sector `m + 1` after inserting `q` (absent from `c`) at slot `j`.
    #[inline]
    fn rank_inserted(&self, c: &[u8], q: usize, j: usize) -> u64 {
        let mut r = self.table.get(q, j + 1);
        for (k, &p) in c.iter().enumerate() {
            r += if k < j {
                self.table.get(p as usize, k + 1)
            } else {
                self.table.get(p as usize, k + 2)
            };
        }
        r
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn band(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    pub fn basis(&self, n: usize) -> Option<&SectorBasis> {
        self.contains(n).then(|| &self.bases[n - self.n_min])
    }

    pub fn dim(&self, n: usize) -> Option<usize> {
        self.basis(n).map(|b| b.dim() as usize)
    }

    /// Total number of amplitudes across the band.
    pub fn total_dim(&self) -> usize {
        self.bases.iter().map(|b| b.dim() as usize).sum()
    }

    /// Ascending 0-based set-bit positions of basis state `index` in sector `n`.
    pub fn positions(&self, n: usize, index: usize) -> &[u8] {
        &self.positions[n - self.n_min][index * n..(index + 1) * n]
    }

    pub(crate) fn check_qubit(&self, q: usize) -> Result<()> {
        if q == 0 || q > self.num_qubits {
            Err(domain!("qubit {q} outside [1, {}]", self.num_qubits))
        } else {
            Ok(())
        }
    }

    fn pair_table(&self, a: usize, b: usize) -> Option<(&PairTable, bool)> {
        let n = self.num_qubits;
        let direct = self.pair_slot[a * n + b];
        if direct != u32::MAX {
            return Some((&self.pairs[direct as usize], false));
        }
        let swapped = self.pair_slot[b * n + a];
        (swapped != u32::MAX).then(|| (&self.pairs[swapped as usize], true))
    }
}

/// Complex amplitudes over the sectors of a [`SectorSpace`], plus the
/// probability dropped out of the band.
#[derive(Clone, Debug)]
pub struct SectorState {
    space: Arc<SectorSpace>,
    sectors: Vec<Option<Vec<Complex64>>>,
    phase: Complex64,
    leaked: f64,
}

impl SectorState {
    /// The zero vector (no sector allocated).
    pub fn zero(space: Arc<SectorSpace>) -> Self {
        let count = space.bases.len();
        Self { space, sectors: vec![None; count], phase: ONE, leaked: 0.0 }
    }

    /// `|0...0>`; the band must contain sector 0.
    pub fn vacuum(space: Arc<SectorSpace>) -> Result<Self> {
        Self::product(space, &[])
    }

    /// Product state with qubits at the given 1-based positions excited.
    pub fn product(space: Arc<SectorSpace>, positions: &[usize]) -> Result<Self> {
        let n = positions.len();
        for w in positions.windows(2) {
            if w[0] >= w[1] {
                return Err(domain!("initial positions must be strictly increasing: {positions:?}"));
            }
        }
        for &q in positions {
            space.check_qubit(q)?;
        }
        if !space.contains(n) {
            return Err(domain!(
                "band [{}, {}] does not contain initial sector {n}",
                space.n_min,
                space.n_max
            ));
        }
        let c: Vec<u8> = positions.iter().map(|&q| (q - 1) as u8).collect();
        let index = space.rank_positions(&c) as usize;
        let mut state = Self::zero(space);
        let v = state.alloc(n);
        v[index] = ONE;
        Ok(state)
    }

    /// The same state on another space over the same qubits. Weight in sectors
    /// outside the new band is added to `leaked`.
    pub fn rebase(&self, space: Arc<SectorSpace>) -> Result<SectorState> {
        if space.num_qubits != self.space.num_qubits {
            return Err(domain!(
                "cannot move a {}-qubit state onto {} qubits",
                self.space.num_qubits,
                space.num_qubits
            ));
        }
        let mut out = Self::zero(space);
        out.phase = self.phase;
        out.leaked = self.leaked;
        for n in self.active_sectors() {
            let src = self.raw_sector(n).unwrap();
            if out.space.contains(n) {
                out.alloc(n).copy_from_slice(src);
            } else {
                out.leaked += src.iter().map(|a| a.norm_sqr()).sum::<f64>();
            }
        }
        Ok(out)
    }

    pub fn space(&self) -> &Arc<SectorSpace> {
        &self.space
    }

    pub fn num_qubits(&self) -> usize {
        self.space.num_qubits
    }

    pub fn band(&self) -> (usize, usize) {
        self.space.band()
    }

    /// Probability removed from the band by bit flips at its edges.
    pub fn leaked(&self) -> f64 {
        self.leaked
    }

    pub fn global_phase(&self) -> Complex64 {
        self.phase
    }

    fn offset(&self, n: usize) -> usize {
        n - self.space.n_min
    }

    fn alloc(&mut self, n: usize) -> &mut Vec<Complex64> {
        let off = self.offset(n);
        let dim = self.space.bases[off].dim() as usize;
        self.sectors[off].get_or_insert_with(|| vec![ZERO; dim])
    }

    /// Raw amplitudes of sector `n` without the global phase, if allocated.
    pub fn raw_sector(&self, n: usize) -> Option<&[Complex64]> {
        if !self.space.contains(n) {
            return None;
        }
        self.sectors[self.offset(n)].as_deref()
    }

    /// Sectors currently holding an allocated amplitude vector.
    pub fn active_sectors(&self) -> impl Iterator<Item = usize> + '_ {
        self.sectors
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(move |(off, _)| off + self.space.n_min)
    }

    pub fn max_active_sector(&self) -> Option<usize> {
        self.active_sectors().last()
    }

    /// Amplitude of basis state `index` in sector `n`, global phase included.
    pub fn amplitude(&self, n: usize, index: usize) -> Result<Complex64> {
        let dim = self
            .space
            .dim(n)
            .ok_or_else(|| domain!("sector {n} outside band {:?}", self.band()))?;
        if index >= dim {
            return Err(domain!("index {index} outside sector {n} of dimension {dim}"));
        }
        Ok(self.raw_sector(n).map_or(ZERO, |v| v[index] * self.phase))
    }

    /// Amplitudes of sector `n` with the global phase applied.
    pub fn amplitudes(&self, n: usize) -> Result<Vec<Complex64>> {
        let dim = self
            .space
            .dim(n)
            .ok_or_else(|| domain!("sector {n} outside band {:?}", self.band()))?;
        Ok(match self.raw_sector(n) {
            Some(v) => v.iter().map(|&a| a * self.phase).collect(),
            None => vec![ZERO; dim],
        })
    }

    /// `|amplitude|^2` over sector `n` in rank order.
    pub fn probabilities(&self, n: usize) -> Result<Vec<f64>> {
        let dim = self
            .space
            .dim(n)
            .ok_or_else(|| domain!("sector {n} outside band {:?}", self.band()))?;
        Ok(match self.raw_sector(n) {
            Some(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            None => vec![0.0; dim],
        })
    }

    /// Squared norm of each band sector, in band order.
    pub fn sector_norms(&self) -> Vec<(usize, f64)> {
        (self.space.n_min..=self.space.n_max)
            .map(|n| {
                let w = self.raw_sector(n).map_or(0.0, |v| v.iter().map(|a| a.norm_sqr()).sum());
                (n, w)
            })
            .collect()
    }

    /// Squared norm inside the band.
    pub fn norm_sqr(&self) -> f64 {
        self.sector_norms().iter().map(|&(_, w)| w).sum()
    }

    /// In-band norm plus leaked probability; 1 for a normalized state.
    pub fn total_probability(&self) -> f64 {
        self.norm_sqr() + self.leaked
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let total = self.total_probability();
        if (total - 1.0).abs() > tol {
            return Err(integrity!("state normalization {total} deviates from 1 by more than {tol}"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sectors.iter().all(|s| s.is_none())
    }

    /// Single-qubit `Rz(theta)` on 1-based `qubit`.
    pub fn apply_rz(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.apply_rz_layer(&[(qubit, theta)])
    }

    /// A set of `Rz` gates applied in one diagonal pass. All `Rz` commute, so any
    /// list (repeated qubits included) is applied exactly.
    pub fn apply_rz_layer(&mut self, gates: &[(usize, f64)]) -> Result<()> {
        let mut factors = vec![ONE; self.space.num_qubits];
        let mut total = 0.0;
        for &(q, theta) in gates {
            self.space.check_qubit(q)?;
            factors[q - 1] *= Complex64::from_polar(1.0, theta);
            total += theta;
        }
        let space = Arc::clone(&self.space);
        for (off, slot) in self.sectors.iter_mut().enumerate() {
            let m = off + space.n_min;
            let Some(v) = slot.as_mut() else { continue };
            if m == 0 {
                continue;
            }
            let pos = &space.positions[off];
            for (amp, c) in v.iter_mut().zip(pos.chunks_exact(m)) {
                let mut f = factors[c[0] as usize];
                for &p in &c[1..] {
                    f *= factors[p as usize];
                }
                *amp *= f;
            }
        }
        self.phase *= Complex64::from_polar(1.0, -0.5 * total);
        Ok(())
    }

    /// `w(alpha1, alpha2)` on 1-based qubits `q1 != q2`.
    pub fn apply_xxz(&mut self, q1: usize, q2: usize, alpha1: f64, alpha2: f64) -> Result<()> {
        self.space.check_qubit(q1)?;
        self.space.check_qubit(q2)?;
        if q1 == q2 {
            return Err(domain!("xxz on a single qubit {q1}"));
        }
        let (s, c) = (2.0 * alpha1).sin_cos();
        let rot = Complex64::from_polar(1.0, -2.0 * alpha2);
        let diag = rot * c;
        let off_diag = rot * Complex64::new(0.0, s);
        let (a, b) = (q1 - 1, q2 - 1);
        let space = Arc::clone(&self.space);
        match space.pair_table(a, b) {
            Some((table, _)) => {
                // The 2x2 block is symmetric, so pair orientation is irrelevant.
                for (slot, entries) in self.sectors.iter_mut().zip(&table.per_sector) {
                    let Some(v) = slot.as_mut() else { continue };
                    for &[i, j] in entries {
                        let (i, j) = (i as usize, j as usize);
                        let (x, y) = (v[i], v[j]);
                        v[i] = diag * x + off_diag * y;
                        v[j] = off_diag * x + diag * y;
                    }
                }
            }
            None => {
                let mut buf = Vec::new();
                for (off, slot) in self.sectors.iter_mut().enumerate() {
                    let m = off + space.n_min;
                    let Some(v) = slot.as_mut() else { continue };
                    if m == 0 || m == space.num_qubits {
                        continue;
                    }
                    let pos = &space.positions[off];
                    for i in 0..v.len() {
                        let c = &pos[i * m..(i + 1) * m];
                        if !c.contains(&(a as u8)) || c.contains(&(b as u8)) {
                            continue;
                        }
                        buf.clear();
                        buf.extend(c.iter().copied().filter(|&p| p != a as u8));
                        let at = buf.partition_point(|&p| p < b as u8);
                        buf.insert(at, b as u8);
                        let j = space.rank_positions(&buf) as usize;
                        let (x, y) = (v[i], v[j]);
                        v[i] = diag * x + off_diag * y;
                        v[j] = off_diag * x + diag * y;
                    }
                }
            }
        }
        self.phase *= Complex64::from_polar(1.0, alpha2);
        Ok(())
    }

    /// Pauli on 1-based `qubit`. X and Y move amplitude between neighbouring
    /// sectors; whatever would land outside the band is added to `leaked`.
    pub fn apply_pauli(&mut self, qubit: usize, pauli: Pauli) -> Result<()> {
        self.space.check_qubit(qubit)?;
        let q = qubit - 1;
        match pauli {
            Pauli::I => {}
            Pauli::Z => self.apply_z(q),
            Pauli::X => self.apply_flip(q, false),
            Pauli::Y => self.apply_flip(q, true),
        }
        Ok(())
    }

    /// Two-qubit Pauli `p1 (x) p2` on `(q1, q2)`; `I (x) I` is rejected.
    pub fn apply_pauli2(&mut self, q1: usize, q2: usize, p1: Pauli, p2: Pauli) -> Result<()> {
        if q1 == q2 {
            return Err(domain!("two-qubit Pauli on a single qubit {q1}"));
        }
        if p1 == Pauli::I && p2 == Pauli::I {
            return Err(domain!("I (x) I is not an error operator"));
        }
        self.space.check_qubit(q1)?;
        self.space.check_qubit(q2)?;
        self.apply_pauli(q1, p1)?;
        self.apply_pauli(q2, p2)
    }

    fn apply_z(&mut self, q: usize) {
        let space = Arc::clone(&self.space);
        for (off, slot) in self.sectors.iter_mut().enumerate() {
            let m = off + space.n_min;
            let Some(v) = slot.as_mut() else { continue };
            if m == 0 {
                continue;
            }
            for (amp, c) in v.iter_mut().zip(space.positions[off].chunks_exact(m)) {
                if c.contains(&(q as u8)) {
                    *amp = -*amp;
                }
            }
        }
    }

    fn apply_flip(&mut self, q: usize, with_y_phase: bool) {
        let space = Arc::clone(&self.space);
        let count = self.sectors.len();
        let mut next: Vec<Option<Vec<Complex64>>> = vec![None; count];
        let up_phase = if with_y_phase { Complex64::new(0.0, 1.0) } else { ONE };
        let down_phase = if with_y_phase { Complex64::new(0.0, -1.0) } else { ONE };
        let qb = q as u8;
        for off in 0..count {
            let Some(v) = self.sectors[off].take() else { continue };
            let m = off + space.n_min;
            let up = (m < space.n_max).then_some(off + 1);
            let down = (m > space.n_min).then_some(off.wrapping_sub(1));
            if let Some(u) = up {
                let dim = space.bases[u].dim() as usize;
                next[u].get_or_insert_with(|| vec![ZERO; dim]);
            }
            if let Some(d) = down {
                let dim = space.bases[d].dim() as usize;
                next[d].get_or_insert_with(|| vec![ZERO; dim]);
            }
            let pos = &space.positions[off];
            for (i, &amp) in v.iter().enumerate() {
                let c = &pos[i * m..(i + 1) * m];
                let j = c.partition_point(|&p| p < qb);
                if j < m && c[j] == qb {
                    match down {
                        Some(d) => {
                            let r = space.rank_removed(c, j) as usize;
                            next[d].as_mut().unwrap()[r] = amp * down_phase;
                        }
                        None => self.leaked += amp.norm_sqr(),
                    }
                } else {
                    match up {
                        Some(u) => {
                            let r = space.rank_inserted(c, q, j) as usize;
                            next[u].as_mut().unwrap()[r] = amp * up_phase;
                        }
                        None => self.leaked += amp.norm_sqr(),
                    }
                }
            }
        }
        self.sectors = next;
    }

    /// Drops (without counting as leaked) every sector farther than `radius`
    /// from `target`. Used when only the overlap with a sector-`target` state
    /// is wanted and at most `radius` sector changes remain.
    pub fn retain_near(&mut self, target: usize, radius: usize) {
        let n_min = self.space.n_min;
        for (off, slot) in self.sectors.iter_mut().enumerate() {
            if (off + n_min).abs_diff(target) > radius {
                *slot = None;
            }
        }
    }

    /// `<self|other>` over the sectors both bands share.
    pub fn inner(&self, other: &SectorState) -> Result<Complex64> {
        inner(self, other)
    }
}

/// `<a|b>` summed over the intersection of the two bands.
pub fn inner(a: &SectorState, b: &SectorState) -> Result<Complex64> {
    if a.num_qubits() != b.num_qubits() {
        return Err(domain!(
            "inner product of {}-qubit and {}-qubit states",
            a.num_qubits(),
            b.num_qubits()
        ));
    }
    let (lo, hi) = (a.space.n_min.max(b.space.n_min), a.space.n_max.min(b.space.n_max));
    let mut acc = ZERO;
    for n in lo..=hi {
        if let (Some(x), Some(y)) = (a.raw_sector(n), b.raw_sector(n)) {
            acc += x.iter().zip(y).map(|(p, q)| p.conj() * q).sum::<Complex64>();
        }
    }
    Ok(acc * a.phase.conj() * b.phase)
}

/// Amplitudes of one sector as read back from a binary dump.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorDump {
    pub num_qubits: usize,
    pub particles: usize,
    pub amplitudes: Vec<Complex64>,
}

/// Binary dump of sector `n`: a 16-byte little-endian header of `u32` fields
/// `(N, n, dim, reserved = 0)` followed by `dim` interleaved `(re, im)` `f64`s.
pub fn encode_sector(state: &SectorState, n: usize) -> Result<Vec<u8>> {
    let amps = state.amplitudes(n)?;
    let mut out = Vec::with_capacity(16 + 16 * amps.len());
    out.extend_from_slice(&(state.num_qubits() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(amps.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for a in amps {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_sector(bytes: &[u8]) -> Result<SectorDump> {
    if bytes.len() < 16 {
        return Err(integrity!("sector dump shorter than its 16-byte header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (num_qubits, particles, dim) = (word(0), word(1), word(2));
    let expected = crate::subspace::binom(num_qubits, particles)? as usize;
    if dim != expected {
        return Err(integrity!("dump dimension {dim} != C({num_qubits}, {particles}) = {expected}"));
    }
    if bytes.len() != 16 + 16 * dim {
        return Err(integrity!("dump length {} does not match dimension {dim}", bytes.len()));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[16 + 8 * k..24 + 8 * k].try_into().unwrap());
    let amplitudes = (0..dim).map(|i| Complex64::new(f(2 * i), f(2 * i + 1))).collect();
    Ok(SectorDump { num_qubits, particles, amplitudes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::BitString;
    use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_8, PI};
    use proptest::prelude::*;

    fn space(n: usize, lo: usize, hi: usize) -> Arc<SectorSpace> {
        Arc::new(SectorSpace::new(n, lo, hi).unwrap())
    }

    fn index_of(space: &SectorSpace, bits: &str) -> (usize, usize) {
        let b = BitString::from_binary_str(bits).unwrap();
        let n = b.count_ones();
        (n, space.basis(n).unwrap().rank(&b).unwrap() as usize)
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn product_states() {
        let sp = space(4, 0, 4);
        let s = SectorState::product(sp.clone(), &[1]).unwrap();
        let (n, i) = index_of(&sp, "0001");
        assert!(close(s.amplitude(n, i).unwrap(), ONE));
        assert_eq!(s.active_sectors().collect::<Vec<_>>(), vec![1]);
        let v = SectorState::product(sp.clone(), &[]).unwrap();
        assert!(close(v.amplitude(0, 0).unwrap(), ONE));
        assert_eq!(v.leaked(), 0.0);

        let sp16 = space(16, 3, 3);
        let o3 = SectorState::product(sp16.clone(), &[1, 2, 3]).unwrap();
        let probs = o3.probabilities(3).unwrap();
        assert_eq!(probs[0], 1.0, "qubits 1..3 excited is the colex-first state");

        assert!(SectorState::product(sp.clone(), &[2, 2]).is_err());
        assert!(SectorState::product(sp.clone(), &[3, 1]).is_err());
        assert!(SectorState::product(sp.clone(), &[5]).is_err());
        assert!(SectorState::product(sp16, &[1]).is_err(), "sector 1 outside band [3,3]");
    }

    fn spread_state(sp: Arc<SectorSpace>, n: usize) -> SectorState {
        let positions: Vec<usize> = (1..=n).collect();
        let mut s = SectorState::product(sp.clone(), &positions).unwrap();
        let nq = sp.num_qubits();
        for layer in 0..6 {
            for q in 1..nq {
                s.apply_xxz(q, q + 1, 0.37 + 0.1 * layer as f64 + q as f64 * 0.01, 0.2 * q as f64)
                    .unwrap();
            }
            let layer_angles: Vec<(usize, f64)> =
                (1..=nq).map(|q| (q, 0.3 * q as f64 + layer as f64)).collect();
            s.apply_rz_layer(&layer_angles).unwrap();
        }
        s
    }

    #[test]
    fn rz_examples() {
        let sp = space(5, 0, 5);
        let s0 = spread_state(sp.clone(), 2);
        let mut s = s0.clone();
        s.apply_rz(3, 0.0).unwrap();
        for i in 0..sp.dim(2).unwrap() {
            assert!(close(s.amplitude(2, i).unwrap(), s0.amplitude(2, i).unwrap()));
        }
        s.apply_rz(2, 1.234).unwrap();
        let (p0, p1) = (s0.probabilities(2).unwrap(), s.probabilities(2).unwrap());
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-14);
        }
        // Rz(2 pi) = exp(-i pi Z) = -I.
        let mut t = s0.clone();
        t.apply_rz(4, 2.0 * PI).unwrap();
        for i in 0..sp.dim(2).unwrap() {
            assert!(close(t.amplitude(2, i).unwrap(), -s0.amplitude(2, i).unwrap()));
        }
    }

    #[test]
    fn rz_phases_follow_convention() {
        let sp = space(2, 0, 2);
        let theta = 0.7;
        let mut s = SectorState::product(sp.clone(), &[1]).unwrap();
        s.apply_rz(1, theta).unwrap();
        // qubit 1 is |1>: e^{+i t/2}
        assert!(close(s.amplitude(1, 0).unwrap(), Complex64::from_polar(1.0, theta / 2.0)));
        let mut s = SectorState::product(sp, &[1]).unwrap();
        s.apply_rz(2, theta).unwrap();
        assert!(close(s.amplitude(1, 0).unwrap(), Complex64::from_polar(1.0, -theta / 2.0)));
    }

    fn xxz_examples_on(sp: Arc<SectorSpace>) {
        // w(pi/8, 0)|01> = (|01> + i|10>)/sqrt 2, with qubit 1 excited in |01>.
        let mut s = SectorState::product(sp.clone(), &[1]).unwrap();
        s.apply_xxz(1, 2, FRAC_PI_8, 0.0).unwrap();
        let (_, i01) = index_of(&sp, "01");
        let (_, i10) = index_of(&sp, "10");
        assert!(close(s.amplitude(1, i01).unwrap(), Complex64::new(FRAC_1_SQRT_2, 0.0)));
        assert!(close(s.amplitude(1, i10).unwrap(), Complex64::new(0.0, FRAC_1_SQRT_2)));
        let probs = s.probabilities(1).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-15 && (probs[1] - 0.5).abs() < 1e-15);

        let (a1, a2) = (1.1, -0.4);
        let mut v = SectorState::vacuum(sp.clone()).unwrap();
        v.apply_xxz(1, 2, a1, a2).unwrap();
        assert!(close(v.amplitude(0, 0).unwrap(), Complex64::from_polar(1.0, a2)));

        let mut id = SectorState::product(sp.clone(), &[2]).unwrap();
        id.apply_xxz(1, 2, 0.0, 0.0).unwrap();
        assert!(close(id.amplitude(1, i10).unwrap(), ONE));

        assert!(s.apply_xxz(1, 1, 0.1, 0.1).is_err());
    }

    #[test]
    fn xxz_examples_generic_and_tabled() {
        xxz_examples_on(space(2, 0, 2));
        xxz_examples_on(Arc::new(SectorSpace::new(2, 0, 2).unwrap().with_pairs(&[(1, 2)]).unwrap()));
        xxz_examples_on(Arc::new(SectorSpace::new(2, 0, 2).unwrap().with_pairs(&[(2, 1)]).unwrap()));
    }

    #[test]
    fn tabled_and_generic_kernels_agree() {
        let nq = 7;
        let pairs: Vec<(usize, usize)> = vec![(1, 2), (3, 7), (6, 2), (4, 5)];
        let plain = space(nq, 0, nq);
        let tabled = Arc::new(SectorSpace::new(nq, 0, nq).unwrap().with_pairs(&pairs).unwrap());
        for n in 0..=nq {
            let positions: Vec<usize> = (1..=n).collect();
            let mut a = SectorState::product(plain.clone(), &positions).unwrap();
            let mut b = SectorState::product(tabled.clone(), &positions).unwrap();
            for (k, &(q1, q2)) in pairs.iter().cycle().take(20).enumerate() {
                let (a1, a2) = (0.3 + 0.17 * k as f64, 1.0 - 0.11 * k as f64);
                a.apply_xxz(q1, q2, a1, a2).unwrap();
                b.apply_xxz(q1, q2, a1, a2).unwrap();
                a.apply_rz((k % nq) + 1, 0.5).unwrap();
                b.apply_rz((k % nq) + 1, 0.5).unwrap();
            }
            let x = a.amplitudes(n).unwrap();
            let y = b.amplitudes(n).unwrap();
            for (p, q) in x.iter().zip(&y) {
                assert!(close(*p, *q));
            }
        }
    }

    #[test]
    fn pauli_examples() {
        let sp = space(4, 0, 4);
        let mut s = SectorState::vacuum(sp.clone()).unwrap();
        s.apply_pauli(1, Pauli::X).unwrap();
        let (n, i) = index_of(&sp, "0001");
        assert!(close(s.amplitude(n, i).unwrap(), ONE));

        let mut z = SectorState::product(sp.clone(), &[2]).unwrap();
        z.apply_pauli(2, Pauli::Z).unwrap();
        let (n, i) = index_of(&sp, "0010");
        assert!(close(z.amplitude(n, i).unwrap(), -ONE));

        let mut y = SectorState::vacuum(sp.clone()).unwrap();
        y.apply_pauli(3, Pauli::Y).unwrap();
        let (n, i) = index_of(&sp, "0100");
        assert!(close(y.amplitude(n, i).unwrap(), Complex64::new(0.0, 1.0)));
        y.apply_pauli(3, Pauli::Y).unwrap();
        assert!(close(y.amplitude(0, 0).unwrap(), ONE), "Y Y = I");
    }

    #[test]
    fn pauli_band_boundary_bookkeeping() {
        let wide = space(4, 0, 3);
        let mut s = SectorState::product(wide, &[2]).unwrap();
        s.apply_pauli(2, Pauli::X).unwrap();
        assert!(close(s.amplitude(0, 0).unwrap(), ONE));
        assert_eq!(s.leaked(), 0.0);

        let narrow = space(4, 1, 3);
        let mut t = SectorState::product(narrow.clone(), &[2]).unwrap();
        t.apply_xxz(2, 3, FRAC_PI_8, 0.0).unwrap();
        t.apply_pauli(2, Pauli::X).unwrap();
        // Half the weight had the excitation on qubit 2 and falls to sector 0.
        assert!((t.leaked() - 0.5).abs() < 1e-14);
        assert!((t.total_probability() - 1.0).abs() < 1e-14);
        let (n, i) = index_of(&narrow, "0110");
        assert!((t.probabilities(n).unwrap()[i] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn pauli2_examples() {
        let sp = space(4, 0, 4);
        let mut a = spread_state(sp.clone(), 2);
        let mut b = a.clone();
        a.apply_pauli2(1, 3, Pauli::X, Pauli::I).unwrap();
        b.apply_pauli(1, Pauli::X).unwrap();
        for n in 0..=4 {
            let (x, y) = (a.amplitudes(n).unwrap(), b.amplitudes(n).unwrap());
            assert!(x.iter().zip(&y).all(|(p, q)| close(*p, *q)));
        }

        let mut zz = SectorState::product(sp.clone(), &[1, 2]).unwrap();
        zz.apply_pauli2(1, 2, Pauli::Z, Pauli::Z).unwrap();
        assert!(close(zz.amplitude(2, 0).unwrap(), ONE));

        let mut xx = SectorState::product(sp.clone(), &[1]).unwrap();
        xx.apply_pauli2(1, 2, Pauli::X, Pauli::X).unwrap();
        let (n, i) = index_of(&sp, "0010");
        assert_eq!(n, 1);
        assert!(close(xx.amplitude(n, i).unwrap(), ONE));

        assert!(xx.apply_pauli2(1, 2, Pauli::I, Pauli::I).is_err());
        assert!(xx.apply_pauli2(2, 2, Pauli::X, Pauli::I).is_err());
    }

    #[test]
    fn probabilities_and_inner() {
        let sp = space(4, 1, 2);
        let s = SectorState::product(sp.clone(), &[3]).unwrap();
        let p = s.probabilities(1).unwrap();
        assert_eq!(p.iter().filter(|&&x| x == 1.0).count(), 1);
        assert!(s.probabilities(0).is_err());
        assert_eq!(s.probabilities(2).unwrap(), vec![0.0; 6]);

        let t = spread_state(space(6, 0, 6), 3);
        assert!((t.inner(&t).unwrap() - ONE).norm() < 1e-12);
        let a = SectorState::product(sp.clone(), &[1]).unwrap();
        let b = SectorState::product(sp.clone(), &[2]).unwrap();
        assert_eq!(a.inner(&b).unwrap(), ZERO);
        let c = SectorState::product(sp.clone(), &[1, 2]).unwrap();
        assert_eq!(a.inner(&c).unwrap(), ZERO);
        let other = SectorState::product(space(5, 1, 1), &[1]).unwrap();
        assert!(a.inner(&other).is_err());
    }

    #[test]
    fn global_phase_is_reflected_in_inner_products() {
        let sp = space(3, 0, 3);
        let a = SectorState::product(sp.clone(), &[1]).unwrap();
        let mut b = a.clone();
        b.apply_xxz(2, 3, 0.0, 0.9).unwrap(); // acts as e^{i 0.9} on |00> of (2,3)
        let ov = a.inner(&b).unwrap();
        assert!(close(ov, Complex64::from_polar(1.0, 0.9)));
    }

    #[test]
    fn dump_round_trip_and_layout() {
        let s = spread_state(space(6, 2, 3), 2);
        let bytes = encode_sector(&s, 2).unwrap();
        assert_eq!(&bytes[0..4], &6u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &15u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &0u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 15 * 16);
        let dump = decode_sector(&bytes).unwrap();
        assert_eq!(dump.amplitudes, s.amplitudes(2).unwrap());
        assert!(decode_sector(&bytes[..40]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gates_preserve_norm_and_sector_weights(
            nq in 3usize..=8,
            seed_angles in proptest::collection::vec(0.0f64..6.3, 24),
            qa in 1usize..=8,
            qb in 1usize..=8,
        ) {
            let (q1, q2) = (qa.min(nq), qb.min(nq));
            prop_assume!(q1 != q2);
            let sp = space(nq, 0, nq);
            let mut s = spread_state(sp, 2);
            s.apply_pauli(1, Pauli::X).unwrap(); // populate sectors 1 and 3
            let before = s.sector_norms();
            for chunk in seed_angles.chunks(3) {
                s.apply_xxz(q1, q2, chunk[0], chunk[1]).unwrap();
                s.apply_rz(q1, chunk[2]).unwrap();
                s.apply_pauli(q2, Pauli::Z).unwrap();
            }
            let after = s.sector_norms();
            for ((n, x), (_, y)) in before.iter().zip(&after) {
                prop_assert!((x - y).abs() < 1e-12, "sector {} weight changed", n);
            }
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn xxz_is_phase_covariant(a1 in 0.0f64..6.3, a2 in 0.0f64..6.3, t in 0.0f64..6.3) {
            let sp = space(5, 0, 5);
            let mut a = spread_state(sp.clone(), 2);
            let mut b = a.clone();
            a.apply_xxz(2, 4, a1, a2).unwrap();
            b.apply_rz_layer(&[(2, t), (4, t)]).unwrap();
            b.apply_xxz(2, 4, a1, a2).unwrap();
            b.apply_rz_layer(&[(2, -t), (4, -t)]).unwrap();
            let (p, q) = (a.probabilities(2).unwrap(), b.probabilities(2).unwrap());
            for (x, y) in p.iter().zip(&q) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
