//! Fixed-particle-number sectors.
//!
//! A sector `G_n` is the set of `N`-bit strings with popcount `n`. Its elements
//! are indexed densely by the colexicographic combinadic rank: for set-bit
//! positions `c_0 < c_1 < ... < c_{n-1}` (0-based),
//!
//! ```text
//! rank = C(c_0, 1) + C(c_1, 2) + ... + C(c_{n-1}, n)
//! ```
//!
//! Colex order of the positions coincides with increasing integer value of the
//! bitstring, so rank 0 is `0..011..1` and the last rank is `11..10..0`. This
//! ordering is global: every module (and every dump file) uses it.
//!
//! Qubit `l` (1-based) is bit `l - 1`; the integer value of a bitstring is
//! `b_N ... b_1` read as binary.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{capacity, domain, Result};

/// Largest supported register width.
pub const MAX_QUBITS: usize = 256;

/// Binomials above this bound are rejected.
pub const BINOM_LIMIT: u64 = 1 << 63;

/// `C(n_total, k)` evaluated exactly in 64 bits.
///
/// Returns a capacity error when the value exceeds 2^63.
pub fn binom(n_total: usize, k: usize) -> Result<u64> {
    if k > n_total {
        return Err(domain!("binom: k = {k} exceeds n = {n_total}"));
    }
    let k = k.min(n_total - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc = C(n, i) here, and C(n, i+1) = C(n, i) * (n - i) / (i + 1) is exact.
        acc = acc * (n_total - i) as u128 / (i + 1) as u128;
        if acc > BINOM_LIMIT as u128 {
            return Err(capacity!("binom: C({n_total}, {k}) exceeds 2^63"));
        }
    }
    Ok(acc as u64)
}

/// Pascal triangle `C(m, k)` for `m <= rows`, `k <= cols`, saturating at `u64::MAX`.
#[derive(Clone, Debug)]
pub struct PascalTable {
    cols: usize,
    data: Vec<u64>,
}

impl PascalTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        let width = cols + 1;
        let mut data = vec![0u64; (rows + 1) * width];
        for m in 0..=rows {
            data[m * width] = 1;
            for k in 1..=cols.min(m) {
                let above = data[(m - 1) * width + k];
                let diag = data[(m - 1) * width + k - 1];
                data[m * width + k] = above.saturating_add(diag);
            }
        }
        Self { cols, data }
    }

    /// `C(m, k)`; zero when `k > m`.
    #[inline(always)]
    pub fn get(&self, m: usize, k: usize) -> u64 {
        debug_assert!(k <= self.cols);
        self.data[m * (self.cols + 1) + k]
    }
}

/// An `N`-bit computational basis label, `N <= 256`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitString([u64; 4]);

impl BitString {
    pub const ZERO: BitString = BitString([0; 4]);

    pub fn from_u128(value: u128) -> Self {
        BitString([value as u64, (value >> 64) as u64, 0, 0])
    }

    /// Bitstring with the given 0-based bit positions set.
    pub fn from_bits<I: IntoIterator<Item = usize>>(bits: I) -> Self {
        let mut out = Self::ZERO;
        for b in bits {
            out.set(b);
        }
        out
    }

    /// Parses `b_N ... b_1` written as a string of `0`/`1` characters.
    pub fn from_binary_str(s: &str) -> Result<Self> {
        let len = s.len();
        if len > MAX_QUBITS {
            return Err(capacity!("bitstring longer than {MAX_QUBITS} bits"));
        }
        let mut out = Self::ZERO;
        for (i, ch) in s.bytes().enumerate() {
            match ch {
                b'0' => {}
                b'1' => out.set(len - 1 - i),
                _ => return Err(domain!("invalid binary digit {:?}", ch as char)),
            }
        }
        Ok(out)
    }

    /// Parses a hexadecimal value (no prefix).
    pub fn from_hex(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_QUBITS / 4 {
            return Err(domain!("bad hex bitstring length {}", s.len()));
        }
        let mut out = Self::ZERO;
        for (i, ch) in s.bytes().rev().enumerate() {
            let nibble = (ch as char)
                .to_digit(16)
                .ok_or_else(|| domain!("invalid hex digit {:?}", ch as char))?
                as u64;
            out.0[i / 16] |= nibble << (4 * (i % 16));
        }
        Ok(out)
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.0[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        self.0[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.0[i >> 6] ^= 1 << (i & 63);
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Highest set bit plus one (0 for the empty string).
    pub fn bit_len(&self) -> usize {
        for w in (0..4).rev() {
            if self.0[w] != 0 {
                return 64 * w + 64 - self.0[w].leading_zeros() as usize;
            }
        }
        0
    }

    /// Set-bit positions in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(64 * w + tz)
            })
        })
    }

    /// Integer value when it fits in 64 bits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.0[1] | self.0[2] | self.0[3] == 0 {
            Some(self.0[0])
        } else {
            None
        }
    }

    /// Zero-padded lowercase hex with `ceil(num_qubits / 4)` digits.
    pub fn to_hex(&self, num_qubits: usize) -> String {
        let digits = num_qubits.div_ceil(4).max(1);
        let mut s = String::with_capacity(digits);
        for i in (0..digits).rev() {
            let nibble = (self.0[i / 16] >> (4 * (i % 16))) & 0xf;
            s.push(core::char::from_digit(nibble as u32, 16).unwrap());
        }
        s
    }

    /// `b_N ... b_1` as `0`/`1` characters.
    pub fn to_binary_string(&self, num_qubits: usize) -> String {
        (0..num_qubits)
            .rev()
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({})", self.to_binary_string(self.bit_len().max(1)))
    }
}

/// Particle number of a basis state: its popcount.
pub fn sector_of(bits: &BitString) -> usize {
    bits.count_ones()
}

/// Dense index map for the sector of `N`-bit strings with `n` set bits.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    num_qubits: usize,
    particles: usize,
    dim: u64,
    table: PascalTable,
}

impl SectorBasis {
    pub fn new(num_qubits: usize, particles: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(domain!("qubit count {num_qubits} outside [1, {MAX_QUBITS}]"));
        }
        let dim = binom(num_qubits, particles)?;
        // One extra column so ranks in the neighbouring sector n+1 can be formed.
        let table = PascalTable::new(num_qubits, (particles + 1).min(num_qubits));
        Ok(Self { num_qubits, particles, dim, table })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    /// Rank of ascending 0-based positions; no validation.
    #[inline]
    pub fn rank_positions(&self, positions: &[u8]) -> u64 {
        positions
            .iter()
            .enumerate()
            .map(|(k, &c)| self.table.get(c as usize, k + 1))
            .sum()
    }

    pub fn rank(&self, bits: &BitString) -> Result<u64> {
        let pop = bits.count_ones();
        if pop != self.particles {
            return Err(domain!(
                "rank: popcount {pop} does not match sector n = {}",
                self.particles
            ));
        }
        if bits.bit_len() > self.num_qubits {
            return Err(domain!("rank: bit set beyond qubit {}", self.num_qubits));
        }
        Ok(bits
            .ones()
            .enumerate()
            .map(|(k, c)| self.table.get(c, k + 1))
            .sum())
    }

    /// Writes the ascending positions of `index` into `out` (length `n`).
    pub fn unrank_positions(&self, mut index: u64, out: &mut [u8]) {
        debug_assert_eq!(out.len(), self.particles);
        let mut hi = self.num_qubits;
        for k in (1..=self.particles).rev() {
            // Largest c < hi with C(c, k) <= index.
            let mut c = hi - 1;
            while self.table.get(c, k) > index {
                c -= 1;
            }
            out[k - 1] = c as u8;
            index -= self.table.get(c, k);
            hi = c;
        }
    }

    pub fn unrank(&self, index: u64) -> Result<BitString> {
        if index >= self.dim {
            return Err(domain!(
                "unrank: index {index} outside [0, {}) for C({}, {})",
                self.dim,
                self.num_qubits,
                self.particles
            ));
        }
        let mut pos = vec![0u8; self.particles];
        self.unrank_positions(index, &mut pos);
        Ok(BitString::from_bits(pos.iter().map(|&c| c as usize)))
    }

    /// All position tuples in rank order, flattened (`dim * n` bytes).
    pub fn positions_table(&self) -> Vec<u8> {
        let n = self.particles;
        let mut out = Vec::with_capacity(self.dim as usize * n);
        let mut c: Vec<u8> = (0..n as u8).collect();
        for _ in 0..self.dim {
            out.extend_from_slice(&c);
            next_colex(&mut c, self.num_qubits);
        }
        out
    }

    /// Basis states in rank order.
    pub fn iter(&self) -> impl Iterator<Item = BitString> + '_ {
        let n = self.particles;
        let mut c: Vec<u8> = (0..n as u8).collect();
        (0..self.dim).map(move |_| {
            let b = BitString::from_bits(c.iter().map(|&p| p as usize));
            next_colex(&mut c, self.num_qubits);
            b
        })
    }
}

/// Advances ascending positions to their colex successor. Wraps silently after
/// the last combination; callers bound iteration by the dimension.
pub(crate) fn next_colex(c: &mut [u8], num_qubits: usize) {
    let n = c.len();
    for j in 0..n {
        let limit = if j + 1 < n { c[j + 1] as usize } else { num_qubits };
        if (c[j] as usize) + 1 < limit {
            c[j] += 1;
            for (i, slot) in c.iter_mut().enumerate().take(j) {
                *slot = i as u8;
            }
            return;
        }
    }
}
