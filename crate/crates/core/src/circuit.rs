//! Square-lattice random circuits built from `Rz` layers and XXZ pair gates.
//!
//! A circuit starts with `X` gates preparing the initial product state, then runs
//! `depth` layers cycling through A, B, C, D, and ends with a measurement of all
//! qubits. Each layer applies a fresh uniform `Rz` angle to every qubit followed
//! by XXZ gates on that layer's disjoint neighbour pairs.
//!
//! Qubit numbering is row-major and 1-based: the qubit at column `x`, row `y`
//! of a `rows x cols` lattice is `y * cols + x + 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_8;
use core::fmt::Write as _;

use crate::error::{domain, Result};
use crate::rng::{self, StreamKind};
use crate::subspace::MAX_QUBITS;

/// XXZ angles used in [`AngleMode::Fixed`].
pub const FIXED_ALPHA1: f64 = FRAC_PI_8;
pub const FIXED_ALPHA2: f64 = 0.0;

/// Lattice site: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Open-boundary `rows x cols` square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticeLayout {
    rows: usize,
    cols: usize,
}

impl LatticeLayout {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(domain!("lattice {rows}x{cols} is empty"));
        }
        if rows * cols > MAX_QUBITS {
            return Err(domain!("lattice {rows}x{cols} exceeds {MAX_QUBITS} qubits"));
        }
        Ok(Self { rows, cols })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_qubits(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.cols && c.y < self.rows
    }

    /// 1-based qubit at `c`.
    pub fn qubit(&self, c: Coord) -> Result<usize> {
        if !self.contains(c) {
            return Err(domain!(
                "coordinate ({}, {}) outside {}x{} lattice",
                c.x,
                c.y,
                self.rows,
                self.cols
            ));
        }
        Ok(c.y * self.cols + c.x + 1)
    }

    pub fn coord(&self, qubit: usize) -> Coord {
        let i = qubit - 1;
        Coord::new(i % self.cols, i / self.cols)
    }

    /// All nearest-neighbour edges as 1-based qubit pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        Layer::ALL.iter().flat_map(|&l| layer_pairs(self, l)).collect()
    }

    pub fn neighbors(&self, qubit: usize) -> usize {
        let c = self.coord(qubit);
        [c.x > 0, c.x + 1 < self.cols, c.y > 0, c.y + 1 < self.rows]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

/// Two-qubit layer label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    A,
    B,
    C,
    D,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::A, Layer::B, Layer::C, Layer::D];

    /// Label of layer `k` (0-based) in the repeating A, B, C, D schedule.
    pub fn of_index(k: usize) -> Layer {
        Self::ALL[k % 4]
    }
}

/// Disjoint neighbour pairs of one layer, as 1-based qubits `(lower, upper)`.
///
/// A: horizontal edges starting at an even column; B: odd column;
/// C: vertical edges starting at an even row; D: odd row.
pub fn layer_pairs(layout: &LatticeLayout, layer: Layer) -> Vec<(usize, usize)> {
    let (rows, cols) = (layout.rows, layout.cols);
    let q = |x: usize, y: usize| y * cols + x + 1;
    let mut out = Vec::new();
    match layer {
        Layer::A | Layer::B => {
            let start = usize::from(layer == Layer::B);
            for y in 0..rows {
                for x in (start..cols.saturating_sub(1)).step_by(2) {
                    out.push((q(x, y), q(x + 1, y)));
                }
            }
        }
        Layer::C | Layer::D => {
            let start = usize::from(layer == Layer::D);
            for y in (start..rows.saturating_sub(1)).step_by(2) {
                for x in 0..cols {
                    out.push((q(x, y), q(x, y + 1)));
                }
            }
        }
    }
    out
}

/// `(cols/2 - 1, rows/2 - 1)`, clamped to the lattice.
pub fn center_position(layout: &LatticeLayout) -> Coord {
    Coord::new((layout.cols / 2).saturating_sub(1), (layout.rows / 2).saturating_sub(1))
}

/// `n` sites filling the lattice in row-major order from `(0, 0)`:
/// `(0,0), (1,0), ..., (n-1, 0)` when `n <= cols`.
pub fn corner_positions(layout: &LatticeLayout, n: usize) -> Result<Vec<Coord>> {
    if n > layout.num_qubits() {
        return Err(domain!("{n} particles exceed {} qubits", layout.num_qubits()));
    }
    Ok((1..=n).map(|q| layout.coord(q)).collect())
}

/// `n` sites in row-major order starting at [`center_position`].
pub fn center_positions(layout: &LatticeLayout, n: usize) -> Result<Vec<Coord>> {
    let first = layout.qubit(center_position(layout))?;
    if first - 1 + n > layout.num_qubits() {
        return Err(domain!("{n} particles do not fit after the lattice center"));
    }
    Ok((first..first + n).map(|q| layout.coord(q)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AngleMode {
    /// `(alpha1, alpha2)` uniform on `[0, 2 pi)^2` for every gate.
    Random,
    /// `(alpha1, alpha2) = (pi/8, 0)` for every gate.
    Fixed,
}

/// Everything needed to build one circuit instance.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    pub layout: LatticeLayout,
    /// Number of A/B/C/D layers; `4 * cycles` for whole cycles.
    pub depth: usize,
    pub angle_mode: AngleMode,
    pub initial: Vec<Coord>,
    pub seed: u64,
    pub instance: u64,
}

impl CircuitSpec {
    pub fn with_cycles(
        layout: LatticeLayout,
        cycles: usize,
        angle_mode: AngleMode,
        initial: Vec<Coord>,
        seed: u64,
    ) -> Self {
        Self { layout, depth: 4 * cycles, angle_mode, initial, seed, instance: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateOp {
    Rz { qubit: usize, theta: f64 },
    Xxz { q1: usize, q2: usize, alpha1: f64, alpha2: f64 },
    PrepX { qubit: usize },
    Measure,
}

/// Gate totals entering the predicted-fidelity product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct GateCounts {
    /// `Rz` and preparation `X` gates.
    pub one_qubit: usize,
    pub two_qubit: usize,
    /// Qubits measured at the end.
    pub measured: usize,
}

/// A resolved gate sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    depth: usize,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn from_ops(num_qubits: usize, depth: usize, ops: Vec<GateOp>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(domain!("qubit count {num_qubits} outside [1, {MAX_QUBITS}]"));
        }
        let check = |q: usize| {
            if q == 0 || q > num_qubits {
                Err(domain!("qubit {q} outside [1, {num_qubits}]"))
            } else {
                Ok(())
            }
        };
        for op in &ops {
            match *op {
                GateOp::Rz { qubit, .. } | GateOp::PrepX { qubit } => check(qubit)?,
                GateOp::Xxz { q1, q2, .. } => {
                    check(q1)?;
                    check(q2)?;
                    if q1 == q2 {
                        return Err(domain!("xxz on a single qubit {q1}"));
                    }
                }
                GateOp::Measure => {}
            }
        }
        Ok(Self { num_qubits, depth, ops })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    /// Sorted 1-based qubits prepared by the leading `X` gates.
    pub fn initial_qubits(&self) -> Vec<usize> {
        let mut q: Vec<usize> = self
            .ops
            .iter()
            .map_while(|op| match *op {
                GateOp::PrepX { qubit } => Some(qubit),
                _ => None,
            })
            .collect();
        q.sort_unstable();
        q
    }

    /// Particle number of the initial state.
    pub fn particles(&self) -> usize {
        self.initial_qubits().len()
    }

    pub fn gate_counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for op in &self.ops {
            match op {
                GateOp::Rz { .. } | GateOp::PrepX { .. } => c.one_qubit += 1,
                GateOp::Xxz { .. } => c.two_qubit += 1,
                GateOp::Measure => c.measured += self.num_qubits,
            }
        }
        c
    }

    /// Distinct XXZ pairs in first-use order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut seen = Vec::new();
        for op in &self.ops {
            if let GateOp::Xxz { q1, q2, .. } = *op {
                let key = (q1.min(q2), q1.max(q2));
                if !seen.contains(&key) {
                    seen.push(key);
                }
            }
        }
        seen
    }

    /// Line-oriented text form: `X q`, `RZ q t`, `XXZ q1 q2 a1 a2`, `MEASURE`,
    /// angles with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for op in &self.ops {
            // Writing into a String cannot fail.
            let _ = match *op {
                GateOp::PrepX { qubit } => writeln!(s, "X {qubit}"),
                GateOp::Rz { qubit, theta } => writeln!(s, "RZ {qubit} {theta:.16e}"),
                GateOp::Xxz { q1, q2, alpha1, alpha2 } => {
                    writeln!(s, "XXZ {q1} {q2} {alpha1:.16e} {alpha2:.16e}")
                }
                GateOp::Measure => writeln!(s, "MEASURE"),
            };
        }
        s
    }

    /// Parses [`Circuit::to_text`] output. Blank lines and `#` comments are
    /// skipped; depth is recovered as the number of `Rz` gates over `N`.
    pub fn from_text(text: &str, num_qubits: usize) -> Result<Self> {
        let mut ops = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.split_whitespace();
            let head = f.next().unwrap_or_default();
            let fields: Vec<&str> = f.collect();
            let bad = || domain!("line {}: malformed gate `{line}`", lineno + 1);
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let op = match (head, fields.as_slice()) {
                ("X", [q]) => GateOp::PrepX { qubit: int(q)? },
                ("RZ", [q, t]) => GateOp::Rz { qubit: int(q)?, theta: real(t)? },
                ("XXZ", [a, b, x, y]) => GateOp::Xxz {
                    q1: int(a)?,
                    q2: int(b)?,
                    alpha1: real(x)?,
                    alpha2: real(y)?,
                },
                ("MEASURE", []) => GateOp::Measure,
                _ => return Err(bad()),
            };
            ops.push(op);
        }
        let rz = ops.iter().filter(|op| matches!(op, GateOp::Rz { .. })).count();
        Self::from_ops(num_qubits, rz / num_qubits.max(1), ops)
    }
}

/// Builds the gate sequence of `spec`. Angles come from the circuit stream of
/// `(seed, instance)` in a fixed order (per layer: `N` Rz angles in qubit
/// order, then `(alpha1, alpha2)` per pair in random mode), so a shallower
/// circuit is a prefix of a deeper one with the same seed.
pub fn build_circuit(spec: &CircuitSpec) -> Result<Circuit> {
    let layout = &spec.layout;
    let n_qubits = layout.num_qubits();
    let mut initial = Vec::with_capacity(spec.initial.len());
    for &c in &spec.initial {
        initial.push(layout.qubit(c)?);
    }
    initial.sort_unstable();
    if initial.windows(2).any(|w| w[0] == w[1]) {
        return Err(domain!("initial positions repeat a site"));
    }
    let layers: [Vec<(usize, usize)>; 4] = Layer::ALL.map(|l| layer_pairs(layout, l));
    let mut rng = rng::stream(spec.seed, spec.instance, StreamKind::Circuit, 0);
    let per_layer = n_qubits + layers.iter().map(Vec::len).max().unwrap_or(0);
    let mut ops = Vec::with_capacity(initial.len() + 1 + spec.depth * per_layer);
    ops.extend(initial.iter().map(|&qubit| GateOp::PrepX { qubit }));
    for k in 0..spec.depth {
        for qubit in 1..=n_qubits {
            ops.push(GateOp::Rz { qubit, theta: rng::angle(&mut rng) });
        }
        for &(q1, q2) in &layers[k % 4] {
            let (alpha1, alpha2) = match spec.angle_mode {
                AngleMode::Random => (rng::angle(&mut rng), rng::angle(&mut rng)),
                AngleMode::Fixed => (FIXED_ALPHA1, FIXED_ALPHA2),
            };
            ops.push(GateOp::Xxz { q1, q2, alpha1, alpha2 });
        }
    }
    ops.push(GateOp::Measure);
    Circuit::from_ops(n_qubits, spec.depth, ops)
}

impl core::fmt::Display for Layer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Layer::A => "A",
            Layer::B => "B",
            Layer::C => "C",
            Layer::D => "D",
        })
    }
}

impl core::str::FromStr for AngleMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(AngleMode::Random),
            "fixed" => Ok(AngleMode::Fixed),
            _ => Err(crate::error::Error::Domain(format!("unknown angle mode `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use proptest::prelude::*;

    fn lattice(r: usize, c: usize) -> LatticeLayout {
        LatticeLayout::new(r, c).unwrap()
    }

    fn coords(l: &LatticeLayout, pairs: &[(usize, usize)]) -> Vec<(Coord, Coord)> {
        pairs.iter().map(|&(a, b)| (l.coord(a), l.coord(b))).collect()
    }

    #[test]
    fn layer_examples() {
        let l = lattice(2, 2);
        assert_eq!(
            coords(&l, &layer_pairs(&l, Layer::A)),
            vec![
                (Coord::new(0, 0), Coord::new(1, 0)),
                (Coord::new(0, 1), Coord::new(1, 1))
            ]
        );
        assert!(layer_pairs(&l, Layer::B).is_empty());
        assert_eq!(layer_pairs(&lattice(8, 8), Layer::A).len(), 32);
    }

    #[test]
    fn layers_partition_the_edges() {
        for (r, c) in [(1, 1), (1, 5), (2, 2), (3, 4), (5, 5), (8, 8), (6, 3)] {
            let l = lattice(r, c);
            let mut brute = BTreeSet::new();
            for q in 1..=l.num_qubits() {
                for p in q + 1..=l.num_qubits() {
                    let (a, b) = (l.coord(q), l.coord(p));
                    if a.x.abs_diff(b.x) + a.y.abs_diff(b.y) == 1 {
                        brute.insert((q, p));
                    }
                }
            }
            let mut all = Vec::new();
            for layer in Layer::ALL {
                let pairs = layer_pairs(&l, layer);
                let mut used = BTreeSet::new();
                for &(a, b) in &pairs {
                    assert!(used.insert(a) && used.insert(b), "{layer} pairs overlap on {r}x{c}");
                }
                all.extend(pairs);
            }
            assert_eq!(all.len(), brute.len());
            assert_eq!(all.into_iter().collect::<BTreeSet<_>>(), brute);
            if r == c {
                assert_eq!(brute.len(), 2 * r * (r - 1));
            }
        }
    }

    #[test]
    fn neighbour_counts_on_open_square_lattices() {
        let l = lattice(5, 5);
        for q in 1..=25 {
            assert!((2..=4).contains(&l.neighbors(q)));
        }
    }

    #[test]
    fn placements() {
        assert_eq!(center_position(&lattice(8, 8)), Coord::new(3, 3));
        assert_eq!(center_position(&lattice(2, 2)), Coord::new(0, 0));
        assert_eq!(center_position(&lattice(6, 6)), Coord::new(2, 2));
        let l = lattice(4, 4);
        let corner = corner_positions(&l, 3).unwrap();
        assert_eq!(corner, vec![Coord::new(0, 0), Coord::new(1, 0), Coord::new(2, 0)]);
        let q: Vec<usize> = corner.iter().map(|&c| l.qubit(c).unwrap()).collect();
        assert_eq!(q, vec![1, 2, 3]);
        let center = center_positions(&lattice(6, 6), 1).unwrap();
        assert_eq!(lattice(6, 6).qubit(center[0]).unwrap(), 15);
    }

    fn spec(side: usize, depth: usize, mode: AngleMode, seed: u64) -> CircuitSpec {
        let l = lattice(side, side);
        CircuitSpec {
            layout: l,
            depth,
            angle_mode: mode,
            initial: corner_positions(&l, 2).unwrap(),
            seed,
            instance: 0,
        }
    }

    #[test]
    fn zero_cycles_is_prep_and_measure() {
        let c = build_circuit(&spec(3, 0, AngleMode::Random, 1)).unwrap();
        assert_eq!(c.ops(), &[GateOp::PrepX { qubit: 1 }, GateOp::PrepX { qubit: 2 }, GateOp::Measure]);
        assert_eq!(c.particles(), 2);
    }

    #[test]
    fn forty_cycles_is_depth_160() {
        let l = lattice(4, 4);
        let s = CircuitSpec::with_cycles(l, 40, AngleMode::Fixed, vec![Coord::new(0, 0)], 3);
        let c = build_circuit(&s).unwrap();
        assert_eq!(c.depth(), 160);
        let counts = c.gate_counts();
        assert_eq!(counts.one_qubit, 160 * 16 + 1);
        assert_eq!(counts.two_qubit, 40 * 2 * 4 * 3);
        assert_eq!(counts.measured, 16);
    }

    #[test]
    fn gate_counts_for_ten_cycles_on_8x8() {
        let s = CircuitSpec::with_cycles(lattice(8, 8), 10, AngleMode::Random, vec![], 9);
        let counts = build_circuit(&s).unwrap().gate_counts();
        assert_eq!(counts, GateCounts { one_qubit: 2560, two_qubit: 1120, measured: 64 });
    }

    #[test]
    fn determinism_and_prefix_property() {
        let a = build_circuit(&spec(4, 24, AngleMode::Random, 77)).unwrap();
        let b = build_circuit(&spec(4, 24, AngleMode::Random, 77)).unwrap();
        assert_eq!(a, b);
        let c = build_circuit(&spec(4, 24, AngleMode::Random, 78)).unwrap();
        assert_ne!(a, c);
        let short = build_circuit(&spec(4, 10, AngleMode::Random, 77)).unwrap();
        let n = short.ops().len() - 1;
        assert_eq!(&short.ops()[..n], &a.ops()[..n]);
        let mut other = spec(4, 24, AngleMode::Random, 77);
        other.instance = 1;
        assert_ne!(build_circuit(&other).unwrap(), a);
    }

    #[test]
    fn fixed_mode_angles() {
        let c = build_circuit(&spec(3, 8, AngleMode::Fixed, 5)).unwrap();
        for op in c.ops() {
            if let GateOp::Xxz { alpha1, alpha2, .. } = *op {
                assert_eq!((alpha1, alpha2), (FIXED_ALPHA1, FIXED_ALPHA2));
            }
        }
    }

    #[test]
    fn rejects_bad_initial_positions() {
        let mut s = spec(3, 4, AngleMode::Random, 1);
        s.initial = vec![Coord::new(3, 0)];
        assert!(build_circuit(&s).is_err());
        s.initial = vec![Coord::new(1, 1), Coord::new(1, 1)];
        assert!(build_circuit(&s).is_err());
    }

    #[test]
    fn text_round_trip() {
        let c = build_circuit(&spec(3, 9, AngleMode::Random, 11)).unwrap();
        let text = c.to_text();
        assert!(text.starts_with("X 1\nX 2\nRZ 1 "));
        assert!(text.ends_with("MEASURE\n"));
        let back = Circuit::from_text(&text, 9).unwrap();
        assert_eq!(back, c);
        assert!(Circuit::from_text("RZ 1\n", 9).is_err());
        assert!(Circuit::from_text("XXZ 2 2 0.1 0.2\n", 9).is_err());
    }

    proptest! {
        #[test]
        fn every_xxz_is_an_edge_and_each_edge_appears_once_per_cycle(
            rows in 1usize..7, cols in 1usize..7, cycles in 1usize..4, seed in any::<u64>()
        ) {
            let l = lattice(rows, cols);
            let s = CircuitSpec::with_cycles(l, cycles, AngleMode::Random, vec![], seed);
            let c = build_circuit(&s).unwrap();
            let edges: BTreeSet<_> = l.edges().into_iter().collect();
            let mut seen = alloc::collections::BTreeMap::new();
            for op in c.ops() {
                if let GateOp::Xxz { q1, q2, .. } = *op {
                    prop_assert!(edges.contains(&(q1, q2)));
                    *seen.entry((q1, q2)).or_insert(0usize) += 1;
                }
            }
            for e in &edges {
                prop_assert_eq!(seen.get(e).copied().unwrap_or(0), cycles);
            }
            let counts = c.gate_counts();
            prop_assert_eq!(counts.one_qubit, 4 * cycles * l.num_qubits());
            prop_assert_eq!(counts.two_qubit, cycles * edges.len());
        }
    }
}
