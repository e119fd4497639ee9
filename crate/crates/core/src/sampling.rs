//! Born-rule measurement of a [`SectorState`], including its leaked weight.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{integrity, Result};
use crate::rng;
use crate::state::SectorState;
use crate::subspace::BitString;

/// Normalization tolerance required before sampling.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Draws at or above this count build a prefix-sum table; fewer scan linearly.
const PREFIX_THRESHOLD: usize = 8;

/// One measurement record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// A basis state: its bits, particle number and rank within that sector.
    Basis { bits: BitString, sector: usize, index: u64 },
    /// Weight that had left the simulated band.
    OutOfBand,
}

impl Outcome {
    pub fn sector(&self) -> Option<usize> {
        match *self {
            Outcome::Basis { sector, .. } => Some(sector),
            Outcome::OutOfBand => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub num_qubits: usize,
    pub outcomes: Vec<Outcome>,
}

impl SampleSet {
    pub fn new(num_qubits: usize) -> Self {
        Self { num_qubits, outcomes: Vec::new() }
    }

    /// `N_s`.
    pub fn total(&self) -> usize {
        self.outcomes.len()
    }

    pub fn push(&mut self, outcome: Outcome) {
        self.outcomes.push(outcome);
    }

    pub fn extend(&mut self, other: &SampleSet) {
        self.outcomes.extend_from_slice(&other.outcomes);
    }

    pub fn out_of_band(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, Outcome::OutOfBand)).count()
    }

    /// Sample count per observed sector.
    pub fn sector_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for s in self.outcomes.iter().filter_map(Outcome::sector) {
            *m.entry(s).or_insert(0) += 1;
        }
        m
    }

    /// Within-sector ranks of the samples in sector `n`, and their count `n_s`.
    pub fn filter_sector(&self, n: usize) -> (Vec<u64>, usize) {
        let idx: Vec<u64> = self
            .outcomes
            .iter()
            .filter_map(|o| match *o {
                Outcome::Basis { sector, index, .. } if sector == n => Some(index),
                _ => None,
            })
            .collect();
        let count = idx.len();
        (idx, count)
    }
}

/// Cumulative weights in (sector ascending, rank ascending) order with the
/// leaked weight last.
struct Cdf<'a> {
    state: &'a SectorState,
    sectors: Vec<usize>,
    prefix: Vec<f64>,
}

impl<'a> Cdf<'a> {
    fn new(state: &'a SectorState) -> Self {
        let sectors: Vec<usize> = state.active_sectors().collect();
        let mut prefix = Vec::new();
        let mut acc = 0.0;
        for &n in &sectors {
            for a in state.raw_sector(n).unwrap() {
                acc += a.norm_sqr();
                prefix.push(acc);
            }
        }
        Self { state, sectors, prefix }
    }

    fn locate(&self, u: f64) -> Option<(usize, u64)> {
        let pos = self.prefix.partition_point(|&c| c <= u);
        if pos == self.prefix.len() {
            return None;
        }
        let mut offset = pos;
        for &n in &self.sectors {
            let dim = self.state.raw_sector(n).unwrap().len();
            if offset < dim {
                return Some((n, offset as u64));
            }
            offset -= dim;
        }
        None
    }
}

fn locate_linear(state: &SectorState, u: f64) -> Option<(usize, u64)> {
    let mut acc = 0.0;
    for n in state.active_sectors() {
        for (i, a) in state.raw_sector(n).unwrap().iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                return Some((n, i as u64));
            }
        }
    }
    None
}

/// Draws `n_samples` outcomes from `state`. The state (in-band weight plus
/// leaked) must be normalized to within [`NORM_TOLERANCE`].
pub fn sample<R: RngCore + ?Sized>(
    state: &SectorState,
    n_samples: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    let total = state.total_probability();
    if (total - 1.0).abs() > NORM_TOLERANCE {
        return Err(integrity!("cannot sample: total probability {total} is not 1"));
    }
    let in_band = state.norm_sqr();
    let space = state.space();
    let mut out = SampleSet::new(state.num_qubits());
    out.outcomes.reserve(n_samples);
    let cdf = (n_samples >= PREFIX_THRESHOLD).then(|| Cdf::new(state));
    for _ in 0..n_samples {
        let u = rng::uniform(rng) * total;
        let hit = if u >= in_band {
            None
        } else if let Some(c) = &cdf {
            c.locate(u)
        } else {
            locate_linear(state, u)
        };
        out.push(match hit {
            Some((sector, index)) => {
                let bits = BitString::from_bits(
                    space.positions(sector, index as usize).iter().map(|&p| p as usize),
                );
                Outcome::Basis { bits, sector, index }
            }
            None => Outcome::OutOfBand,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Pauli;
    use crate::rng::StreamKind;
    use crate::state::SectorSpace;
    use alloc::sync::Arc;
    use core::f64::consts::FRAC_PI_8;

    fn space(n: usize, lo: usize, hi: usize) -> Arc<SectorSpace> {
        Arc::new(SectorSpace::new(n, lo, hi).unwrap())
    }

    #[test]
    fn product_state_gives_identical_samples() {
        let s = SectorState::product(space(5, 0, 5), &[2, 4]).unwrap();
        let mut rng = rng::stream(1, 0, StreamKind::Measure, 0);
        for n in [3, 100] {
            let set = sample(&s, n, &mut rng).unwrap();
            assert_eq!(set.total(), n);
            for o in &set.outcomes {
                match *o {
                    Outcome::Basis { bits, sector, .. } => {
                        assert_eq!(bits, BitString::from_bits([1, 3]));
                        assert_eq!(sector, 2);
                    }
                    Outcome::OutOfBand => panic!(),
                }
            }
        }
    }

    fn uniform_sector_one() -> SectorState {
        // XXZ(pi/8) twice on a 4-qubit line spreads one excitation evenly.
        let mut s = SectorState::product(space(4, 1, 1), &[1]).unwrap();
        s.apply_xxz(1, 2, FRAC_PI_8, 0.0).unwrap();
        s.apply_xxz(3, 4, 0.0, 0.0).unwrap();
        s.apply_xxz(1, 3, FRAC_PI_8, 0.0).unwrap();
        s.apply_xxz(2, 4, FRAC_PI_8, 0.0).unwrap();
        s
    }

    #[test]
    fn uniform_state_frequencies() {
        let s = uniform_sector_one();
        for p in s.probabilities(1).unwrap() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let mut rng = rng::stream(2, 0, StreamKind::Measure, 0);
        let set = sample(&s, 40_000, &mut rng).unwrap();
        let mut counts = [0f64; 4];
        for o in &set.outcomes {
            if let Outcome::Basis { index, .. } = *o {
                counts[index as usize] += 1.0;
            }
        }
        let chi2: f64 = counts.iter().map(|c| (c - 10_000.0).powi(2) / 10_000.0).sum();
        assert!(chi2 < 16.27, "chi2 {chi2} above the 0.999 quantile for 3 dof");
    }

    #[test]
    fn leaked_weight_is_sampled_as_out_of_band() {
        let mut s = SectorState::product(space(4, 1, 2), &[2]).unwrap();
        s.apply_xxz(2, 3, FRAC_PI_8, 0.0).unwrap();
        s.apply_pauli(3, Pauli::X).unwrap(); // the half with qubit 3 set drops to sector 0
        assert!((s.leaked() - 0.5).abs() < 1e-14);
        let mut rng = rng::stream(3, 0, StreamKind::Measure, 0);
        let set = sample(&s, 20_000, &mut rng).unwrap();
        let frac = set.out_of_band() as f64 / 20_000.0;
        assert!((frac - 0.5).abs() < 0.015);
        let counts = set.sector_counts();
        assert_eq!(counts.values().sum::<usize>() + set.out_of_band(), set.total());
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let s = SectorState::zero(space(4, 0, 4));
        let mut rng = rng::stream(3, 0, StreamKind::Measure, 0);
        assert!(matches!(sample(&s, 1, &mut rng), Err(crate::Error::Integrity(_))));
    }

    #[test]
    fn linear_and_prefix_paths_agree() {
        let s = uniform_sector_one();
        let draws: Vec<_> = (0..64)
            .map(|k| {
                let mut a = rng::stream(4, 0, StreamKind::Measure, k);
                sample(&s, 1, &mut a).unwrap().outcomes[0]
            })
            .collect();
        for (k, d) in draws.iter().enumerate() {
            let mut b = rng::stream(4, 0, StreamKind::Measure, k as u64);
            let u = rng::uniform(&mut b) * s.total_probability();
            let cdf = Cdf::new(&s);
            let (n, i) = cdf.locate(u).unwrap();
            assert_eq!(d.sector(), Some(n));
            assert!(matches!(*d, Outcome::Basis { index, .. } if index == i));
        }
    }

    #[test]
    fn filter_sector_examples() {
        let b = |v: &[usize]| Outcome::Basis {
            bits: BitString::from_bits(v.iter().copied()),
            sector: v.len(),
            index: 0,
        };
        let mut set = SampleSet::new(4);
        for _ in 0..5 {
            set.push(b(&[0]));
        }
        assert_eq!(set.filter_sector(1).1, 5);
        assert_eq!(set.filter_sector(2).1, 0);
        set.push(b(&[0, 1]));
        set.push(Outcome::OutOfBand);
        set.push(b(&[2]));
        assert_eq!(set.filter_sector(1).1, 6);
        assert_eq!(set.filter_sector(2).1, 1);
        assert_eq!(set.out_of_band(), 1);
        assert_eq!(set.total(), 8);
    }

    #[test]
    fn total_variation_against_exact_distribution() {
        let mut s = SectorState::product(space(5, 0, 5), &[1, 2]).unwrap();
        for (k, (a, b)) in [(1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (2, 4)].iter().enumerate() {
            s.apply_xxz(*a, *b, 0.3 + 0.2 * k as f64, 0.1).unwrap();
            s.apply_rz(*a, 0.4).unwrap();
        }
        let exact = s.probabilities(2).unwrap();
        let mut rng = rng::stream(5, 0, StreamKind::Measure, 0);
        let n = 1_000_000;
        let set = sample(&s, n, &mut rng).unwrap();
        let mut counts = alloc::vec![0usize; exact.len()];
        for o in &set.outcomes {
            if let Outcome::Basis { index, .. } = *o {
                counts[index as usize] += 1;
            }
        }
        let tv: f64 = exact
            .iter()
            .zip(&counts)
            .map(|(p, &c)| (p - c as f64 / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 5e-3, "total variation {tv}");
    }
}
