//! Simulation and estimation core for particle-number-conserving random
//! circuit benchmarking.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation:
//! sector bases, the banded statevector, lattice circuit construction, the
//! Pauli-trajectory noise engine, Born-rule sampling, the MLXEB/LXEB
//! estimators and the dense reference simulators used for validation.
//! File formats, configuration and scheduling live in the `sector-xeb` crate.

#![no_std]
// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod circuit;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod state;
pub mod subspace;

pub use num_complex::Complex64;

pub use circuit::{AngleMode, Circuit, CircuitSpec, Coord, GateOp, Layer, LatticeLayout};
pub use error::{Error, Result};
pub use noise::{NoiseModel, Pauli, Trajectory};
pub use sampling::{Outcome, SampleSet};
pub use state::{SectorSpace, SectorState};
pub use subspace::{BitString, SectorBasis};
