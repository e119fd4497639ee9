//! Experiment configuration: TOML file, command-line overrides, validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sector_xeb_core::circuit::{center_positions, corner_positions};
use sector_xeb_core::{AngleMode, Coord, LatticeLayout};

use crate::error::{HarnessError, Result};

/// Lattices above this many qubits need `--large`.
pub const LARGE_QUBITS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PtHist,
    DepthSweep,
    NoiseSweep,
    Collapse,
    FidelityCheck,
}

impl Mode {
    pub const ALL: [Mode; 5] =
        [Mode::PtHist, Mode::DepthSweep, Mode::NoiseSweep, Mode::Collapse, Mode::FidelityCheck];

    pub fn name(self) -> &'static str {
        match self {
            Mode::PtHist => "pt-hist",
            Mode::DepthSweep => "depth-sweep",
            Mode::NoiseSweep => "noise-sweep",
            Mode::Collapse => "collapse",
            Mode::FidelityCheck => "fidelity-check",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown mode `{s}`")))
    }
}

/// Where the initial excitations go.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Placement {
    /// `"corner"` or `"center"`.
    Named(String),
    /// Explicit `[x, y]` coordinates (column, row), zero-based.
    Sites(Vec<[usize; 2]>),
}

impl Default for Placement {
    fn default() -> Self {
        Placement::Named("corner".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
    /// Particle number.
    pub n: usize,
    #[serde(default)]
    pub placement: Placement,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    /// Circuit depths in layers.
    #[serde(default)]
    pub depths: Option<Vec<usize>>,
    /// Circuit lengths in A/B/C/D cycles; depth = 4 * cycles.
    #[serde(default)]
    pub cycles: Option<Vec<usize>>,
    /// `"random"` or `"fixed"`.
    #[serde(default = "default_angle_mode")]
    pub angle_mode: String,
}

fn default_angle_mode() -> String {
    "random".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Uniform depolarizing rates; each sets e_g1 = e_g2 = e_q.
    #[serde(default)]
    pub rates: Vec<f64>,
    /// Band tops to simulate; defaults to `[n + 2]`.
    #[serde(default)]
    pub n_max: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// `N_c`.
    pub instances: usize,
    /// `N_s` per instance; also the trajectory count in fidelity-check mode.
    pub samples: usize,
    /// Measurements drawn from each noisy trajectory. Values above 1 deviate
    /// from resampling the noise for every shot.
    #[serde(default = "one")]
    pub samples_per_trajectory: usize,
    /// Write every measured bitstring to `samples.csv`.
    #[serde(default)]
    pub dump: bool,
}

fn one() -> usize {
    1
}

/// One system entering a scaling collapse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub rows: usize,
    pub cols: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    /// Offset `a` in the exponent `1 / (n + a)`.
    #[serde(default = "default_offset")]
    pub offset: f64,
    /// If set, `a` is the grid point with the smallest collapse distance.
    #[serde(default)]
    pub scan: Option<Vec<f64>>,
    /// Weight fit points by their propagated standard errors.
    #[serde(default)]
    pub weighted: bool,
    /// Systems to collapse; defaults to the `[lattice]` system alone.
    #[serde(default)]
    pub systems: Vec<SystemConfig>,
}

fn default_offset() -> f64 {
    sector_xeb_core::metrics::DEFAULT_SCALING_OFFSET
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self { offset: default_offset(), scan: None, weighted: false, systems: Vec::new() }
    }
}

/// The on-disk configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub collapse: CollapseConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub large: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies overrides and checks everything that can be checked before any
    /// simulation starts.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Resolved> {
        if let Some(m) = overrides.mode {
            self.mode = m;
        }
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(t) = overrides.threads {
            self.threads = t;
        }
        if let Some(o) = &overrides.out {
            self.out = o.clone();
        }
        Resolved::new(self, overrides.large)
    }
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// A validated configuration with derived values filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub layout: LatticeLayout,
    pub initial: Vec<Coord>,
    pub angle_mode: AngleMode,
    pub depths: Vec<usize>,
    pub n_max: Vec<usize>,
}

impl Resolved {
    fn new(config: ExperimentConfig, large: bool) -> Result<Self> {
        let lat = &config.lattice;
        let layout = LatticeLayout::new(lat.rows, lat.cols).map_err(|e| bad(e.to_string()))?;
        let nq = layout.num_qubits();
        if nq > LARGE_QUBITS && !large {
            return Err(bad(format!(
                "{nq} qubits exceeds {LARGE_QUBITS}; pass --large to accept the runtime"
            )));
        }
        if lat.n > nq {
            return Err(bad(format!("n = {} exceeds {nq} qubits", lat.n)));
        }
        let initial = placement(&layout, lat.n, &lat.placement)?;
        let angle_mode: AngleMode = config.circuit.angle_mode.parse().map_err(|_| {
            bad(format!("angle_mode must be `random` or `fixed`, got `{}`", config.circuit.angle_mode))
        })?;
        let depths = match (&config.circuit.depths, &config.circuit.cycles) {
            (Some(d), None) => d.clone(),
            (None, Some(c)) => c.iter().map(|c| 4 * c).collect(),
            (Some(d), Some(c)) => {
                let from_cycles: Vec<usize> = c.iter().map(|c| 4 * c).collect();
                if *d != from_cycles {
                    return Err(bad(format!("depths {d:?} disagree with 4 x cycles {from_cycles:?}")));
                }
                from_cycles
            }
            (None, None) => return Err(bad("circuit needs `depths` or `cycles`")),
        };
        let n_max = config.noise.n_max.clone().unwrap_or_else(|| vec![(lat.n + 2).min(nq)]);
        for &m in &n_max {
            if m < lat.n || m > nq {
                return Err(bad(format!("n_max = {m} must lie in [n, N] = [{}, {nq}]", lat.n)));
            }
        }
        for &p in &config.noise.rates {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("noise rate {p} outside [0, 1]")));
            }
        }
        let s = &config.sampling;
        if s.instances == 0 || s.samples == 0 {
            return Err(bad("sampling.instances and sampling.samples must be positive"));
        }
        if s.samples_per_trajectory == 0 || s.samples % s.samples_per_trajectory != 0 {
            return Err(bad("samples_per_trajectory must be positive and divide samples"));
        }
        if config.threads == 0 {
            return Err(bad("threads must be at least 1"));
        }
        match config.mode {
            Mode::FidelityCheck if config.noise.rates.is_empty() => {
                return Err(bad("fidelity-check needs at least one noise rate"))
            }
            Mode::FidelityCheck if nq > sector_xeb_core::oracle::MAX_DENSITY_QUBITS => {
                return Err(bad(format!(
                    "fidelity-check supports at most {} qubits",
                    sector_xeb_core::oracle::MAX_DENSITY_QUBITS
                )))
            }
            Mode::DepthSweep | Mode::PtHist | Mode::Collapse if !config.noise.rates.is_empty() => {
                return Err(bad(format!("{} is noiseless; use noise-sweep for noise rates", config.mode)))
            }
            Mode::PtHist if depths.is_empty() => return Err(bad("pt-hist needs a depth")),
            Mode::Collapse => {
                for sys in &config.collapse.systems {
                    let l = LatticeLayout::new(sys.rows, sys.cols).map_err(|e| bad(e.to_string()))?;
                    if sys.n == 0 || sys.n > l.num_qubits() {
                        return Err(bad(format!("collapse system n = {} out of range", sys.n)));
                    }
                    if l.num_qubits() > LARGE_QUBITS && !large {
                        return Err(bad("collapse system exceeds the lattice size limit; pass --large"));
                    }
                }
                if config.collapse.systems.is_empty() && lat.n == 0 {
                    return Err(bad("collapse needs n >= 1"));
                }
            }
            _ => {}
        }
        Ok(Self { config, layout, initial, angle_mode, depths, n_max })
    }

    pub fn particles(&self) -> usize {
        self.config.lattice.n
    }
}

fn placement(layout: &LatticeLayout, n: usize, p: &Placement) -> Result<Vec<Coord>> {
    match p {
        Placement::Named(s) if s == "corner" => corner_positions(layout, n).map_err(|e| bad(e.to_string())),
        Placement::Named(s) if s == "center" => center_positions(layout, n).map_err(|e| bad(e.to_string())),
        Placement::Named(s) => Err(bad(format!("placement must be corner, center or a site list, got `{s}`"))),
        Placement::Sites(sites) => {
            if sites.len() != n {
                return Err(bad(format!("{} sites given for n = {n}", sites.len())));
            }
            let coords: Vec<Coord> = sites.iter().map(|&[x, y]| Coord::new(x, y)).collect();
            let mut qubits = Vec::with_capacity(n);
            for &c in &coords {
                qubits.push(layout.qubit(c).map_err(|e| bad(e.to_string()))?);
            }
            qubits.sort_unstable();
            qubits.dedup();
            if qubits.len() != n {
                return Err(bad("placement sites must be distinct"));
            }
            Ok(coords)
        }
    }
}

/// Placement for another lattice, following the named rule of `p`.
pub fn placement_for(layout: &LatticeLayout, n: usize, p: &Placement) -> Result<Vec<Coord>> {
    match p {
        Placement::Sites(_) => corner_positions(layout, n).map_err(|e| bad(e.to_string())),
        named => placement(layout, n, named),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "depth-sweep"
seed = 7

[lattice]
rows = 4
cols = 4
n = 1

[circuit]
cycles = [0, 1, 10]

[sampling]
instances = 2
samples = 100
"#;

    fn resolve(text: &str) -> Result<Resolved> {
        ExperimentConfig::from_toml(text)?.resolve(&Overrides::default())
    }

    #[test]
    fn cycles_become_depths_and_n_max_defaults() {
        let r = resolve(BASE).unwrap();
        assert_eq!(r.depths, vec![0, 4, 40]);
        assert_eq!(r.n_max, vec![3]);
        assert_eq!(r.config.threads, 1);
        assert_eq!(r.initial, vec![Coord::new(0, 0)]);
    }

    #[test]
    fn inconsistent_depths_and_cycles_are_rejected() {
        let text = BASE.replace("cycles = [0, 1, 10]", "cycles = [1]\ndepths = [5]");
        assert!(matches!(resolve(&text), Err(HarnessError::Config(_))));
        let text = BASE.replace("cycles = [0, 1, 10]", "cycles = [1]\ndepths = [4]");
        assert_eq!(resolve(&text).unwrap().depths, vec![4]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (from, to) in [
            ("n = 1", "n = 17"),
            ("samples = 100", "samples = 0"),
            ("seed = 7", "seed = 7\nthreads = 0"),
            ("[sampling]", "[noise]\nn_max = [0]\n[sampling]"),
            ("[circuit]", "[circuit]\nangle_mode = \"sideways\""),
            ("seed = 7", "seed = 7\nunknown = 1"),
            ("rows = 4", "rows = 0"),
        ] {
            let text = BASE.replace(from, to);
            assert!(matches!(resolve(&text), Err(HarnessError::Config(_))), "{to}");
        }
    }

    #[test]
    fn large_lattices_need_acknowledgment() {
        let text = BASE.replace("rows = 4", "rows = 14").replace("cols = 4", "cols = 14");
        assert!(resolve(&text).is_err());
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(cfg.resolve(&Overrides { large: true, ..Default::default() }).is_ok());
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let r = cfg
            .resolve(&Overrides {
                mode: Some(Mode::PtHist),
                seed: Some(99),
                threads: Some(4),
                out: Some("elsewhere".into()),
                large: false,
            })
            .unwrap();
        assert_eq!(r.config.mode, Mode::PtHist);
        assert_eq!(r.config.seed, 99);
        assert_eq!(r.config.threads, 4);
        assert_eq!(r.config.out, PathBuf::from("elsewhere"));
    }

    #[test]
    fn placements() {
        let center = BASE.replace("n = 1", "n = 1\nplacement = \"center\"");
        assert_eq!(resolve(&center).unwrap().initial, vec![Coord::new(1, 1)]);
        let sites = BASE.replace("n = 1", "n = 2\nplacement = [[3, 3], [0, 2]]");
        assert_eq!(resolve(&sites).unwrap().initial, vec![Coord::new(3, 3), Coord::new(0, 2)]);
        let dup = BASE.replace("n = 1", "n = 2\nplacement = [[3, 3], [3, 3]]");
        assert!(resolve(&dup).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
