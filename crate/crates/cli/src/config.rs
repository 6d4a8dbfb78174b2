//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dbd_core::recovery::RecoveryOptions;
use dbd_core::{AmplitudeMode, Dims, GramMode, ParamTriple, SolverOptions};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[serde(rename = "M")]
    #[value(name = "M")]
    M,
    #[serde(rename = "P")]
    #[value(name = "P")]
    P,
    #[serde(rename = "Nr")]
    #[value(name = "Nr")]
    Nr,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::M => "M",
            Axis::P => "P",
            Axis::Nr => "Nr",
        })
    }
}

impl Axis {
    /// `dims` with this axis set to `value`.
    pub fn apply(self, dims: &Dims, value: usize) -> anyhow::Result<Dims> {
        let (mut m, mut p, mut nr) = (dims.samples(), dims.pulses(), dims.antennas());
        match self {
            Axis::M => m = value,
            Axis::P => p = value,
            Axis::Nr => nr = value,
        }
        Ok(Dims::with_samples(m, p, nr, dims.subspace(), dims.targets(), dims.paths())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dims: Dims,
    #[serde(default)]
    pub amplitude: AmplitudeMode,
    #[serde(default)]
    pub separation: bool,
    /// Base seed; trial `i` uses `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub recovery: RecoveryOptions,
    #[serde(default)]
    pub gram_mode: GramMode,
    #[serde(default = "yes")]
    pub fallback_split: bool,
    /// Fixed parameter triples instead of sampled ones.
    #[serde(default)]
    pub radar_triples: Option<Vec<ParamTriple>>,
    #[serde(default)]
    pub comms_triples: Option<Vec<ParamTriple>>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Worker threads for sweeps; 0 picks the number of CPUs.
    #[serde(default)]
    pub workers: usize,
    /// Slice resolution, samples per unit bandwidth.
    #[serde(default = "default_slice_res")]
    pub slice_resolution: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_slice_res() -> usize {
    16
}

impl ExperimentConfig {
    pub fn new(dims: Dims) -> Self {
        Self {
            version: CONFIG_VERSION,
            dims,
            amplitude: AmplitudeMode::Unit,
            separation: false,
            seed: 0,
            trials: 1,
            sweep: None,
            solver: SolverOptions::default(),
            recovery: RecoveryOptions::default(),
            gram_mode: GramMode::Shared,
            fallback_split: true,
            radar_triples: None,
            comms_triples: None,
            out_dir: default_out(),
            workers: 0,
            slice_resolution: default_slice_res(),
        }
    }

    /// The scenario of the reference experiment: `M = P = 9`, `N_r = 3`,
    /// `K = 3`, two targets and two paths at fixed positions.
    pub fn reference() -> Self {
        let dims = Dims::with_samples(9, 9, 3, 3, 2, 2).expect("valid reference dims");
        let mut c = Self::new(dims);
        c.radar_triples = Some(vec![ParamTriple::new(0.352, 0.831, 0.585), ParamTriple::new(0.495, 0.974, 0.919)]);
        c.comms_triples = Some(vec![ParamTriple::new(0.485, 0.800, 0.142), ParamTriple::new(0.628, 0.943, 0.475)]);
        c
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(
            self.version == CONFIG_VERSION,
            "unsupported config version {} (expected {CONFIG_VERSION})",
            self.version
        );
        anyhow::ensure!(self.trials >= 1, "trials must be at least 1");
        if let Some(s) = &self.sweep {
            anyhow::ensure!(!s.values.is_empty(), "sweep needs at least one value");
            anyhow::ensure!(s.values.iter().all(|&v| v > 0), "sweep values must be positive");
            for &v in &s.values {
                s.axis.apply(&self.dims, v)?;
            }
        }
        anyhow::ensure!(self.slice_resolution >= 2, "slice resolution must be at least 2");
        self.solver.validate()?;
        Ok(())
    }
}
