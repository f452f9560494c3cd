use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use lighthash::analysis::EnergyModel;
use lighthash::chain::{ChainConfig, DifficultySchedule, MinerBackend};
use lighthash::noise::ErrorProfile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Oracle,
    Photonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_list: Vec<usize>,
    pub k_list: Vec<usize>,
    /// Multipliers on the profile spreads (feasibility).
    pub scales: Vec<f64>,
    /// Wavelengths, nm (dispersion). The cell is the first `n_list` and
    /// `k_list` entry.
    pub lambdas: Vec<f64>,
    /// Copies for the correction sweep.
    pub r: usize,
    pub trials: usize,
    pub devices: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4, 8, 16],
            k_list: vec![2, 4],
            scales: vec![0.5, 1.0, 2.0],
            lambdas: (0..9).map(|i| 1550.0 + 2.5 * f64::from(i)).collect(),
            r: 4,
            trials: 500,
            devices: 10,
        }
    }
}

/// Everything a run depends on. Written next to every output file, and
/// accepted back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chain_dir: PathBuf,
    pub chain: ChainConfig,
    pub backend: BackendKind,
    /// Copies averaged by the photonic backend.
    pub r: usize,
    pub profile: ErrorProfile,
    pub seed: u64,
    pub max_attempts: u64,
    pub sweep: SweepConfig,
    pub energy: EnergyModel,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chain_dir: PathBuf::from("chain"),
            chain: ChainConfig { n: 16, k: 4, schedule: DifficultySchedule::default() },
            backend: BackendKind::Oracle,
            r: 1,
            profile: ErrorProfile::new(0.01, 0.01, 0.03),
            seed: 0,
            max_attempts: 1 << 32,
            sweep: SweepConfig::default(),
            energy: EnergyModel::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.chain.validate()?;
        self.profile.validate()?;
        let s = &self.sweep;
        if self.r == 0 || s.r == 0 {
            bail!("r must be at least 1");
        }
        if s.n_list.is_empty() || s.k_list.is_empty() || s.scales.is_empty() || s.lambdas.is_empty() {
            bail!("sweep grids must be non-empty");
        }
        if s.trials == 0 || s.devices == 0 {
            bail!("sweep trials and devices must be positive");
        }
        if self.max_attempts == 0 {
            bail!("max_attempts must be positive");
        }
        Ok(())
    }

    pub fn miner(&self) -> MinerBackend {
        match self.backend {
            BackendKind::Oracle => MinerBackend::Oracle,
            BackendKind::Photonic => MinerBackend::Photonic { profile: self.profile, seed: self.seed, r: self.r },
        }
    }

    pub fn write_snapshot(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn read_profile(path: &Path) -> anyhow::Result<ErrorProfile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
