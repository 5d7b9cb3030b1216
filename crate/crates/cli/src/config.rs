//! Run configuration files.
//!
//! Relative paths inside a config resolve against the directory holding
//! the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinmet::cost::CostFunction;
use spinmet::grape::OptimizerConfig;
use spinmet::haar::{BootstrapConfig, CampaignConfig, SpeedComponent};
use spinmet::met::{MetScanConfig, ScanDirection, SweepAxis};
use spinmet::{DeviceParams, PauliSum, StateVector};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Every random draw of the run derives from this seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub device: Option<DeviceSource>,
    pub task: Task,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceSource {
    /// Default parameters for a chain of this many qubits.
    TableOne(usize),
    File(PathBuf),
    Inline(DeviceParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// Computational basis state, qubit 0 first.
    State(String),
    /// Complex amplitudes as `[re, im]` pairs; normalized on load.
    Amplitudes(Vec<[f64; 2]>),
    /// Ground-state preparation of a Pauli-sum Hamiltonian file.
    Hamiltonian(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FitSource {
    /// `estimate.json` written by a haar-campaign run.
    Estimate(PathBuf),
    /// METs drawn from a mixture of isotropic laws.
    Synthetic {
        n_qubits: usize,
        n_pairs: usize,
        t_grid: Vec<f64>,
        components: Vec<SpeedComponent>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Largest sine power tried by model selection.
    pub l_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    MetScan {
        /// Basis bit string; defaults to the Hartree-Fock state of a
        /// Hamiltonian target.
        #[serde(default)]
        initial: Option<String>,
        target: Target,
        scan: MetScanConfig,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    BondSweep {
        series: PathBuf,
        scan: MetScanConfig,
        #[serde(default = "ascending")]
        direction: ScanDirection,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    ParamSweep {
        axis: SweepAxis,
        factors: Vec<f64>,
        #[serde(default)]
        initial: Option<String>,
        target: Target,
        scan: MetScanConfig,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    HaarCampaign {
        n_pairs: usize,
        campaign: CampaignConfig,
        #[serde(default)]
        optimizer: OptimizerConfig,
        #[serde(default)]
        bootstrap: Option<BootstrapConfig>,
        #[serde(default)]
        fit: Option<FitOptions>,
        /// Infidelity levels of the Δ-resolved CDF table.
        #[serde(default)]
        infidelity_levels: Vec<f64>,
    },
    Fit {
        source: FitSource,
        #[serde(default)]
        bootstrap: Option<BootstrapConfig>,
        fit: FitOptions,
    },
    Bounds {
        #[serde(default = "default_pi")]
        pi_gate_time_ns: f64,
        #[serde(default = "default_swap")]
        swap_alpha_max_time_ns: f64,
    },
}

fn ascending() -> ScanDirection {
    ScanDirection::Ascending
}

fn default_pi() -> f64 {
    200.0
}

fn default_swap() -> f64 {
    0.5
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::MetScan { .. } => "met-scan",
            Task::BondSweep { .. } => "bond-sweep",
            Task::ParamSweep { .. } => "param-sweep",
            Task::HaarCampaign { .. } => "haar-campaign",
            Task::Fit { .. } => "fit",
            Task::Bounds { .. } => "bounds",
        }
    }
}

/// A parsed config with its raw bytes and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_slice(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, raw, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn device(&self, default_qubits: Option<usize>) -> Result<DeviceParams, CliError> {
        let p = match (&self.config.device, default_qubits) {
            (Some(DeviceSource::TableOne(n)), _) => {
                if *n == 0 {
                    return Err(CliError::Validation("device: table_one needs at least one qubit".into()));
                }
                DeviceParams::table_one(*n)
            }
            (Some(DeviceSource::File(f)), _) => DeviceParams::load(&self.resolve(f)).map_err(CliError::config)?,
            (Some(DeviceSource::Inline(p)), _) => p.clone(),
            (None, Some(n)) => DeviceParams::table_one(n),
            (None, None) => return Err(CliError::Config("device: missing".into())),
        };
        p.validate().map_err(CliError::validation)?;
        Ok(p)
    }

    /// Cost function and initial state of a single-target task.
    pub fn problem(&self, target: &Target, initial: Option<&str>) -> Result<(CostFunction, StateVector), CliError> {
        let (cost, hf) = match target {
            Target::State(bits) => (CostFunction::infidelity(StateVector::from_bits(bits).map_err(CliError::validation)?), None),
            Target::Amplitudes(a) => {
                let amps = a.iter().map(|&[re, im]| num_complex::Complex64::new(re, im)).collect();
                (CostFunction::infidelity(StateVector::normalized(amps).map_err(CliError::validation)?), None)
            }
            Target::Hamiltonian(f) => {
                let h = PauliSum::load(&self.resolve(f)).map_err(CliError::config)?;
                let hf = h.hf_state().ok();
                (CostFunction::pauli(h).map_err(CliError::validation)?, hf)
            }
        };
        let psi = match (initial, hf) {
            (Some(bits), _) => StateVector::from_bits(bits).map_err(CliError::validation)?,
            (None, Some(hf)) => hf,
            (None, None) => return Err(CliError::Config("task.initial: required unless the target is a hamiltonian with hf_state".into())),
        };
        if psi.dim() != cost.dim() {
            return Err(CliError::Validation(format!("initial state has dimension {}, target {}", psi.dim(), cost.dim())));
        }
        Ok((cost, psi))
    }

    /// Optimizer settings with the run seed applied.
    pub fn optimizer(&self, base: &OptimizerConfig) -> Result<OptimizerConfig, CliError> {
        let mut o = base.clone();
        o.seed = self.config.seed;
        o.validate().map_err(CliError::validation)?;
        Ok(o)
    }
}
