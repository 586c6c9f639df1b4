//! Run configuration: a TOML file whose sections group settings by concern,
//! overridden field by field by command-line flags.
//!
//! ```toml
//! workers = 4
//! layout = "layout.toml"      # optional servo layout
//! basis = "basis.txt"         # optional landmark basis
//!
//! [data]
//! count = 9000
//! seed = 7
//!
//! [training]
//! kind = "attention-kan"
//! lr = 1e-5
//!
//! [split]
//! train_count = 8000
//! test_count = 1000
//!
//! [eval]
//! trajectories = 10
//!
//! [ablate]
//! lambdas = [0.0, 0.1, 0.01, 0.001]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mimic_core::face_sim::TRAINING_NOISE_SIGMA;
use mimic_core::model::ModelKind;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    pub layout: Option<PathBuf>,
    pub basis: Option<PathBuf>,
    pub data: DataSection,
    pub training: TrainingSection,
    pub split: SplitSection,
    pub eval: EvalSection,
    pub ablate: AblateSection,
    pub latency: LatencySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub count: usize,
    pub seed: u64,
    /// Simulator seed; the data seed when absent.
    pub sim_seed: Option<u64>,
    pub noise_sigma: f64,
    pub landmarks: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            count: 9000,
            seed: 7,
            sim_seed: None,
            noise_sigma: TRAINING_NOISE_SIGMA,
            landmarks: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub kind: ModelKind,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub patience: usize,
    pub attention: bool,
    pub lr_final_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            kind: ModelKind::AttentionKan,
            seed: 7,
            epochs: 300,
            batch_size: 256,
            lr: 1e-5,
            lambda: mimic_core::losses::DEFAULT_LAMBDA,
            patience: 30,
            attention: true,
            lr_final_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_count: 8000,
            test_count: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub trajectories: usize,
    pub trajectory_frames: usize,
    pub trajectory_seed: u64,
    /// Loss weight for the reported loss; the checkpoint's when absent.
    pub lambda: Option<f64>,
    /// Number of test samples whose rendered faces are written as PPM.
    pub images: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            trajectories: 10,
            trajectory_frames: 31,
            trajectory_seed: 0,
            lambda: None,
            images: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub lambdas: Vec<f64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            lambdas: vec![0.0, 0.1, 0.01, 0.001],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySection {
    pub frames: usize,
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection { frames: 1000 }
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Format(m) => CliError::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Overwrites `target` with `value` when the flag was given.
pub fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

/// Worker count from the flag, then `MIMIC_WORKERS`, then the config file.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>, file: Option<usize>) -> CliResult<Option<usize>> {
    let env = match env {
        Some(s) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Argument(format!("MIMIC_WORKERS must be a positive integer, got {s:?}")))?,
        ),
        None => None,
    };
    let n = flag.or(env).or(file);
    if n == Some(0) {
        return Err(CliError::Argument("worker count must be >= 1".into()));
    }
    Ok(n)
}
