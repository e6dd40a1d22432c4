use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heredity::TauPolicy;
use crate::model::{ArchConfig, Inheritance};
use crate::synthesis::{EncodingMode, EvolutionConfig};
use crate::training::TrainConfig;

/// Caps the number of gradient worker threads; 0 or unset means one.
pub const THREADS_ENV: &str = "EVOSYNTH_THREADS";

/// MNIST IDX files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        let dir = Path::new("data/mnist");
        DataPaths {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

impl DataPaths {
    /// The four standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        DataPaths {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

/// Experiment configuration, read from TOML. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub budget: f64,
    pub mode: EncodingMode,
    /// Class neurons of the output layer never lose the cluster draw.
    pub protect_output: bool,
    pub inheritance: Inheritance,
    pub tau: TauPolicy,
    pub ancestor_epochs: usize,
    pub generation_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_generations: u32,
    pub accuracy_drop_threshold: f64,
    /// Use only the first N training images.
    pub train_limit: Option<usize>,
    /// Use only the first N test images.
    pub test_limit: Option<usize>,
    /// Trained generation-1 checkpoint to start from.
    pub ancestor_checkpoint: Option<PathBuf>,
    /// Also write each generation's probability model as JSON.
    pub export_dna: bool,
    pub data: DataPaths,
    pub arch: ArchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let evo = EvolutionConfig::default();
        RunConfig {
            seed: evo.seed,
            out_dir: PathBuf::from("runs/default"),
            budget: evo.budget,
            mode: evo.mode,
            protect_output: evo.protect_output,
            inheritance: evo.inheritance,
            tau: evo.tau,
            ancestor_epochs: evo.ancestor_epochs,
            generation_epochs: evo.generation_epochs,
            lr: evo.train.lr,
            momentum: evo.train.momentum,
            batch_size: evo.train.batch_size,
            max_generations: evo.max_generations,
            accuracy_drop_threshold: evo.accuracy_drop_threshold,
            train_limit: None,
            test_limit: None,
            ancestor_checkpoint: None,
            export_dna: false,
            data: DataPaths::default(),
            arch: evo.arch,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::Config(format!("config not found: {}", path.display())))
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return Err(Error::Config("train_limit and test_limit must be at least 1".into()));
        }
        self.evolution(0).validate().map_err(|e| match e {
            e @ Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    pub fn evolution(&self, threads: usize) -> EvolutionConfig {
        EvolutionConfig {
            arch: self.arch.clone(),
            tau: self.tau,
            budget: self.budget,
            mode: self.mode,
            protect_output: self.protect_output,
            inheritance: self.inheritance,
            ancestor_epochs: self.ancestor_epochs,
            generation_epochs: self.generation_epochs,
            train: TrainConfig {
                lr: self.lr,
                momentum: self.momentum,
                batch_size: self.batch_size,
                threads,
            },
            max_generations: self.max_generations,
            accuracy_drop_threshold: self.accuracy_drop_threshold,
            seed: self.seed,
        }
    }
}

/// Worker threads requested through [`THREADS_ENV`].
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.budget, 0.8);
        assert_eq!(cfg.accuracy_drop_threshold, 0.03);
        assert_eq!((cfg.ancestor_epochs, cfg.generation_epochs), (3, 2));
    }

    #[test]
    fn parses_keys() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            budget = 0.5
            mode = "synapse_only"
            inheritance = "cold"
            tau = { quantile = 0.25 }
            train_limit = 1000
            [data]
            train_images = "x/imgs"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, EncodingMode::SynapseOnly);
        assert_eq!(cfg.inheritance, Inheritance::Cold);
        assert_eq!(cfg.tau, TauPolicy::Quantile(0.25));
        assert_eq!(cfg.train_limit, Some(1000));
        assert_eq!(cfg.data.train_images, PathBuf::from("x/imgs"));
        assert_eq!(cfg.data.test_labels, DataPaths::default().test_labels);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "budget = 0.0",
            "budget = 1.01",
            "accuracy_drop_threshold = 1.0",
            "ancestor_epochs = 0",
            "train_limit = 0",
            "colour = 3",
            "tau = { quantile = 2.0 }",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.ancestor_checkpoint = Some("a.ckpt".into());
        cfg.tau = TauPolicy::Fixed(0.01);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn missing_file_message() {
        let err = RunConfig::load(Path::new("/nonexistent/evosynth.toml")).unwrap_err();
        assert!(err.to_string().contains("config not found"), "{err}");
    }
}
