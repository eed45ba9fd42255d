use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use super::dataset::SynthSpec;
use super::error::HarnessError;
use crate::attacks::{AttackConfig, PgdConfig};
use crate::defense::OutputSite;
use crate::nn::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Accepts `x = 0.1` as well as `x = [0.1, 0.2]`.
fn scalar_or_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Directory with `train-*` / `t10k-*` IDX files, relative paths taken
    /// from the config file's directory.
    Mnist {
        dir: PathBuf,
        /// Keep only the first `n` training / test examples.
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
    },
    Synthetic {
        classes: usize,
        dims: usize,
        separation: f64,
        n: usize,
        #[serde(default)]
        n_test: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

impl DatasetConfig {
    pub fn synth_spec(&self) -> Option<SynthSpec> {
        match self {
            DatasetConfig::Synthetic { classes, dims, separation, n, n_test, .. } => {
                Some(SynthSpec { classes: *classes, dims: *dims, separation: *separation, n: *n, n_test: *n_test })
            }
            DatasetConfig::Mnist { .. } => None,
        }
    }
}

/// Picks the training-noise standard deviation on a validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrTuning {
    pub candidates: Vec<f64>,
    /// Training examples held out for selection.
    pub validation: usize,
    /// Largest allowed drop in validation accuracy against a noise-free
    /// model, as a fraction.
    pub max_accuracy_drop: f64,
    /// Attack whose robust accuracy is maximized.
    pub pgd: PgdConfig,
    /// Validation images attacked per candidate.
    pub n_attack: usize,
}

impl Default for OrTuning {
    fn default() -> Self {
        Self {
            candidates: vec![1.0, 10.0, 50.0],
            validation: 1000,
            max_accuracy_drop: 0.03,
            pgd: PgdConfig::default(),
            n_attack: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden layer widths of the MLP.
    pub hidden: Vec<usize>,
    /// Load this checkpoint instead of training.
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
    pub tune_or_sigma: Option<OrTuning>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![128], checkpoint: None, train: TrainConfig::default(), tune_or_sigma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseConfig {
    /// Isotropic variances to sweep; a single number is a one-point sweep.
    #[serde(deserialize_with = "scalar_or_list")]
    pub sigma2: Vec<f64>,
    pub mu: f64,
    pub site: OutputSite,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self { sigma2: vec![0.0], mu: 0.0, site: OutputSite::Probabilities }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    #[serde(deserialize_with = "scalar_or_list")]
    pub delta: Vec<f64>,
    #[serde(deserialize_with = "scalar_or_list")]
    pub k: Vec<f64>,
    pub trials: usize,
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.delta.iter().any(|d| !(*d > 0.0)) || self.k.iter().any(|k| !(*k > 0.0 && *k < 0.5)) || self.trials == 0
        {
            return Err(HarnessError::Config("calibration needs delta > 0, K in (0, 0.5) and trials > 0".into()));
        }
        Ok(())
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { delta: vec![0.2, 0.5, 0.8], k: vec![0.01, 0.1, 0.2], trials: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Training-noise standard deviation of the substitute model.
    pub substitute_or_sigma: f64,
    pub attack: AttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_images")]
    pub n_eval_images: usize,
    /// Attack and defense seeds per image; the model stays fixed.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default, rename = "attack")]
    pub attacks: Vec<AttackConfig>,
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_images() -> usize {
    20
}

fn default_repeats() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative dataset and checkpoint
    /// paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetConfig::Mnist { dir, .. } = &mut cfg.dataset {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        if let Some(ckpt) = &mut cfg.model.checkpoint {
            if ckpt.is_relative() {
                *ckpt = base.join(&*ckpt);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.n_eval_images == 0 || self.repeats == 0 {
            return bad("n_eval_images and repeats must be at least 1".into());
        }
        if self.defense.sigma2.is_empty() || self.defense.sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("defense.sigma2 must be a nonempty list of nonnegative numbers".into());
        }
        if !self.defense.mu.is_finite() {
            return bad("defense.mu must be finite".into());
        }
        if self.model.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        self.model.train.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(t) = &self.model.tune_or_sigma {
            if t.candidates.is_empty() || t.candidates.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return bad("tune_or_sigma.candidates must be nonnegative".into());
            }
        }
        for a in self.attacks.iter().chain(self.transfer.as_ref().map(|t| &t.attack)) {
            a.validate().map_err(|e| HarnessError::Config(format!("attack {}: {e}", a.label())))?;
        }
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackFamily;

    const FULL: &str = r#"
schema_version = 1
name = "sweep"
seed = 7
n_eval_images = 5

[dataset]
kind = "synthetic"
classes = 3
dims = 4
separation = 6.0
n = 300

[model]
hidden = [16]
train = { iterations = 100, learning_rate = 0.1 }

[defense]
sigma2 = [0.0, 1e-4]

[[attack]]
family = "zoo"
max_queries = 500

[[attack]]
family = "pgd"
pgd = { eps = 0.1, step = 0.02, loss = { cw = { kappa = 0.0 } } }
"#;

    #[test]
    fn parses_a_full_config() {
        let c = ExperimentConfig::from_toml(FULL).unwrap();
        assert_eq!(c.defense.sigma2, vec![0.0, 1e-4]);
        assert_eq!(c.attacks.len(), 2);
        assert_eq!(c.attacks[1].family, AttackFamily::Pgd);
        assert_eq!(c.repeats, 3);
        assert_eq!(c.model.train.iterations, 100);
    }

    #[test]
    fn scalar_sigma2_is_a_one_point_sweep() {
        let text = FULL.replace("sigma2 = [0.0, 1e-4]", "sigma2 = 0.01");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap().defense.sigma2, vec![0.01]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = FULL.replace("sigma2 = [0.0, 1e-4]", "sigma_2 = [0.0, 1e-4]");
        let err = ExperimentConfig::from_toml(&typo).unwrap_err();
        assert!(err.is_config() && err.to_string().contains("sigma_2"), "{err}");
        let nested = FULL.replace("max_queries = 500", "max_querys = 500");
        assert!(ExperimentConfig::from_toml(&nested).unwrap_err().is_config());
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("schema_version = 1", "schema_version = 2"),
            ("n_eval_images = 5", "n_eval_images = 0"),
            ("sigma2 = [0.0, 1e-4]", "sigma2 = [-1.0]"),
            ("max_queries = 500", "averaging = 0"),
        ] {
            let err = ExperimentConfig::from_toml(&FULL.replace(from, to)).unwrap_err();
            assert!(err.is_config(), "{to}: {err}");
        }
    }
}
