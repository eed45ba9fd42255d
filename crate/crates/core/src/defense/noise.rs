use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DefenseError;
use crate::nn::argmax;

/// Class-probability vector `p`: nonnegative, summing to one within `1e-6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self, DefenseError> {
        if values.is_empty() {
            return Err(DefenseError::NotAProbabilityVector("empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DefenseError::NotAProbabilityVector("negative or non-finite entry".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DefenseError::NotAProbabilityVector(format!("entries sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Predicted class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A defended output `d(p)`. May be negative and need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedOutput(pub Vec<f64>);

impl PerturbedOutput {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Which output the defense perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputSite {
    /// After softmax: the caller receives `p + ε`.
    #[default]
    Probabilities,
    /// Before softmax: the caller receives `softmax(z + ε)`.
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Inference,
    Training,
}

/// Per-class Gaussian noise `ε ~ N(mu, diag(sigma2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub site: OutputSite,
    pub phase: Phase,
}

impl NoiseSpec {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>, site: OutputSite, phase: Phase) -> Result<Self, DefenseError> {
        let spec = Self { mu, sigma2, site, phase };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero-mean noise with a shared variance, at inference on probabilities.
    pub fn isotropic(num_classes: usize, sigma2: f64) -> Result<Self, DefenseError> {
        Self::new(vec![0.0; num_classes], vec![sigma2; num_classes], OutputSite::Probabilities, Phase::Inference)
    }

    pub fn with_site(mut self, site: OutputSite) -> Self {
        self.site = site;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.mu.len()
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma2.iter().all(|&s| s == 0.0) && self.mu.iter().all(|&m| m == 0.0)
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        if self.mu.len() != self.sigma2.len() {
            return Err(DefenseError::DimensionMismatch {
                what: "noise variances",
                expected: self.mu.len(),
                got: self.sigma2.len(),
            });
        }
        if self.mu.is_empty() {
            return Err(DefenseError::InvalidArgument("noise spec for zero classes".into()));
        }
        if self.sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(DefenseError::InvalidArgument("variances must be finite and nonnegative".into()));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(DefenseError::InvalidArgument("means must be finite".into()));
        }
        Ok(())
    }
}

/// `v + ε` with a fresh draw of `ε`. No clipping, no renormalization.
///
/// Classes with zero variance get exactly their mean added and consume no
/// random numbers.
pub fn perturb_output<R: Rng + ?Sized>(
    values: &[f64],
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<PerturbedOutput, DefenseError> {
    if values.len() != spec.num_classes() {
        return Err(DefenseError::DimensionMismatch {
            what: "output vector",
            expected: spec.num_classes(),
            got: values.len(),
        });
    }
    let out = values
        .iter()
        .zip(spec.mu.iter().zip(&spec.sigma2))
        .map(|(&v, (&mu, &s2))| {
            if s2 == 0.0 {
                v + mu
            } else {
                let z: f64 = rng.sample(StandardNormal);
                v + mu + s2.sqrt() * z
            }
        })
        .collect();
    Ok(PerturbedOutput(out))
}
