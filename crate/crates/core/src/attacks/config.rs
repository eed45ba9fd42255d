use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::nn::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackFamily {
    Zoo,
    QlNes,
    Pgd,
    CwL2,
}

impl AttackFamily {
    pub fn name(self) -> &'static str {
        match self {
            AttackFamily::Zoo => "zoo",
            AttackFamily::QlNes => "ql_nes",
            AttackFamily::Pgd => "pgd",
            AttackFamily::CwL2 => "cw_l2",
        }
    }

    /// Black-box families only see defended outputs.
    pub fn is_black_box(self) -> bool {
        matches!(self, AttackFamily::Zoo | AttackFamily::QlNes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZooSolver {
    #[default]
    Adam,
    Newton,
}

/// Arithmetic used for white-box gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZooParams {
    pub solver: ZooSolver,
    /// Adam step size per coordinate.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Newton step `-eta * g / max(h, hessian_floor)`, or `-eta * g` when the
    /// curvature estimate `h` is not positive.
    pub newton_eta: f64,
    /// Lower clamp on positive curvature estimates.
    pub hessian_floor: f64,
    /// Stop when the best objective has not improved for this many queries.
    pub stagnation_queries: u64,
}

impl Default for ZooParams {
    fn default() -> Self {
        Self {
            solver: ZooSolver::Adam,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            newton_eta: 0.01,
            hessian_floor: 1e-3,
            stagnation_queries: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NesParams {
    pub search_sigma: f64,
    /// Antithetic pairs per gradient estimate.
    pub samples: usize,
    /// Sign-step size.
    pub step: f64,
    /// l-infinity budget around the original input.
    pub eps: f64,
}

impl Default for NesParams {
    fn default() -> Self {
        Self { search_sigma: 0.001, samples: 50, step: 0.01, eps: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdParams {
    pub eps: f64,
    pub step: f64,
    pub steps: usize,
    pub random_start: bool,
}

impl Default for PgdParams {
    fn default() -> Self {
        Self { eps: 8.0 / 255.0, step: 2.0 / 255.0, steps: 10, random_start: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdConfig {
    pub eps: f64,
    pub step: f64,
    pub steps: usize,
    pub random_start: bool,
    pub loss: LossKind,
    pub precision: Precision,
}

impl PgdConfig {
    pub fn params(&self) -> PgdParams {
        PgdParams { eps: self.eps, step: self.step, steps: self.steps, random_start: self.random_start }
    }
}

impl Default for PgdConfig {
    fn default() -> Self {
        let p = PgdParams::default();
        Self {
            eps: p.eps,
            step: p.step,
            steps: p.steps,
            random_start: p.random_start,
            loss: LossKind::Xent,
            precision: Precision::F32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwParams {
    pub steps: usize,
    pub learning_rate: f64,
    /// Standard deviation of logit noise seen by the attacker's gradient; 0 for a clean model.
    pub logit_sigma: f64,
    /// Noisy gradients averaged per step when `logit_sigma > 0`.
    pub samples: usize,
}

impl Default for CwParams {
    fn default() -> Self {
        Self { steps: 500, learning_rate: 0.01, logit_sigma: 0.0, samples: 1 }
    }
}

/// Everything needed to run one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Label used in reports; defaults to the family name.
    pub name: Option<String>,
    pub family: AttackFamily,
    pub targeted: bool,
    pub target: Option<usize>,
    pub kappa: f64,
    /// Finite-difference step.
    pub h: f64,
    /// Budget of physical (defended) queries.
    pub max_queries: u64,
    /// Distortion weight `c` for ZOO and CW-L2.
    pub c: f64,
    /// Defended queries averaged per logical query (adaptive attacker when > 1).
    pub averaging: usize,
    /// Double `max_queries` when `averaging > 1`.
    pub adaptive_budget_doubling: bool,
    pub zoo: ZooParams,
    pub nes: NesParams,
    pub pgd: PgdConfig,
    pub cw: CwParams,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            name: None,
            family: AttackFamily::Zoo,
            targeted: false,
            target: None,
            kappa: 0.0,
            h: 1e-4,
            max_queries: 20_000,
            c: 10.0,
            averaging: 1,
            adaptive_budget_doubling: true,
            zoo: ZooParams::default(),
            nes: NesParams::default(),
            pgd: PgdConfig::default(),
            cw: CwParams::default(),
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.family.name().to_string())
    }

    /// Physical query budget after the adaptive-attacker allowance.
    pub fn effective_max_queries(&self) -> u64 {
        if self.averaging > 1 && self.adaptive_budget_doubling {
            self.max_queries.saturating_mul(2)
        } else {
            self.max_queries
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::InvalidConfig(m.to_string()));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h must be positive");
        }
        if self.averaging == 0 {
            return bad("averaging must be at least 1");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa must be nonnegative");
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad("c must be nonnegative");
        }
        if self.targeted && self.target.is_none() {
            return bad("targeted attack without a target class");
        }
        match self.family {
            AttackFamily::Zoo => {
                let z = &self.zoo;
                if !(z.learning_rate > 0.0) || !(0.0..1.0).contains(&z.beta1) || !(0.0..1.0).contains(&z.beta2) {
                    return bad("zoo needs learning_rate > 0 and betas in [0, 1)");
                }
                if !(z.hessian_floor > 0.0) || !(z.newton_eta > 0.0) || z.stagnation_queries == 0 {
                    return bad("zoo needs hessian_floor, newton_eta and stagnation_queries positive");
                }
            }
            AttackFamily::QlNes => {
                let n = &self.nes;
                if !(n.search_sigma > 0.0) || n.samples == 0 || !(n.step > 0.0) || !(n.eps >= 0.0) {
                    return bad("nes needs search_sigma > 0, samples > 0, step > 0, eps >= 0");
                }
            }
            AttackFamily::Pgd => {
                let p = &self.pgd;
                if !(p.eps >= 0.0) || !(p.step >= 0.0) {
                    return bad("pgd needs eps >= 0 and step >= 0");
                }
            }
            AttackFamily::CwL2 => {
                if !(self.cw.learning_rate > 0.0) || self.cw.samples == 0 || !(self.cw.logit_sigma >= 0.0) {
                    return bad("cw needs learning_rate > 0, samples > 0, logit_sigma >= 0");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let text = r#"
family = "zoo"
h = 0.0001
max_queries = 5000
averaging = 10
[zoo]
solver = "newton"
[pgd]
eps = 0.1
loss = { cw = { kappa = 0.0 } }
"#;
        let cfg: AttackConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.zoo.solver, ZooSolver::Newton);
        assert_eq!(cfg.pgd.eps, 0.1);
        assert_eq!(cfg.pgd.steps, 10);
        assert_eq!(cfg.pgd.loss, LossKind::Cw { kappa: 0.0 });
        assert_eq!(cfg.effective_max_queries(), 10_000);
        cfg.validate().unwrap();
        let back: AttackConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<AttackConfig>("familly = \"zoo\"").is_err());
        assert!(toml::from_str::<AttackConfig>("[zoo]\nlr = 1.0").is_err());
    }

    #[test]
    fn validation() {
        assert!(AttackConfig { h: 0.0, ..Default::default() }.validate().is_err());
        assert!(AttackConfig { averaging: 0, ..Default::default() }.validate().is_err());
        assert!(AttackConfig { targeted: true, ..Default::default() }.validate().is_err());
        assert!(AttackConfig::default().validate().is_ok());
    }
}
