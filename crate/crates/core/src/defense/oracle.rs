use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use thiserror::Error;

use super::{perturb_output, DefenseError, NoiseSpec, OutputSite, PerturbedOutput};
use crate::nn::{softmax, Model, NnError, Real};
use crate::rng::StreamRng;

#[derive(Debug, Error)]
pub enum QueryError {
    /// Terminal: the attacker ran out of queries. Partial results remain valid.
    #[error("query budget of {limit} exhausted")]
    BudgetExhausted { limit: u64 },
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
}

impl QueryError {
    pub fn is_budget(&self) -> bool {
        matches!(self, QueryError::BudgetExhausted { .. })
    }
}

/// Query counter with a hard limit. Safe to share between threads.
#[derive(Debug)]
pub struct QueryLedger {
    used: AtomicU64,
    limit: u64,
}

impl QueryLedger {
    pub fn new(limit: u64) -> Self {
        Self { used: AtomicU64::new(0), limit }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    /// Charges one query, or fails without charging if the limit is reached.
    pub fn try_charge(&self) -> Result<(), QueryError> {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < self.limit).then_some(u + 1))
            .map(|_| ())
            .map_err(|_| QueryError::BudgetExhausted { limit: self.limit })
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.used()
    }
}

/// Black-box access: outputs only, every call counted.
pub trait Oracle {
    fn query(&mut self, x: &[f64]) -> Result<Vec<f64>, QueryError>;
    fn queries_used(&self) -> u64;
    fn query_limit(&self) -> u64;

    fn remaining(&self) -> u64 {
        self.query_limit().saturating_sub(self.queries_used())
    }
}

/// One defended evaluation of `model` at `x`.
///
/// The ledger is charged before the model runs, so an exhausted budget never
/// triggers an evaluation. With `OutputSite::Probabilities` the caller gets
/// `softmax(f(x)) + ε`; with `OutputSite::Logits`, `softmax(f(x) + ε)`.
pub fn defended_query<T: Real, R: Rng + ?Sized>(
    model: &Model<T>,
    x: &[f64],
    spec: &NoiseSpec,
    rng: &mut R,
    ledger: &QueryLedger,
) -> Result<PerturbedOutput, QueryError> {
    if spec.num_classes() != model.num_classes() {
        return Err(DefenseError::DimensionMismatch {
            what: "noise spec",
            expected: model.num_classes(),
            got: spec.num_classes(),
        }
        .into());
    }
    ledger.try_charge()?;
    let logits = model.forward_f64(x)?;
    Ok(match spec.site {
        OutputSite::Probabilities => perturb_output(&softmax(&logits)?, spec, rng)?,
        OutputSite::Logits => {
            let noisy = perturb_output(&logits, spec, rng)?;
            PerturbedOutput(softmax(&noisy.0)?)
        }
    })
}

/// A model behind output randomization and a query budget.
///
/// The noise stream belongs to the defender; attackers never see it.
pub struct DefendedModel<'a, T: Real = f64> {
    model: &'a Model<T>,
    spec: NoiseSpec,
    rng: StreamRng,
    ledger: QueryLedger,
}

impl<'a, T: Real> DefendedModel<'a, T> {
    pub fn new(model: &'a Model<T>, spec: NoiseSpec, rng: StreamRng, limit: u64) -> Result<Self, DefenseError> {
        spec.validate()?;
        if spec.num_classes() != model.num_classes() {
            return Err(DefenseError::DimensionMismatch {
                what: "noise spec",
                expected: model.num_classes(),
                got: spec.num_classes(),
            });
        }
        Ok(Self { model, spec, rng, ledger: QueryLedger::new(limit) })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }
}

impl<T: Real> Oracle for DefendedModel<'_, T> {
    fn query(&mut self, x: &[f64]) -> Result<Vec<f64>, QueryError> {
        defended_query(self.model, x, &self.spec, &mut self.rng, &self.ledger).map(|d| d.0)
    }

    fn queries_used(&self) -> u64 {
        self.ledger.used()
    }

    fn query_limit(&self) -> u64 {
        self.ledger.limit()
    }
}
