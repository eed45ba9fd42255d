use serde::{Deserialize, Serialize};

use crate::numfmt::g6;

/// What the attacker is after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    /// Any class except `label`.
    Untargeted { label: usize },
    /// Exactly class `target`.
    Targeted { target: usize },
}

impl Goal {
    pub fn reached(self, predicted: usize) -> bool {
        match self {
            Goal::Untargeted { label } => predicted != label,
            Goal::Targeted { target } => predicted == target,
        }
    }

    pub fn class(self) -> usize {
        match self {
            Goal::Untargeted { label } => label,
            Goal::Targeted { target } => target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Success,
    BudgetExhausted,
    Stagnation,
    /// Fixed iteration count finished (white-box attacks).
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub queries: u64,
    pub loss: f64,
    /// Smallest l2 distortion of a successful iterate so far, `inf` if none.
    pub best_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    /// As observed by the attacker (through the defense for black-box attacks).
    pub success: bool,
    pub adversarial_example: Option<Vec<f64>>,
    pub l2: f64,
    pub linf: f64,
    pub queries_used: u64,
    pub loss_trace: Vec<TracePoint>,
    pub stop_reason: StopReason,
    /// Some defended output was nonpositive and its log was floored.
    pub clamped: bool,
}

impl AttackResult {
    pub(crate) fn new() -> Self {
        Self {
            success: false,
            adversarial_example: None,
            l2: 0.0,
            linf: 0.0,
            queries_used: 0,
            loss_trace: Vec::new(),
            stop_reason: StopReason::Completed,
            clamped: false,
        }
    }

    pub(crate) fn record_success(&mut self, x: &[f64], x0: &[f64]) {
        self.success = true;
        self.l2 = l2_distance(x, x0);
        self.linf = linf_distance(x, x0);
        self.adversarial_example = Some(x.to_vec());
    }

    pub(crate) fn best_l2(&self) -> f64 {
        if self.success {
            self.l2
        } else {
            f64::INFINITY
        }
    }

    /// Loss trace as CSV with header `iteration,queries,loss,best_l2`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,queries,loss,best_l2\n");
        for t in &self.loss_trace {
            out.push_str(&format!("{},{},{},{}\n", t.iteration, t.queries, g6(t.loss), g6(t.best_l2)));
        }
        out
    }
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn in_unit_box(x: &[f64]) -> bool {
    x.iter().all(|v| (0.0..=1.0).contains(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goals() {
        assert!(Goal::Untargeted { label: 1 }.reached(0));
        assert!(!Goal::Untargeted { label: 1 }.reached(1));
        assert!(Goal::Targeted { target: 2 }.reached(2));
    }

    #[test]
    fn trace_csv_format() {
        let mut r = AttackResult::new();
        r.loss_trace.push(TracePoint { iteration: 0, queries: 2, loss: 1.25, best_l2: f64::INFINITY });
        r.loss_trace.push(TracePoint { iteration: 1, queries: 4, loss: 1.0 / 3.0, best_l2: 0.5 });
        assert_eq!(r.trace_csv(), "iteration,queries,loss,best_l2\n0,2,1.25,inf\n1,4,0.333333,0.5\n");
    }

    #[test]
    fn distances() {
        assert_eq!(l2_distance(&[0.0, 3.0], &[4.0, 0.0]), 5.0);
        assert_eq!(linf_distance(&[0.0, 3.0], &[4.0, 0.0]), 4.0);
    }
}
