//! Three-round plateau detection on the global accuracy series.

use serde::{Serialize, Serializer};

pub const WINDOW: usize = 3;

/// Either the first converged round or `"inf"` when the run never settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConvergenceRound {
    Round(u64),
    Inf,
}

impl ConvergenceRound {
    pub fn round(&self) -> Option<u64> {
        match self {
            ConvergenceRound::Round(r) => Some(*r),
            ConvergenceRound::Inf => None,
        }
    }
}

impl std::fmt::Display for ConvergenceRound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConvergenceRound::Round(r) => write!(f, "{r}"),
            ConvergenceRound::Inf => f.write_str("inf"),
        }
    }
}

impl Serialize for ConvergenceRound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ConvergenceRound::Round(r) => s.serialize_u64(*r),
            ConvergenceRound::Inf => s.serialize_str("inf"),
        }
    }
}

/// Declares convergence at the first round `r` whose last three accuracy
/// changes (`r-2`, `r-1`, `r`) are all smaller than `epsilon` in magnitude.
/// Round 1 has no predecessor, so the earliest possible answer is round 4.
#[derive(Debug, Clone)]
pub struct ConvergenceTracker {
    epsilon: f64,
    history: Vec<f64>,
    converged_at: Option<u64>,
}

impl ConvergenceTracker {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            history: Vec::new(),
            converged_at: None,
        }
    }

    /// Records the next round's accuracy; returns true once converged.
    pub fn push(&mut self, accuracy: f64) -> bool {
        self.history.push(accuracy);
        if self.converged_at.is_none() && self.history.len() > WINDOW {
            let tail = &self.history[self.history.len() - WINDOW - 1..];
            if tail.windows(2).all(|w| (w[1] - w[0]).abs() < self.epsilon) {
                self.converged_at = Some(self.history.len() as u64);
            }
        }
        self.converged_at.is_some()
    }

    pub fn converged_at(&self) -> Option<u64> {
        self.converged_at
    }

    pub fn result(&self) -> ConvergenceRound {
        self.converged_at
            .map_or(ConvergenceRound::Inf, ConvergenceRound::Round)
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}
