//! Three-valued check outcomes with replayable witnesses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sets::StateVector;
use crate::signal::InputSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Consistent,
    Falsified,
    Inconclusive,
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerdictStatus::Consistent => write!(f, "consistent"),
            VerdictStatus::Falsified => write!(f, "falsified"),
            VerdictStatus::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// A concrete `(t, x, u)` triple demonstrating a violation, with the measured
/// residual and a short description of the violated claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x0: StateVector,
    pub input: InputSignal,
    pub residual: f64,
    pub description: String,
}

/// Outcome of a sampled check. A `consistent` verdict means "no violation
/// found within budget", never a proof; `falsified` carries a witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub witness: Option<Witness>,
    /// Summary statistics (sample counts, suprema, attainment times, ...).
    pub evidence: BTreeMap<String, f64>,
}

impl Verdict {
    pub fn consistent() -> Self {
        Self { status: VerdictStatus::Consistent, witness: None, evidence: BTreeMap::new() }
    }

    pub fn falsified(witness: Witness) -> Self {
        Self {
            status: VerdictStatus::Falsified,
            witness: Some(witness),
            evidence: BTreeMap::new(),
        }
    }

    pub fn inconclusive() -> Self {
        Self { status: VerdictStatus::Inconclusive, witness: None, evidence: BTreeMap::new() }
    }

    pub fn with_stat(mut self, key: &str, value: f64) -> Self {
        self.evidence.insert(key.to_string(), value);
        self
    }

    pub fn is_consistent(&self) -> bool {
        self.status == VerdictStatus::Consistent
    }

    pub fn is_falsified(&self) -> bool {
        self.status == VerdictStatus::Falsified
    }
}
