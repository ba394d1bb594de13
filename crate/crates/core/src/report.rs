//! Report schema and plot-ready CSV emission.
//!
//! Reports are fully deterministic for a fixed `(config, seed)`: field order
//! is fixed, maps are ordered, and wall-clock timing is kept out of the
//! canonical files (the CLI prints it to the console instead).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::AttainmentTable;
use crate::sets::StateVector;
use crate::verdict::{VerdictStatus, Witness};

/// One operation's canonical JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpReport {
    pub property: String,
    pub system: String,
    pub set: String,
    pub verdict: VerdictStatus,
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub evidence: BTreeMap<String, f64>,
    pub samples: usize,
    pub seed: u64,
}

impl OpReport {
    pub fn new(property: &str, system: &str, set: &str, verdict: VerdictStatus, seed: u64) -> Self {
        Self {
            property: property.into(),
            system: system.into(),
            set: set.into(),
            verdict,
            parameters: BTreeMap::new(),
            certificate: None,
            witness: None,
            evidence: BTreeMap::new(),
            samples: 0,
            seed,
        }
    }

    pub fn with_param(mut self, key: &str, value: serde_json::Value) -> Self {
        self.parameters.insert(key.into(), value);
        self
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("report serialization failed: {e}")))
    }

    /// The one-line summary row: system, property, set, verdict, parameters.
    pub fn summary_row(&self) -> String {
        let params: Vec<String> = self
            .parameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!(
            "{},{},{},{},{}",
            self.system,
            self.property,
            self.set,
            self.verdict,
            escape_csv(&params.join(";"))
        )
    }
}

pub const SUMMARY_HEADER: &str = "system,property,set,verdict,parameters";

fn escape_csv(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Trajectory CSV with header `t,x_1..x_n`.
pub fn trajectory_csv(times: &[f64], states: &[StateVector]) -> String {
    let n = states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push('\n');
    for (t, s) in times.iter().zip(states) {
        out.push_str(&format!("{t}"));
        for v in s {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Attainment table CSV with header `eps,r,tau` (empty tau for exhausted
/// nodes).
pub fn tau_table_csv(table: &AttainmentTable) -> String {
    let mut out = String::from("eps,r,tau\n");
    for node in &table.rows {
        match node.tau_hat {
            Some(tau) => out.push_str(&format!("{},{},{}\n", node.eps, node.r, tau)),
            None => out.push_str(&format!("{},{},\n", node.eps, node.r)),
        }
    }
    out
}
