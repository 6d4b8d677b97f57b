//! Power-system case description: buses, branches and generators in per-unit.
//!
//! Cases are stored in a small JSON schema:
//!
//! ```json
//! {
//!   "base_mva": 100.0,
//!   "buses": [{"id": 1, "type": "Vtheta", "Pd": 0.0, "Qd": 0.0, "Gs": 0.0, "Bs": 0.0, "Vset": 1.0}],
//!   "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.1, "b": 0.0, "tap": 1.0, "shift": 0.0, "status": true}],
//!   "generators": [{"bus": 1, "Pg": 0.0, "Qg": 0.0, "Vg": 1.0}]
//! }
//! ```
//!
//! Every quantity is per-unit on `base_mva`, angles (`shift`) are radians.
//! Unknown keys are rejected.

mod admittance;
mod ordering;

pub use admittance::{build_admittance, AdmittanceSet, BranchAdmittance};
pub use ordering::{bus_ordering, BusOrdering};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusType {
    PQ,
    PV,
    /// Reference bus with known voltage magnitude and angle.
    #[serde(rename = "Vtheta")]
    Slack,
}

impl BusType {
    pub fn as_str(self) -> &'static str {
        match self {
            BusType::PQ => "PQ",
            BusType::PV => "PV",
            BusType::Slack => "Vtheta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub btype: BusType,
    /// Active demand, positive for consumption.
    #[serde(rename = "Pd")]
    pub pd: f64,
    #[serde(rename = "Qd")]
    pub qd: f64,
    #[serde(rename = "Gs")]
    pub gs: f64,
    #[serde(rename = "Bs")]
    pub bs: f64,
    /// Voltage magnitude setpoint, present on PV and slack buses only.
    #[serde(rename = "Vset", default, skip_serializing_if = "Option::is_none")]
    pub vset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(rename = "b")]
    pub b_sh: f64,
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    #[serde(rename = "Pg")]
    pub pg: f64,
    #[serde(rename = "Qg")]
    pub qg: f64,
    #[serde(rename = "Vg")]
    pub vg: f64,
}

/// A validated power-system case.
///
/// Construct through [`NetworkCase::new`], [`NetworkCase::from_json_str`] or
/// [`load_case`]; all of them check the structural invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl NetworkCase {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let case = NetworkCase {
            base_mva,
            buses,
            branches,
            generators,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let case: NetworkCase =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Validation(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        if self.buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        let mut ids = HashMap::with_capacity(self.buses.len());
        for (k, bus) in self.buses.iter().enumerate() {
            if ids.insert(bus.id, k).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            match (bus.btype, bus.vset) {
                (BusType::PQ, Some(_)) => {
                    return Err(Error::Validation(format!(
                        "PQ bus {} must not carry a voltage setpoint",
                        bus.id
                    )))
                }
                (BusType::PV | BusType::Slack, None) => {
                    return Err(Error::Validation(format!(
                        "{} bus {} needs a voltage setpoint",
                        bus.btype.as_str(),
                        bus.id
                    )))
                }
                (_, Some(v)) if !(v > 0.5 && v < 1.5) => {
                    return Err(Error::Validation(format!(
                        "bus {} voltage setpoint {v} outside (0.5, 1.5)",
                        bus.id
                    )))
                }
                _ => {}
            }
            let fields = [bus.pd, bus.qd, bus.gs, bus.bs];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "bus {} has non-finite data",
                    bus.id
                )));
            }
        }
        let n_slack = self
            .buses
            .iter()
            .filter(|b| b.btype == BusType::Slack)
            .count();
        if n_slack != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one Vtheta bus, found {n_slack}"
            )));
        }
        for (k, br) in self.branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !ids.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "branch {} references unknown bus {end}",
                        k + 1
                    )));
                }
            }
            if br.from == br.to {
                return Err(Error::Validation(format!(
                    "branch {} is a self loop",
                    k + 1
                )));
            }
            if br.status && br.x == 0.0 {
                return Err(Error::Validation(format!(
                    "in-service branch {} has zero reactance",
                    k + 1
                )));
            }
            if !(br.tap > 0.0) {
                return Err(Error::Validation(format!(
                    "branch {} has non-positive tap {}",
                    k + 1,
                    br.tap
                )));
            }
            if [br.r, br.x, br.b_sh, br.shift]
                .iter()
                .any(|v| !v.is_finite())
            {
                return Err(Error::Validation(format!(
                    "branch {} has non-finite data",
                    k + 1
                )));
            }
        }
        for g in &self.generators {
            if !ids.contains_key(&g.bus) {
                return Err(Error::Validation(format!(
                    "generator references unknown bus {}",
                    g.bus
                )));
            }
        }
        for bus in self.buses.iter().filter(|b| b.btype == BusType::PV) {
            if !self.generators.iter().any(|g| g.bus == bus.id) {
                return Err(Error::Validation(format!(
                    "PV bus {} hosts no generator",
                    bus.id
                )));
            }
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of the bus with the given id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.btype == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn bus_types(&self) -> Vec<BusType> {
        self.buses.iter().map(|b| b.btype).collect()
    }

    /// Indices (into `branches`) of the in-service branches, in file order.
    pub fn in_service_branches(&self) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.status)
            .map(|(k, _)| k)
            .collect()
    }

    /// Number of in-service branches (the L of a snapshot vector).
    pub fn n_flows(&self) -> usize {
        self.branches.iter().filter(|br| br.status).count()
    }

    /// Net scheduled generation per bus, (P, Q).
    pub fn generation(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_buses();
        let mut pg = vec![0.0; n];
        let mut qg = vec![0.0; n];
        for g in &self.generators {
            let k = self.bus_index(g.bus).expect("validated generator bus");
            pg[k] += g.pg;
            qg[k] += g.qg;
        }
        (pg, qg)
    }

    /// Copy of the case with bus types replaced. Setpoints are kept where
    /// they exist; a bus that becomes PV or slack without one gets 1.0.
    pub fn with_bus_types(&self, types: &[BusType]) -> Result<Self> {
        if types.len() != self.n_buses() {
            return Err(Error::InvalidInput(format!(
                "expected {} bus types, got {}",
                self.n_buses(),
                types.len()
            )));
        }
        let mut case = self.clone();
        for (bus, &t) in case.buses.iter_mut().zip(types) {
            bus.btype = t;
            bus.vset = match t {
                BusType::PQ => None,
                _ => Some(bus.vset.unwrap_or(1.0)),
            };
        }
        case.validate()?;
        Ok(case)
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NetworkCase::from_json_str(&text)
}
