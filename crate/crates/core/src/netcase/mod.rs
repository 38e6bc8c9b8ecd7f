//! Network case model: bus and branch records, case loading, validation, and
//! admittance matrix assembly.
//!
//! Two on-disk formats are supported: a canonical JSON schema (documented in
//! the repository README) and a subset of the MATPOWER `.m` case format
//! restricted to plain pi-model lines. Everything is in per-unit on the
//! system MVA base.

mod json;
mod matpower;
mod ybus;

pub use ybus::{build_ybus, AdmittanceMatrix, YEntry};

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default voltage band applied to PQ buses whose case data does not carry
/// explicit limits. Applications are recorded in [`CaseMetadata`].
pub const DEFAULT_V_MIN: f64 = 0.9;
pub const DEFAULT_V_MAX: f64 = 1.1;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("branch {from}-{to} has zero series impedance")]
    DegenerateBranch { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// One bus. Injections are net per-unit quantities on the system base;
/// `v_ref` is the voltage setpoint for slack and PV buses; `v_min`/`v_max`
/// is the operating band for PQ buses. `g_sh`/`b_sh` are bus shunts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p_gen: f64,
    #[serde(default)]
    pub q_gen: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default = "default_v_ref")]
    pub v_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub g_sh: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b_sh: f64,
}

fn default_v_ref() -> f64 {
    1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl BusRecord {
    /// Net active injection (generation minus load).
    pub fn p_net(&self) -> f64 {
        self.p_gen - self.p_load
    }

    pub fn q_net(&self) -> f64 {
        self.q_gen - self.q_load
    }

    /// Voltage band; populated for every PQ bus after validation.
    pub fn band(&self) -> Option<(f64, f64)> {
        match (self.v_min, self.v_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }
}

/// One branch: pi-model series impedance plus total line charging `b_sh`.
/// Endpoints are external bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b_sh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseFormat {
    Json,
    #[serde(rename = "matpower")]
    MatpowerSubset,
}

/// Provenance notes filled during loading so outputs are self-describing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_format: Option<CaseFormat>,
    /// External ids of PQ buses whose voltage band was filled with the
    /// default [`DEFAULT_V_MIN`]..[`DEFAULT_V_MAX`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defaulted_voltage_limits: Vec<usize>,
}

impl CaseMetadata {
    fn is_default(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    #[serde(default, skip_serializing_if = "CaseMetadata::is_default")]
    pub metadata: CaseMetadata,
}

fn default_base_mva() -> f64 {
    100.0
}

impl NetworkCase {
    /// Position of the bus with external id `id` in `buses`, which is also
    /// its row in the admittance matrix.
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn kind_count(&self, kind: BusKind) -> usize {
        self.buses.iter().filter(|b| b.kind == kind).count()
    }

    /// Apply defaults and check structural consistency. Loaders call this;
    /// hand-built cases should call it before use.
    pub fn validate(&mut self) -> Result<(), CaseError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(CaseError::Validation(format!(
                "base_mva must be positive and finite, got {}",
                self.base_mva
            )));
        }
        if self.buses.is_empty() {
            return Err(CaseError::Validation("case has no buses".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                return Err(CaseError::Validation(format!("duplicate bus id {}", bus.id)));
            }
            for (name, v) in [
                ("p_gen", bus.p_gen),
                ("q_gen", bus.q_gen),
                ("p_load", bus.p_load),
                ("q_load", bus.q_load),
                ("v_ref", bus.v_ref),
                ("g_sh", bus.g_sh),
                ("b_sh", bus.b_sh),
            ] {
                if !v.is_finite() {
                    return Err(CaseError::Validation(format!(
                        "bus {}: {name} is not finite",
                        bus.id
                    )));
                }
            }
            match bus.kind {
                BusKind::Slack | BusKind::Pv => {
                    if bus.v_ref <= 0.0 {
                        return Err(CaseError::Validation(format!(
                            "bus {}: setpoint voltage must be positive, got {}",
                            bus.id, bus.v_ref
                        )));
                    }
                }
                BusKind::Pq => {}
            }
        }
        let slack_count = self.kind_count(BusKind::Slack);
        if slack_count != 1 {
            return Err(CaseError::Validation(format!(
                "expected exactly one slack bus, found {slack_count}"
            )));
        }
        // Voltage band defaults for PQ buses, recorded in metadata.
        for i in 0..self.buses.len() {
            if self.buses[i].kind != BusKind::Pq {
                continue;
            }
            let id = self.buses[i].id;
            if self.buses[i].v_min.is_none() || self.buses[i].v_max.is_none() {
                self.buses[i].v_min.get_or_insert(DEFAULT_V_MIN);
                self.buses[i].v_max.get_or_insert(DEFAULT_V_MAX);
                if !self.metadata.defaulted_voltage_limits.contains(&id) {
                    self.metadata.defaulted_voltage_limits.push(id);
                }
            }
            let (lo, hi) = self.buses[i].band().expect("just populated");
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                return Err(CaseError::Validation(format!(
                    "bus {id}: voltage band [{lo}, {hi}] must satisfy 0 < v_min < v_max"
                )));
            }
        }
        for br in &self.branches {
            if br.from == br.to {
                return Err(CaseError::Validation(format!(
                    "branch {}-{} connects a bus to itself",
                    br.from, br.to
                )));
            }
            for (name, v) in [("r", br.r), ("x", br.x), ("b_sh", br.b_sh)] {
                if !v.is_finite() {
                    return Err(CaseError::Validation(format!(
                        "branch {}-{}: {name} is not finite",
                        br.from, br.to
                    )));
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::DegenerateBranch { from: br.from, to: br.to });
            }
            for end in [br.from, br.to] {
                if self.position_of(end).is_none() {
                    return Err(CaseError::Validation(format!(
                        "branch {}-{} references unknown bus {end}",
                        br.from, br.to
                    )));
                }
            }
        }
        Ok(())
    }

    fn finalize(&mut self, format: CaseFormat) -> Result<(), CaseError> {
        if self.metadata.source_format.is_none() {
            self.metadata.source_format = Some(format);
        }
        self.validate()
    }

    /// Serialize to the canonical JSON schema.
    pub fn to_json(&self) -> String {
        json::to_string_pretty(self)
    }
}

/// Load a case from disk. The format is taken from `format` when given,
/// otherwise inferred from the file extension (`.json` or `.m`).
pub fn load_case(path: impl AsRef<Path>, format: Option<CaseFormat>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("json") => CaseFormat::Json,
            Some("m") => CaseFormat::MatpowerSubset,
            other => {
                return Err(CaseError::Validation(format!(
                    "cannot infer case format from extension {other:?}; pass one explicitly"
                )))
            }
        },
    };
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_case(&text, format)
}

/// Parse a case from in-memory text.
pub fn parse_case(text: &str, format: CaseFormat) -> Result<NetworkCase, CaseError> {
    let mut case = match format {
        CaseFormat::Json => json::parse(text)?,
        CaseFormat::MatpowerSubset => matpower::parse(text)?,
    };
    case.finalize(format)?;
    Ok(case)
}

#[cfg(test)]
mod tests;
