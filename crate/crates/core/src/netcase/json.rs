//! Canonical JSON case schema (serde-backed).

use super::{CaseError, NetworkCase};

pub fn parse(text: &str) -> Result<NetworkCase, CaseError> {
    serde_json::from_str(text).map_err(|e| CaseError::Parse {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn to_string_pretty(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serialization cannot fail")
}
