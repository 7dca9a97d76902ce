//! Requirement registry: the table of checkable clauses every verdict cites.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::EngineError;

const BUILTIN: &str = include_str!("requirements.toml");

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequirementId(String);

impl RequirementId {
    pub fn new(id: impl Into<String>) -> Self {
        RequirementId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RequirementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RequirementId {
    fn from(s: &str) -> Self {
        RequirementId(s.to_string())
    }
}

impl PartialEq<&str> for RequirementId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Ids the engine emits. Each must exist in the registry.
pub mod ids {
    pub const CODEC_FAILURE: &str = "CODEC_FAILURE";
    pub const PKT_PN_MONOTONIC: &str = "PKT_PN_MONOTONIC";
    pub const PKT_VERSION: &str = "PKT_VERSION";
    pub const PKT_RESERVED_BITS: &str = "PKT_RESERVED_BITS";
    pub const CID_LEN_MAX: &str = "CID_LEN_MAX";
    pub const INIT_TOKEN_UNEXPECTED: &str = "INIT_TOKEN_UNEXPECTED";
    pub const FRAME_LEVEL_ILLEGAL: &str = "FRAME_LEVEL_ILLEGAL";
    pub const FRAME_TYPE_UNKNOWN: &str = "FRAME_TYPE_UNKNOWN";
    pub const ROLE_ILLEGAL_FRAME: &str = "ROLE_ILLEGAL_FRAME";
    pub const NEW_TOKEN_EMPTY: &str = "NEW_TOKEN_EMPTY";
    pub const NCID_LEN: &str = "NCID_LEN";
    pub const NCID_RTP: &str = "NCID_RTP";
    pub const NCID_SEQ_CONFLICT: &str = "NCID_SEQ_CONFLICT";
    pub const CID_LIMIT: &str = "CID_LIMIT";
    pub const RCID_UNKNOWN: &str = "RCID_UNKNOWN";
    pub const STREAM_OFFSET_MAX: &str = "STREAM_OFFSET_MAX";
    pub const STREAM_STATE: &str = "STREAM_STATE";
    pub const STREAM_LIMIT: &str = "STREAM_LIMIT";
    pub const FC_MAX_DATA: &str = "FC_MAX_DATA";
    pub const FC_MAX_STREAM_DATA: &str = "FC_MAX_STREAM_DATA";
    pub const FINAL_SIZE: &str = "FINAL_SIZE";
    pub const MAX_STREAMS_RANGE: &str = "MAX_STREAMS_RANGE";
    pub const STREAMS_BLOCKED_RANGE: &str = "STREAMS_BLOCKED_RANGE";
    pub const PATH_RESPONSE_UNSOLICITED: &str = "PATH_RESPONSE_UNSOLICITED";
    pub const ACK_UNSENT_PN: &str = "ACK_UNSENT_PN";
    pub const ACK_OF_ACK: &str = "ACK_OF_ACK";
    pub const DRAIN_AFTER_CLOSE: &str = "DRAIN_AFTER_CLOSE";
    pub const TP_DUP: &str = "TP_DUP";
    pub const TP_INVALID_VALUE: &str = "TP_INVALID_VALUE";
    pub const TP_MISSING_ICID: &str = "TP_MISSING_ICID";
    pub const TP_MISSING_OCID: &str = "TP_MISSING_OCID";
    pub const TP_ROLE_ILLEGAL: &str = "TP_ROLE_ILLEGAL";
    pub const TP_PREFADD_CID: &str = "TP_PREFADD_CID";
    pub const MIG_BEFORE_CONFIRMED: &str = "MIG_BEFORE_CONFIRMED";
    pub const MIG_DISABLED: &str = "MIG_DISABLED";
    pub const MIG_ADDR_TARGET: &str = "MIG_ADDR_TARGET";
    pub const MIG_NO_PATH_VALIDATION: &str = "MIG_NO_PATH_VALIDATION";
    pub const ERR_CODE_EXPECTED: &str = "ERR_CODE_EXPECTED";
    pub const ERR_WRONG_LEVEL: &str = "ERR_WRONG_LEVEL";
    pub const ERR_SILENT: &str = "ERR_SILENT";
    pub const ERR_NO_REACTION: &str = "ERR_NO_REACTION";
    pub const ERR_UNEXPECTED_CLOSE: &str = "ERR_UNEXPECTED_CLOSE";
    pub const GOAL_REACHED: &str = "GOAL_REACHED";

    pub const EMITTED: &[&str] = &[
        CODEC_FAILURE,
        PKT_PN_MONOTONIC,
        PKT_VERSION,
        PKT_RESERVED_BITS,
        CID_LEN_MAX,
        INIT_TOKEN_UNEXPECTED,
        FRAME_LEVEL_ILLEGAL,
        FRAME_TYPE_UNKNOWN,
        ROLE_ILLEGAL_FRAME,
        NEW_TOKEN_EMPTY,
        NCID_LEN,
        NCID_RTP,
        NCID_SEQ_CONFLICT,
        CID_LIMIT,
        RCID_UNKNOWN,
        STREAM_OFFSET_MAX,
        STREAM_STATE,
        STREAM_LIMIT,
        FC_MAX_DATA,
        FC_MAX_STREAM_DATA,
        FINAL_SIZE,
        MAX_STREAMS_RANGE,
        STREAMS_BLOCKED_RANGE,
        PATH_RESPONSE_UNSOLICITED,
        ACK_UNSENT_PN,
        ACK_OF_ACK,
        DRAIN_AFTER_CLOSE,
        TP_DUP,
        TP_INVALID_VALUE,
        TP_MISSING_ICID,
        TP_MISSING_OCID,
        TP_ROLE_ILLEGAL,
        TP_PREFADD_CID,
        MIG_BEFORE_CONFIRMED,
        MIG_DISABLED,
        MIG_ADDR_TARGET,
        MIG_NO_PATH_VALIDATION,
        ERR_CODE_EXPECTED,
        ERR_WRONG_LEVEL,
        ERR_SILENT,
        ERR_NO_REACTION,
        ERR_UNEXPECTED_CLOSE,
        GOAL_REACHED,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Advisory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: RequirementId,
    pub clause: String,
    pub severity: Severity,
    /// Transport error name a conformant receiver closes with.
    #[serde(default)]
    pub error_code: Option<String>,
    pub description: String,
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    requirement: Vec<Requirement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    entries: BTreeMap<RequirementId, Requirement>,
}

impl Registry {
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| EngineError::Registry(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for r in file.requirement {
            if let Some(code) = &r.error_code {
                if crate::wire::error_codes::by_name(code).is_none() {
                    return Err(EngineError::Registry(format!("{}: unknown error code {code}", r.id)));
                }
            }
            let id = r.id.clone();
            if entries.insert(id.clone(), r).is_some() {
                return Err(EngineError::Registry(format!("duplicate requirement id {id}")));
            }
        }
        Ok(Registry { entries })
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Registry(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The registry shipped with the crate.
    pub fn builtin() -> Arc<Registry> {
        static REG: OnceLock<Arc<Registry>> = OnceLock::new();
        REG.get_or_init(|| Arc::new(Registry::parse(BUILTIN).expect("builtin requirement registry parses")))
            .clone()
    }

    pub fn get(&self, id: &str) -> Option<&Requirement> {
        self.entries.get(&RequirementId::from(id))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn severity(&self, id: &str) -> Severity {
        self.get(id).map_or(Severity::Error, |r| r.severity)
    }

    /// Numeric error code a conformant receiver uses for `id`.
    pub fn error_code(&self, id: &str) -> Option<u64> {
        self.get(id)?.error_code.as_deref().and_then(crate::wire::error_codes::by_name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Requirement> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_emitted_id() {
        let reg = Registry::builtin();
        for id in ids::EMITTED {
            let r = reg.get(id).unwrap_or_else(|| panic!("{id} missing from registry"));
            assert!(!r.clause.is_empty());
        }
        assert_eq!(reg.len(), ids::EMITTED.len());
    }

    #[test]
    fn ack_of_ack_is_advisory() {
        assert_eq!(Registry::builtin().severity(ids::ACK_OF_ACK), Severity::Advisory);
        assert_eq!(Registry::builtin().severity(ids::TP_DUP), Severity::Error);
    }

    #[test]
    fn error_codes_resolve() {
        let reg = Registry::builtin();
        assert_eq!(reg.error_code(ids::TP_DUP), Some(crate::wire::error_codes::TRANSPORT_PARAMETER_ERROR));
        assert_eq!(reg.error_code(ids::MIG_ADDR_TARGET), None);
    }

    #[test]
    fn rejects_duplicates_and_bad_codes() {
        let dup = r#"
[[requirement]]
id = "A"
clause = "x"
severity = "error"
description = "d"
[[requirement]]
id = "A"
clause = "y"
severity = "error"
description = "d"
"#;
        assert!(Registry::parse(dup).is_err());
        let bad = r#"
[[requirement]]
id = "A"
clause = "x"
severity = "error"
error_code = "NOPE"
description = "d"
"#;
        assert!(Registry::parse(bad).is_err());
    }
}
