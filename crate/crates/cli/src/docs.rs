//! JSON document schemas for the CLI: payload descriptions, policy
//! files, delegator service configs and simulation configs.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use pad_core::codec::{AttributeValue, DataAttribute};
use pad_core::crypto::SUITE_CHACHA20_POLY1305;
use pad_core::policy::Policy;

/// Payload description for `pack`: the raw data (UTF-8 or hex), the
/// custodian it belongs to, where its key will live, and its attributes.
#[derive(Debug, Serialize, Deserialize)]
pub struct PayloadDoc {
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub data_hex: Option<String>,
    pub custodian_id: Uuid,
    pub delegator_uri: String,
    #[serde(default)]
    pub crypto_suite: Option<u16>,
    #[serde(default)]
    pub attributes: Vec<AttributeDoc>,
}

impl PayloadDoc {
    pub fn raw_data(&self) -> Result<Vec<u8>, String> {
        match (&self.data, &self.data_hex) {
            (Some(s), None) => Ok(s.clone().into_bytes()),
            (None, Some(h)) => hex::decode(h).map_err(|e| format!("data_hex: {e}")),
            (Some(_), Some(_)) => Err("give either data or data_hex, not both".into()),
            (None, None) => Err("payload needs data or data_hex".into()),
        }
    }

    pub fn suite(&self) -> u16 {
        self.crypto_suite.unwrap_or(SUITE_CHACHA20_POLY1305)
    }

    pub fn data_attributes(&self) -> Result<Vec<DataAttribute>, String> {
        self.attributes.iter().map(AttributeDoc::to_attribute).collect()
    }
}

/// One attribute, typed by tag.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttributeDoc {
    U64 { name: String, value: u64 },
    Bytes { name: String, value_hex: String },
    String { name: String, value: String },
    Uuid { name: String, value: Uuid },
}

impl AttributeDoc {
    pub fn to_attribute(&self) -> Result<DataAttribute, String> {
        let (name, value) = match self {
            AttributeDoc::U64 { name, value } => (name, AttributeValue::U64(*value)),
            AttributeDoc::Bytes { name, value_hex } => (
                name,
                AttributeValue::Bytes(
                    hex::decode(value_hex).map_err(|e| format!("attribute {name}: {e}"))?,
                ),
            ),
            AttributeDoc::String { name, value } => (name, AttributeValue::Str(value.clone())),
            AttributeDoc::Uuid { name, value } => (name, AttributeValue::Uuid(*value)),
        };
        Ok(DataAttribute {
            attribute_name: name.clone(),
            attribute_value: value,
        })
    }
}

/// A policy file is either one policy object or an array of them.
pub fn parse_policies(json: &str) -> Result<Vec<Policy>, String> {
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let policies: Vec<Policy> = if value.is_array() {
        serde_json::from_value(value).map_err(|e| e.to_string())?
    } else {
        vec![serde_json::from_value(value).map_err(|e| e.to_string())?]
    };
    if policies.is_empty() {
        return Err("policy file contains no policies".into());
    }
    Ok(policies)
}

/// Delegator service configuration. Key material is hex-encoded; this is
/// mock-attestation tooling, the "root" here is a test fixture, not a
/// hardware vendor key.
#[derive(Debug, Serialize, Deserialize)]
pub struct DelegatorConfigDoc {
    pub bind_addr: String,
    /// ed25519 signing key seed of the mock attestation root (32 bytes hex).
    pub attestation_root_seed_hex: String,
    /// This delegator's own measurement (32 bytes hex).
    pub measurement_hex: String,
    #[serde(default)]
    pub allowed_consumer_measurements_hex: Vec<String>,
    #[serde(default)]
    pub allowed_producer_measurements_hex: Vec<String>,
    #[serde(default)]
    pub custodians: Vec<CustodianEntryDoc>,
    #[serde(default = "default_idle_timeout_secs")]
    pub idle_timeout_secs: u64,
}

fn default_idle_timeout_secs() -> u64 {
    300
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CustodianEntryDoc {
    pub custodian_id: Uuid,
    /// ed25519 verifying key (32 bytes hex) that push signatures must match.
    pub verifying_key_hex: String,
}

pub fn hex32(label: &str, s: &str) -> Result<[u8; 32], String> {
    let bytes = hex::decode(s).map_err(|e| format!("{label}: {e}"))?;
    bytes
        .try_into()
        .map_err(|_| format!("{label}: expected 32 bytes"))
}

/// Simulation command input: explicit cells, or the default sweep grid.
#[derive(Debug, Serialize, Deserialize)]
pub struct SimCommandDoc {
    #[serde(default)]
    pub cells: Vec<pad_sim::SimConfig>,
    #[serde(default)]
    pub default_grid: Option<DefaultGridDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DefaultGridDoc {
    pub seed: u64,
    #[serde(default)]
    pub latency: pad_sim::LatencyModel,
}

impl SimCommandDoc {
    pub fn configs(&self) -> Result<Vec<pad_sim::SimConfig>, String> {
        let mut configs = self.cells.clone();
        if let Some(grid) = &self.default_grid {
            configs.extend(pad_sim::default_grid(grid.seed, grid.latency));
        }
        if configs.is_empty() {
            return Err("simulation config has no cells and no default_grid".into());
        }
        Ok(configs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_doc_parses_and_converts() {
        let doc: PayloadDoc = serde_json::from_str(
            r#"{
                "data": "hello",
                "custodian_id": "00000000-0000-0000-0000-00000000000a",
                "delegator_uri": "127.0.0.1:7100",
                "attributes": [{"type": "u64", "name": "data_count", "value": 10}]
            }"#,
        )
        .unwrap();
        assert_eq!(doc.raw_data().unwrap(), b"hello");
        assert_eq!(doc.suite(), SUITE_CHACHA20_POLY1305);
        assert_eq!(doc.data_attributes().unwrap().len(), 1);
    }

    #[test]
    fn policy_file_accepts_object_or_array() {
        let one = r#"{
            "policy_lang_id": "7d9c1b2a-34e5-48f1-9a07-c1d2e3f40516",
            "input_constraints": [{"rule_type": "SHARE_CAP", "cap_percent": 60}]
        }"#;
        assert_eq!(parse_policies(one).unwrap().len(), 1);
        let many = format!("[{one}, {one}]");
        assert_eq!(parse_policies(&many).unwrap().len(), 2);
    }

    #[test]
    fn unknown_rule_type_rejected() {
        let bad = r#"{
            "policy_lang_id": "7d9c1b2a-34e5-48f1-9a07-c1d2e3f40516",
            "input_constraints": [{"rule_type": "TELEPORT", "dest": 3}]
        }"#;
        assert!(parse_policies(bad).is_err());
    }
}
