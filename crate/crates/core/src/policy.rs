//! Policy model: constraint rules, canonical policy encoding, and the
//! containment check behind `SAME_POLICY`.
//!
//! Policies are stored and compared through a canonical binary encoding:
//! rules are sorted by (type tag, parameter bytes) so that logically equal
//! policies encode to identical byte strings. `SAME_POLICY` is then plain
//! byte equality of canonical encodings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::wire::{self, Reader, WireError};

pub const RULE_SHARE_CAP: u16 = 0x0001;
pub const RULE_PROGRAM_HASH: u16 = 0x0002;
pub const RULE_CUSTODIAN: u16 = 0x0003;
pub const RULE_AUTH_USER: u16 = 0x0004;
pub const RULE_RATE_LIMIT: u16 = 0x0005;
pub const RULE_SAME_POLICY: u16 = 0x0006;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("share cap must be a rational in (0, 100]")]
    InvalidShareCap,
    #[error("rule parameter set must be non-empty")]
    EmptySet,
    #[error("rate limits must be >= 1")]
    ZeroRateLimit,
    #[error("rule {0} is not permitted in the {1} constraint section")]
    WrongSection(String, &'static str),
    #[error("malformed policy encoding")]
    Malformed,
}

/// 32-byte digest, serialized as lowercase hex in JSON.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn of(bytes: &[u8]) -> Self {
        Digest32(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16)?;
            let lo = (chunk[1] as char).to_digit(16)?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Some(Digest32(out))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_hex())
    }
}

impl Serialize for Digest32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest32::from_hex(&s).ok_or_else(|| D::Error::custom("expected 64 hex characters"))
    }
}

/// Exact rational percentage. `100/150` and `60` must compare exactly, so
/// caps are never floats. Stored reduced to lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CapPercent {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl CapPercent {
    /// A percentage `num/den`, required to lie in (0, 100].
    pub fn new(num: u64, den: u64) -> Result<Self, PolicyError> {
        if num == 0 || den == 0 || num > den.saturating_mul(100) {
            return Err(PolicyError::InvalidShareCap);
        }
        let g = gcd(num, den);
        Ok(CapPercent {
            num: num / g,
            den: den / g,
        })
    }

    pub fn whole(percent: u64) -> Result<Self, PolicyError> {
        CapPercent::new(percent, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    /// True when `part/total > cap%`, computed exactly in integers.
    pub fn exceeded_by(&self, part: u64, total: u64) -> bool {
        if total == 0 {
            return false;
        }
        (part as u128) * (self.den as u128) * 100 > (self.num as u128) * (total as u128)
    }
}

impl Serialize for CapPercent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 {
            s.serialize_u64(self.num)
        } else {
            let mut m = serde_json::Map::new();
            m.insert("num".into(), self.num.into());
            m.insert("den".into(), self.den.into());
            m.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for CapPercent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Whole(u64),
            Ratio { num: u64, den: u64 },
        }
        let r = Repr::deserialize(d)?;
        let (num, den) = match r {
            Repr::Whole(n) => (n, 1),
            Repr::Ratio { num, den } => (num, den),
        };
        CapPercent::new(num, den).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Input,
    Program,
    Output,
}

impl Section {
    fn name(&self) -> &'static str {
        match self {
            Section::Input => "input",
            Section::Program => "program",
            Section::Output => "output",
        }
    }
}

/// A single constraint rule. The variants mirror the rule vocabulary the
/// two built-in policy languages understand; unknown type tags survive a
/// binary decode as [`Rule::Unknown`] and fail every check downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    ShareCap { cap_percent: CapPercent },
    ProgramHash { allowed_hashes: BTreeSet<Digest32> },
    Custodian { required_custodian: Uuid },
    AuthUser { authorized_owners: BTreeSet<Uuid> },
    RateLimit { per_owner_limits: BTreeMap<Uuid, u32> },
    SamePolicy,
    Unknown { type_tag: u16, raw: Vec<u8> },
}

impl Rule {
    pub fn type_tag(&self) -> u16 {
        match self {
            Rule::ShareCap { .. } => RULE_SHARE_CAP,
            Rule::ProgramHash { .. } => RULE_PROGRAM_HASH,
            Rule::Custodian { .. } => RULE_CUSTODIAN,
            Rule::AuthUser { .. } => RULE_AUTH_USER,
            Rule::RateLimit { .. } => RULE_RATE_LIMIT,
            Rule::SamePolicy => RULE_SAME_POLICY,
            Rule::Unknown { type_tag, .. } => *type_tag,
        }
    }

    /// Section a rule kind belongs to; `None` means unrestricted (unknown
    /// rules are accepted anywhere and denied at evaluation time).
    pub fn section(&self) -> Option<Section> {
        match self {
            Rule::ShareCap { .. } | Rule::AuthUser { .. } | Rule::RateLimit { .. } => {
                Some(Section::Input)
            }
            Rule::ProgramHash { .. } => Some(Section::Program),
            Rule::Custodian { .. } | Rule::SamePolicy => Some(Section::Output),
            Rule::Unknown { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            Rule::ShareCap { .. } | Rule::SamePolicy | Rule::Custodian { .. } => Ok(()),
            Rule::ProgramHash { allowed_hashes } => {
                if allowed_hashes.is_empty() {
                    Err(PolicyError::EmptySet)
                } else {
                    Ok(())
                }
            }
            Rule::AuthUser { authorized_owners } => {
                if authorized_owners.is_empty() {
                    Err(PolicyError::EmptySet)
                } else {
                    Ok(())
                }
            }
            Rule::RateLimit { per_owner_limits } => {
                if per_owner_limits.is_empty() {
                    return Err(PolicyError::EmptySet);
                }
                if per_owner_limits.values().any(|&v| v == 0) {
                    return Err(PolicyError::ZeroRateLimit);
                }
                Ok(())
            }
            Rule::Unknown { .. } => Ok(()),
        }
    }

    fn encode_params(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Rule::ShareCap { cap_percent } => {
                wire::put_u64(&mut out, cap_percent.num);
                wire::put_u64(&mut out, cap_percent.den);
            }
            Rule::ProgramHash { allowed_hashes } => {
                wire::put_u32(&mut out, allowed_hashes.len() as u32);
                for h in allowed_hashes {
                    out.extend_from_slice(&h.0);
                }
            }
            Rule::Custodian { required_custodian } => {
                wire::put_uuid(&mut out, required_custodian);
            }
            Rule::AuthUser { authorized_owners } => {
                wire::put_u32(&mut out, authorized_owners.len() as u32);
                for o in authorized_owners {
                    wire::put_uuid(&mut out, o);
                }
            }
            Rule::RateLimit { per_owner_limits } => {
                wire::put_u32(&mut out, per_owner_limits.len() as u32);
                for (owner, limit) in per_owner_limits {
                    wire::put_uuid(&mut out, owner);
                    wire::put_u32(&mut out, *limit);
                }
            }
            Rule::SamePolicy => {}
            Rule::Unknown { raw, .. } => out.extend_from_slice(raw),
        }
        out
    }

    fn decode(r: &mut Reader<'_>) -> Result<Rule, PolicyError> {
        let tag = r.u16().map_err(|_| PolicyError::Malformed)?;
        let len = r.u32().map_err(|_| PolicyError::Malformed)? as usize;
        let params = r.take(len).map_err(|_| PolicyError::Malformed)?;
        let mut p = Reader::new(params);
        let rule = match tag {
            RULE_SHARE_CAP => {
                let num = p.u64().map_err(|_| PolicyError::Malformed)?;
                let den = p.u64().map_err(|_| PolicyError::Malformed)?;
                Rule::ShareCap {
                    cap_percent: CapPercent::new(num, den)?,
                }
            }
            RULE_PROGRAM_HASH => {
                let n = p.u32().map_err(|_| PolicyError::Malformed)?;
                let mut set = BTreeSet::new();
                for _ in 0..n {
                    set.insert(Digest32(p.array().map_err(|_| PolicyError::Malformed)?));
                }
                Rule::ProgramHash { allowed_hashes: set }
            }
            RULE_CUSTODIAN => Rule::Custodian {
                required_custodian: p.uuid().map_err(|_| PolicyError::Malformed)?,
            },
            RULE_AUTH_USER => {
                let n = p.u32().map_err(|_| PolicyError::Malformed)?;
                let mut set = BTreeSet::new();
                for _ in 0..n {
                    set.insert(p.uuid().map_err(|_| PolicyError::Malformed)?);
                }
                Rule::AuthUser {
                    authorized_owners: set,
                }
            }
            RULE_RATE_LIMIT => {
                let n = p.u32().map_err(|_| PolicyError::Malformed)?;
                let mut map = BTreeMap::new();
                for _ in 0..n {
                    let owner = p.uuid().map_err(|_| PolicyError::Malformed)?;
                    let limit = p.u32().map_err(|_| PolicyError::Malformed)?;
                    map.insert(owner, limit);
                }
                Rule::RateLimit {
                    per_owner_limits: map,
                }
            }
            RULE_SAME_POLICY => Rule::SamePolicy,
            other => Rule::Unknown {
                type_tag: other,
                raw: params.to_vec(),
            },
        };
        if !matches!(rule, Rule::Unknown { .. }) {
            p.finish().map_err(|_| PolicyError::Malformed)?;
            rule.validate()?;
        }
        Ok(rule)
    }

}

/// One policy: a language id plus the three constraint sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub policy_lang_id: Uuid,
    pub input_constraints: Vec<Rule>,
    pub program_constraints: Vec<Rule>,
    pub output_constraints: Vec<Rule>,
}

impl Policy {
    pub fn new(
        policy_lang_id: Uuid,
        input_constraints: Vec<Rule>,
        program_constraints: Vec<Rule>,
        output_constraints: Vec<Rule>,
    ) -> Result<Self, PolicyError> {
        let p = Policy {
            policy_lang_id,
            input_constraints,
            program_constraints,
            output_constraints,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let sections = [
            (Section::Input, &self.input_constraints),
            (Section::Program, &self.program_constraints),
            (Section::Output, &self.output_constraints),
        ];
        for (section, rules) in sections {
            for rule in rules {
                rule.validate()?;
                if let Some(allowed) = rule.section() {
                    if allowed != section {
                        return Err(PolicyError::WrongSection(
                            format!("0x{:04x}", rule.type_tag()),
                            section.name(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn has_unknown_rules(&self) -> bool {
        self.input_constraints
            .iter()
            .chain(&self.program_constraints)
            .chain(&self.output_constraints)
            .any(|r| matches!(r, Rule::Unknown { .. }))
    }

    /// Deterministic byte encoding. Rules are sorted by (type tag,
    /// parameter bytes) per section, so rule order never affects equality.
    pub fn canonical_encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_uuid(&mut out, &self.policy_lang_id);
        for rules in [
            &self.input_constraints,
            &self.program_constraints,
            &self.output_constraints,
        ] {
            let mut encoded: Vec<(u16, Vec<u8>)> =
                rules.iter().map(|r| (r.type_tag(), r.encode_params())).collect();
            encoded.sort();
            wire::put_u32(&mut out, encoded.len() as u32);
            for (tag, params) in encoded {
                wire::put_u16(&mut out, tag);
                wire::put_u32(&mut out, params.len() as u32);
                out.extend_from_slice(&params);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Policy, PolicyError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode_from(&mut r)?;
        r.finish().map_err(|_| PolicyError::Malformed)?;
        Ok(p)
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Policy, PolicyError> {
        let policy_lang_id = r.uuid().map_err(|_| PolicyError::Malformed)?;
        let mut sections = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = r.u32().map_err(|_| PolicyError::Malformed)?;
            let mut rules = Vec::with_capacity(n.min(1024) as usize);
            for _ in 0..n {
                rules.push(Rule::decode(r)?);
            }
            sections.push(rules);
        }
        let output_constraints = sections.pop().unwrap();
        let program_constraints = sections.pop().unwrap();
        let input_constraints = sections.pop().unwrap();
        let p = Policy {
            policy_lang_id,
            input_constraints,
            program_constraints,
            output_constraints,
        };
        p.validate()?;
        Ok(p)
    }
}

/// True iff some policy in `outer` canonical-encodes equal to `inner`.
/// Policy inheritance requires carrying the original policy verbatim; an
/// augmented copy does not count as containment.
pub fn policy_set_contains(outer: &[Policy], inner: &Policy) -> bool {
    let target = inner.canonical_encode();
    outer.iter().any(|p| p.canonical_encode() == target)
}

// JSON authoring schema: rule_type as a string tag, parameters as fields.
// Unknown rules have no JSON form; authoring them is a schema error.

#[derive(Serialize, Deserialize)]
#[serde(tag = "rule_type")]
enum RuleDoc {
    #[serde(rename = "SHARE_CAP")]
    ShareCap { cap_percent: CapPercent },
    #[serde(rename = "PROGRAM_HASH")]
    ProgramHash { allowed_hashes: BTreeSet<Digest32> },
    #[serde(rename = "CUSTODIAN")]
    Custodian { required_custodian: Uuid },
    #[serde(rename = "AUTH_USER")]
    AuthUser { authorized_owners: BTreeSet<Uuid> },
    #[serde(rename = "RATE_LIMIT")]
    RateLimit { per_owner_limits: BTreeMap<Uuid, u32> },
    #[serde(rename = "SAME_POLICY")]
    SamePolicy,
}

impl Serialize for Rule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error;
        let doc = match self.clone() {
            Rule::ShareCap { cap_percent } => RuleDoc::ShareCap { cap_percent },
            Rule::ProgramHash { allowed_hashes } => RuleDoc::ProgramHash { allowed_hashes },
            Rule::Custodian { required_custodian } => RuleDoc::Custodian { required_custodian },
            Rule::AuthUser { authorized_owners } => RuleDoc::AuthUser { authorized_owners },
            Rule::RateLimit { per_owner_limits } => RuleDoc::RateLimit { per_owner_limits },
            Rule::SamePolicy => RuleDoc::SamePolicy,
            Rule::Unknown { type_tag, .. } => {
                return Err(S::Error::custom(format!(
                    "rule type 0x{type_tag:04x} has no JSON representation"
                )))
            }
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = RuleDoc::deserialize(d)?;
        let rule = match doc {
            RuleDoc::ShareCap { cap_percent } => Rule::ShareCap { cap_percent },
            RuleDoc::ProgramHash { allowed_hashes } => Rule::ProgramHash { allowed_hashes },
            RuleDoc::Custodian { required_custodian } => Rule::Custodian { required_custodian },
            RuleDoc::AuthUser { authorized_owners } => Rule::AuthUser { authorized_owners },
            RuleDoc::RateLimit { per_owner_limits } => Rule::RateLimit { per_owner_limits },
            RuleDoc::SamePolicy => Rule::SamePolicy,
        };
        rule.validate().map_err(D::Error::custom)?;
        Ok(rule)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyDoc {
    policy_lang_id: Uuid,
    #[serde(default)]
    input_constraints: Vec<Rule>,
    #[serde(default)]
    program_constraints: Vec<Rule>,
    #[serde(default)]
    output_constraints: Vec<Rule>,
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolicyDoc {
            policy_lang_id: self.policy_lang_id,
            input_constraints: self.input_constraints.clone(),
            program_constraints: self.program_constraints.clone(),
            output_constraints: self.output_constraints.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = PolicyDoc::deserialize(d)?;
        Policy::new(
            doc.policy_lang_id,
            doc.input_constraints,
            doc.program_constraints,
            doc.output_constraints,
        )
        .map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProgramKind {
    Training,
    Query,
    FineTune,
    Other,
}

/// Identity of a consumer program: the digest of its exact artifact
/// bytes, its owner, and what kind of computation it performs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramManifest {
    pub program_hash: Digest32,
    pub owner_id: Uuid,
    pub program_kind: ProgramKind,
}

impl ProgramManifest {
    pub fn for_artifact(artifact: &[u8], owner_id: Uuid, program_kind: ProgramKind) -> Self {
        ProgramManifest {
            program_hash: Digest32::of(artifact),
            owner_id,
            program_kind,
        }
    }
}

impl From<WireError> for PolicyError {
    fn from(_: WireError) -> Self {
        PolicyError::Malformed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang() -> Uuid {
        Uuid::from_u128(0x1111_2222)
    }

    fn sample_policy() -> Policy {
        Policy::new(
            lang(),
            vec![Rule::ShareCap {
                cap_percent: CapPercent::whole(60).unwrap(),
            }],
            vec![Rule::ProgramHash {
                allowed_hashes: [Digest32::of(b"trainer")].into(),
            }],
            vec![Rule::Custodian {
                required_custodian: Uuid::from_u128(0xD),
            }],
        )
        .unwrap()
    }

    #[test]
    fn canonical_round_trip_is_stable() {
        let p = sample_policy();
        let enc = p.canonical_encode();
        let decoded = Policy::decode(&enc).unwrap();
        assert_eq!(decoded.canonical_encode(), enc);
        assert_eq!(decoded, p);
    }

    #[test]
    fn rule_order_does_not_affect_encoding() {
        let a = Rule::AuthUser {
            authorized_owners: [Uuid::from_u128(1)].into(),
        };
        let b = Rule::ShareCap {
            cap_percent: CapPercent::whole(10).unwrap(),
        };
        let p1 = Policy::new(lang(), vec![a.clone(), b.clone()], vec![], vec![]).unwrap();
        let p2 = Policy::new(lang(), vec![b, a], vec![], vec![]).unwrap();
        assert_eq!(p1.canonical_encode(), p2.canonical_encode());
    }

    #[test]
    fn parameter_change_breaks_equality() {
        let p1 = sample_policy();
        let mut p2 = p1.clone();
        p2.input_constraints[0] = Rule::ShareCap {
            cap_percent: CapPercent::whole(59).unwrap(),
        };
        assert_ne!(p1.canonical_encode(), p2.canonical_encode());
    }

    #[test]
    fn cap_percent_reduces_and_compares_exactly() {
        let a = CapPercent::new(100, 150).unwrap();
        let b = CapPercent::new(2, 3).unwrap();
        assert_eq!(a, b);
        // 100/150 of data vs a 60% cap: 66.7% > 60%.
        let cap = CapPercent::whole(60).unwrap();
        assert!(cap.exceeded_by(100, 150));
        assert!(!cap.exceeded_by(100, 200));
        // Exactly at the cap is allowed.
        assert!(!cap.exceeded_by(60, 100));
    }

    #[test]
    fn cap_percent_bounds() {
        assert!(CapPercent::whole(0).is_err());
        assert!(CapPercent::whole(101).is_err());
        assert!(CapPercent::new(300, 3).is_ok());
        assert!(CapPercent::new(301, 3).is_err());
    }

    #[test]
    fn section_placement_enforced() {
        let err = Policy::new(
            lang(),
            vec![Rule::Custodian {
                required_custodian: Uuid::from_u128(1),
            }],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, PolicyError::WrongSection(_, _)));
    }

    #[test]
    fn containment_is_verbatim() {
        let p = sample_policy();
        assert!(policy_set_contains(&[p.clone()], &p));
        assert!(!policy_set_contains(&[], &p));

        let mut augmented = p.clone();
        augmented.input_constraints.push(Rule::AuthUser {
            authorized_owners: [Uuid::from_u128(0xA)].into(),
        });
        // An augmented copy is a different policy; the original must be
        // carried verbatim for containment to hold.
        assert!(!policy_set_contains(&[augmented.clone()], &p));
        assert!(policy_set_contains(&[augmented, p.clone()], &p));
    }

    #[test]
    fn unknown_rule_survives_decode_and_poisons_policy() {
        let mut enc = Vec::new();
        wire::put_uuid(&mut enc, &lang());
        // input: one unknown rule, tag 0x7777 with 3 raw bytes
        wire::put_u32(&mut enc, 1);
        wire::put_u16(&mut enc, 0x7777);
        wire::put_u32(&mut enc, 3);
        enc.extend_from_slice(&[1, 2, 3]);
        wire::put_u32(&mut enc, 0);
        wire::put_u32(&mut enc, 0);
        let p = Policy::decode(&enc).unwrap();
        assert!(p.has_unknown_rules());
        assert_eq!(p.canonical_encode(), enc);
    }

    #[test]
    fn json_round_trip() {
        let p = sample_policy();
        let json = serde_json::to_string(&p).unwrap();
        let back: Policy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_unknown_rule_type_rejected() {
        let json = format!(
            r#"{{"policy_lang_id":"{}","input_constraints":[{{"rule_type":"FROBNICATE"}}]}}"#,
            lang()
        );
        assert!(serde_json::from_str::<Policy>(&json).is_err());
    }
}
