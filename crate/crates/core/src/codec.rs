//! Bit-exact PAD container format.
//!
//! Layout (all integers little-endian, fixed width):
//!
//! ```text
//! magic            4 bytes   "PAD1"
//! format_version   u16
//! data_id          16 bytes  UUID
//! custodian_id     16 bytes  UUID
//! crypto_suite     u16
//! key_delegator_uri u16 length + UTF-8 bytes (host:port)
//! payload_length   u64       ciphertext + tag byte count
//! nonce            suite nonce length
//! encrypted payload  payload_length bytes
//! ```
//!
//! The metadata bytes are bound into the AEAD as associated data, so any
//! metadata swap fails authentication even though metadata is plaintext.

use rand::RngCore;
use thiserror::Error;
use uuid::Uuid;

use crate::crypto::{CryptoError, CryptoSuite};
use crate::policy::{Policy, PolicyError};
use crate::wire::{self, Reader};

pub const PAD_MAGIC: [u8; 4] = *b"PAD1";
pub const PAD_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic: not a PAD container")]
    BadMagic,
    #[error("unsupported PAD format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated input")]
    TruncatedInput,
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("key delegator URI is not host:port")]
    MalformedUri,
    #[error("payload must carry at least one policy")]
    EmptyPolicies,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("payload authenticated but failed to decode: {0}")]
    MalformedPayload(String),
    #[error("invalid attribute: {0}")]
    MalformedAttribute(String),
}

/// Plaintext PAD header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadMetadata {
    pub format_version: u16,
    pub data_id: Uuid,
    pub custodian_id: Uuid,
    pub crypto_suite: u16,
    pub key_delegator_uri: String,
    pub payload_length: u64,
}

fn validate_uri(uri: &str) -> Result<(), CodecError> {
    let (host, port) = uri.rsplit_once(':').ok_or(CodecError::MalformedUri)?;
    if host.is_empty() || port.parse::<u16>().is_err() {
        return Err(CodecError::MalformedUri);
    }
    Ok(())
}

impl PadMetadata {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&PAD_MAGIC);
        wire::put_u16(&mut out, self.format_version);
        wire::put_uuid(&mut out, &self.data_id);
        wire::put_uuid(&mut out, &self.custodian_id);
        wire::put_u16(&mut out, self.crypto_suite);
        wire::put_u16(&mut out, self.key_delegator_uri.len() as u16);
        out.extend_from_slice(self.key_delegator_uri.as_bytes());
        wire::put_u64(&mut out, self.payload_length);
        out
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let magic: [u8; 4] = r.array().map_err(|_| CodecError::TruncatedInput)?;
        if magic != PAD_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let format_version = r.u16().map_err(|_| CodecError::TruncatedInput)?;
        if format_version != PAD_FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(format_version));
        }
        let data_id = r.uuid().map_err(|_| CodecError::TruncatedInput)?;
        let custodian_id = r.uuid().map_err(|_| CodecError::TruncatedInput)?;
        let crypto_suite = r.u16().map_err(|_| CodecError::TruncatedInput)?;
        let uri_len = r.u16().map_err(|_| CodecError::TruncatedInput)? as usize;
        let uri_bytes = r.take(uri_len).map_err(|_| CodecError::TruncatedInput)?;
        let key_delegator_uri =
            String::from_utf8(uri_bytes.to_vec()).map_err(|_| CodecError::MalformedUri)?;
        validate_uri(&key_delegator_uri)?;
        let payload_length = r.u64().map_err(|_| CodecError::TruncatedInput)?;
        Ok(PadMetadata {
            format_version,
            data_id,
            custodian_id,
            crypto_suite,
            key_delegator_uri,
            payload_length,
        })
    }
}

/// Typed attribute value; the wire type tag is derived from the variant so
/// the encoding can never disagree with the declared type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeValue {
    U64(u64),
    Bytes(Vec<u8>),
    Str(String),
    Uuid(Uuid),
}

pub const ATTR_TYPE_U64: u16 = 1;
pub const ATTR_TYPE_BYTES: u16 = 2;
pub const ATTR_TYPE_STRING: u16 = 3;
pub const ATTR_TYPE_UUID: u16 = 4;

impl AttributeValue {
    pub fn type_ref(&self) -> u16 {
        match self {
            AttributeValue::U64(_) => ATTR_TYPE_U64,
            AttributeValue::Bytes(_) => ATTR_TYPE_BYTES,
            AttributeValue::Str(_) => ATTR_TYPE_STRING,
            AttributeValue::Uuid(_) => ATTR_TYPE_UUID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataAttribute {
    pub attribute_name: String,
    pub attribute_value: AttributeValue,
}

impl DataAttribute {
    pub fn u64(name: &str, value: u64) -> Self {
        DataAttribute {
            attribute_name: name.to_string(),
            attribute_value: AttributeValue::U64(value),
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        wire::put_u16(out, self.attribute_name.len() as u16);
        out.extend_from_slice(self.attribute_name.as_bytes());
        wire::put_u16(out, self.attribute_value.type_ref());
        match &self.attribute_value {
            AttributeValue::U64(v) => wire::put_u64(out, *v),
            AttributeValue::Bytes(b) => {
                wire::put_u32(out, b.len() as u32);
                out.extend_from_slice(b);
            }
            AttributeValue::Str(s) => {
                wire::put_u32(out, s.len() as u32);
                out.extend_from_slice(s.as_bytes());
            }
            AttributeValue::Uuid(u) => wire::put_uuid(out, u),
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let bad = |m: &str| CodecError::MalformedAttribute(m.to_string());
        let name_len = r.u16().map_err(|_| bad("name length"))? as usize;
        let name = r.take(name_len).map_err(|_| bad("name"))?;
        let attribute_name =
            String::from_utf8(name.to_vec()).map_err(|_| bad("name not UTF-8"))?;
        let type_ref = r.u16().map_err(|_| bad("type tag"))?;
        let attribute_value = match type_ref {
            ATTR_TYPE_U64 => AttributeValue::U64(r.u64().map_err(|_| bad("u64 value"))?),
            ATTR_TYPE_BYTES => {
                let len = r.u32().map_err(|_| bad("bytes length"))? as usize;
                AttributeValue::Bytes(r.take(len).map_err(|_| bad("bytes value"))?.to_vec())
            }
            ATTR_TYPE_STRING => {
                let len = r.u32().map_err(|_| bad("string length"))? as usize;
                let s = r.take(len).map_err(|_| bad("string value"))?;
                AttributeValue::Str(
                    String::from_utf8(s.to_vec()).map_err(|_| bad("string not UTF-8"))?,
                )
            }
            ATTR_TYPE_UUID => AttributeValue::Uuid(r.uuid().map_err(|_| bad("uuid value"))?),
            other => return Err(bad(&format!("unknown type tag {other}"))),
        };
        Ok(DataAttribute {
            attribute_name,
            attribute_value,
        })
    }
}

/// Decrypted payload: raw data, one or more policies, zero or more
/// attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaintextPayload {
    pub raw_data: Vec<u8>,
    pub policies: Vec<Policy>,
    pub attributes: Vec<DataAttribute>,
}

impl PlaintextPayload {
    /// Canonical encoding: length-prefixed fields in fixed order; policies
    /// are stored via their canonical encoding.
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        if self.policies.is_empty() {
            return Err(CodecError::EmptyPolicies);
        }
        let mut out = Vec::new();
        wire::put_u64(&mut out, self.raw_data.len() as u64);
        out.extend_from_slice(&self.raw_data);
        wire::put_u32(&mut out, self.policies.len() as u32);
        for policy in &self.policies {
            let enc = policy.canonical_encode();
            wire::put_u32(&mut out, enc.len() as u32);
            out.extend_from_slice(&enc);
        }
        wire::put_u32(&mut out, self.attributes.len() as u32);
        for attr in &self.attributes {
            attr.encode(&mut out);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let bad = |m: &str| CodecError::MalformedPayload(m.to_string());
        let mut r = Reader::new(bytes);
        let raw_len = r.u64().map_err(|_| bad("raw data length"))? as usize;
        let raw_data = r.take(raw_len).map_err(|_| bad("raw data"))?.to_vec();
        let n_policies = r.u32().map_err(|_| bad("policy count"))?;
        if n_policies == 0 {
            return Err(CodecError::EmptyPolicies);
        }
        let mut policies = Vec::with_capacity(n_policies.min(1024) as usize);
        for _ in 0..n_policies {
            let len = r.u32().map_err(|_| bad("policy length"))? as usize;
            let slice = r.take(len).map_err(|_| bad("policy bytes"))?;
            policies.push(
                Policy::decode(slice).map_err(|e: PolicyError| bad(&format!("policy: {e}")))?,
            );
        }
        let n_attrs = r.u32().map_err(|_| bad("attribute count"))?;
        let mut attributes = Vec::with_capacity(n_attrs.min(1024) as usize);
        for _ in 0..n_attrs {
            attributes.push(DataAttribute::decode(&mut r)?);
        }
        r.finish().map_err(|_| bad("trailing payload bytes"))?;
        Ok(PlaintextPayload {
            raw_data,
            policies,
            attributes,
        })
    }

    /// Look up a `uint64` attribute by name.
    pub fn u64_attribute(&self, name: &str) -> Option<u64> {
        self.attributes.iter().find_map(|a| {
            if a.attribute_name == name {
                if let AttributeValue::U64(v) = a.attribute_value {
                    return Some(v);
                }
            }
            None
        })
    }
}

/// A parsed-and-decrypted PAD, the unit the policy engines evaluate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptedPad {
    pub metadata: PadMetadata,
    pub payload: PlaintextPayload,
}

/// Metadata fields supplied by the caller of [`pack_pad`]; `payload_length`
/// is computed from the ciphertext.
#[derive(Debug, Clone)]
pub struct PadMetadataFields {
    pub data_id: Uuid,
    pub custodian_id: Uuid,
    pub crypto_suite: u16,
    pub key_delegator_uri: String,
}

/// Seal a payload into PAD bytes: metadata ‖ nonce ‖ AEAD ciphertext with
/// the metadata bytes as associated data. A fresh random nonce per call.
pub fn pack_pad(
    payload: &PlaintextPayload,
    fields: &PadMetadataFields,
    data_key: &[u8],
) -> Result<Vec<u8>, CodecError> {
    let suite = CryptoSuite::by_id(fields.crypto_suite)?;
    suite.check_key(data_key)?;
    validate_uri(&fields.key_delegator_uri)?;
    let plaintext = payload.encode()?;
    let metadata = PadMetadata {
        format_version: PAD_FORMAT_VERSION,
        data_id: fields.data_id,
        custodian_id: fields.custodian_id,
        crypto_suite: fields.crypto_suite,
        key_delegator_uri: fields.key_delegator_uri.clone(),
        payload_length: (plaintext.len() + suite.tag_length) as u64,
    };
    let metadata_bytes = metadata.encode();
    let mut nonce = vec![0u8; suite.nonce_length];
    rand::rngs::OsRng.fill_bytes(&mut nonce);
    let ciphertext = suite.seal(data_key, &nonce, &metadata_bytes, &plaintext)?;
    debug_assert_eq!(ciphertext.len() as u64, metadata.payload_length);
    let mut out = metadata_bytes;
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ciphertext);
    Ok(out)
}

/// Parse the plaintext header. Never touches the ciphertext and never
/// needs a key; also verifies the stated payload length matches the
/// container size so truncation and padding are caught up front.
pub fn parse_metadata(pad_bytes: &[u8]) -> Result<PadMetadata, CodecError> {
    let (metadata, _) = parse_metadata_offset(pad_bytes)?;
    Ok(metadata)
}

fn parse_metadata_offset(pad_bytes: &[u8]) -> Result<(PadMetadata, usize), CodecError> {
    let mut r = Reader::new(pad_bytes);
    let metadata = PadMetadata::decode_from(&mut r)?;
    let header_len = r.position();
    let suite = CryptoSuite::by_id(metadata.crypto_suite)?;
    let expected = header_len as u64 + suite.nonce_length as u64 + metadata.payload_length;
    match (pad_bytes.len() as u64).cmp(&expected) {
        std::cmp::Ordering::Less => Err(CodecError::TruncatedInput),
        std::cmp::Ordering::Greater => Err(CodecError::TrailingBytes),
        std::cmp::Ordering::Equal => Ok((metadata, header_len)),
    }
}

/// Verify and decrypt a PAD. Fails with `IntegrityFailure` on any bit
/// flip in metadata or ciphertext, or on a wrong key.
pub fn decrypt_payload(pad_bytes: &[u8], data_key: &[u8]) -> Result<PlaintextPayload, CodecError> {
    let (metadata, header_len) = parse_metadata_offset(pad_bytes)?;
    let suite = CryptoSuite::by_id(metadata.crypto_suite)?;
    let metadata_bytes = &pad_bytes[..header_len];
    let nonce = &pad_bytes[header_len..header_len + suite.nonce_length];
    let ciphertext = &pad_bytes[header_len + suite.nonce_length..];
    let plaintext = suite.open(data_key, nonce, metadata_bytes, ciphertext)?;
    PlaintextPayload::decode(&plaintext)
}

/// Parse and decrypt in one step.
pub fn open_pad(pad_bytes: &[u8], data_key: &[u8]) -> Result<DecryptedPad, CodecError> {
    let metadata = parse_metadata(pad_bytes)?;
    let payload = decrypt_payload(pad_bytes, data_key)?;
    Ok(DecryptedPad { metadata, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SUITE_CHACHA20_POLY1305;
    use crate::policy::{CapPercent, Rule};

    fn sample_payload() -> PlaintextPayload {
        let policy = Policy::new(
            Uuid::from_u128(0xfeed),
            vec![Rule::ShareCap {
                cap_percent: CapPercent::whole(60).unwrap(),
            }],
            vec![],
            vec![],
        )
        .unwrap();
        PlaintextPayload {
            raw_data: b"patient records".to_vec(),
            policies: vec![policy],
            attributes: vec![DataAttribute::u64("data_count", 100)],
        }
    }

    fn sample_fields() -> PadMetadataFields {
        PadMetadataFields {
            data_id: Uuid::from_u128(0xAAAA),
            custodian_id: Uuid::from_u128(0xBBBB),
            crypto_suite: SUITE_CHACHA20_POLY1305,
            key_delegator_uri: "127.0.0.1:7100".to_string(),
        }
    }

    #[test]
    fn pack_parse_round_trip() {
        let key = [9u8; 32];
        let pad = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        let meta = parse_metadata(&pad).unwrap();
        assert_eq!(meta.data_id, sample_fields().data_id);
        assert_eq!(meta.custodian_id, sample_fields().custodian_id);
        assert_eq!(meta.crypto_suite, SUITE_CHACHA20_POLY1305);
        assert_eq!(meta.key_delegator_uri, "127.0.0.1:7100");
        let payload = decrypt_payload(&pad, &key).unwrap();
        assert_eq!(payload, sample_payload());
    }

    #[test]
    fn fresh_nonce_per_pack() {
        let key = [9u8; 32];
        let a = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        let b = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        assert_ne!(a, b);
        assert_eq!(
            decrypt_payload(&a, &key).unwrap(),
            decrypt_payload(&b, &key).unwrap()
        );
    }

    #[test]
    fn zero_policies_rejected_before_encryption() {
        let mut payload = sample_payload();
        payload.policies.clear();
        let err = pack_pad(&payload, &sample_fields(), &[9u8; 32]).unwrap_err();
        assert_eq!(err, CodecError::EmptyPolicies);
    }

    #[test]
    fn bad_magic() {
        let key = [9u8; 32];
        let mut pad = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        pad[..4].copy_from_slice(b"XXXX");
        assert_eq!(parse_metadata(&pad).unwrap_err(), CodecError::BadMagic);
    }

    #[test]
    fn truncated_input() {
        let key = [9u8; 32];
        let pad = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        assert_eq!(
            parse_metadata(&pad[..60]).unwrap_err(),
            CodecError::TruncatedInput
        );
        assert_eq!(
            parse_metadata(&pad[..pad.len() - 1]).unwrap_err(),
            CodecError::TruncatedInput
        );
    }

    #[test]
    fn ciphertext_bit_flip_fails_integrity() {
        let key = [9u8; 32];
        let mut pad = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        let last = pad.len() - 1;
        pad[last] ^= 0x01;
        assert_eq!(
            decrypt_payload(&pad, &key).unwrap_err(),
            CodecError::Crypto(CryptoError::IntegrityFailure)
        );
    }

    #[test]
    fn metadata_is_authenticated() {
        let key = [9u8; 32];
        let mut pad = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        // custodian_id starts after magic(4) + version(2) + data_id(16)
        pad[22] ^= 0xFF;
        assert_eq!(
            decrypt_payload(&pad, &key).unwrap_err(),
            CodecError::Crypto(CryptoError::IntegrityFailure)
        );
    }

    #[test]
    fn wrong_key_fails_integrity() {
        let pad = pack_pad(&sample_payload(), &sample_fields(), &[9u8; 32]).unwrap();
        assert_eq!(
            decrypt_payload(&pad, &[8u8; 32]).unwrap_err(),
            CodecError::Crypto(CryptoError::IntegrityFailure)
        );
    }

    #[test]
    fn unknown_suite_rejected_at_parse() {
        let key = [9u8; 32];
        let mut pad = pack_pad(&sample_payload(), &sample_fields(), &key).unwrap();
        // crypto_suite at offset 4+2+16+16 = 38
        pad[38] = 0x44;
        pad[39] = 0x44;
        assert_eq!(
            parse_metadata(&pad).unwrap_err(),
            CodecError::Crypto(CryptoError::UnknownSuite(0x4444))
        );
    }

    #[test]
    fn malformed_uri_rejected() {
        let mut fields = sample_fields();
        fields.key_delegator_uri = "".to_string();
        assert_eq!(
            pack_pad(&sample_payload(), &fields, &[9u8; 32]).unwrap_err(),
            CodecError::MalformedUri
        );
        fields.key_delegator_uri = "no-port".to_string();
        assert_eq!(
            pack_pad(&sample_payload(), &fields, &[9u8; 32]).unwrap_err(),
            CodecError::MalformedUri
        );
    }

    #[test]
    fn canonical_encode_is_idempotent() {
        let payload = sample_payload();
        let enc = payload.encode().unwrap();
        let decoded = PlaintextPayload::decode(&enc).unwrap();
        assert_eq!(decoded.encode().unwrap(), enc);
    }
}
