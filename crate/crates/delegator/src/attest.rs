//! Mock remote attestation.
//!
//! A quote binds a code measurement, a role, and the holder's ephemeral
//! Diffie-Hellman public key under a signature from an attestation root.
//! The mock root is an ed25519 key standing in for a hardware vendor; the
//! verifier side is a trait so a real quote format can be substituted
//! without touching the handshake.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use thiserror::Error;

/// Encoded quote size: measurement (32) + role (1) + dh_public (32) +
/// signature (64).
pub const QUOTE_LEN: usize = 129;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Delegator = 0,
    ConsumerMiddleware = 1,
    Producer = 2,
}

impl Role {
    pub fn from_byte(b: u8) -> Option<Role> {
        match b {
            0 => Some(Role::Delegator),
            1 => Some(Role::ConsumerMiddleware),
            2 => Some(Role::Producer),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttestError {
    #[error("malformed quote")]
    Malformed,
    #[error("quote signature does not verify against the attestation root")]
    BadSignature,
}

/// Signed evidence that a party with `measurement` running as `role`
/// controls the secret half of `dh_public`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestationQuote {
    pub measurement: [u8; 32],
    pub role: Role,
    pub dh_public: [u8; 32],
    pub signature: Signature,
}

fn quote_message(measurement: &[u8; 32], role: Role, dh_public: &[u8; 32]) -> [u8; 65] {
    let mut msg = [0u8; 65];
    msg[..32].copy_from_slice(measurement);
    msg[32] = role as u8;
    msg[33..].copy_from_slice(dh_public);
    msg
}

impl AttestationQuote {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(QUOTE_LEN);
        out.extend_from_slice(&self.measurement);
        out.push(self.role as u8);
        out.extend_from_slice(&self.dh_public);
        out.extend_from_slice(&self.signature.to_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<AttestationQuote, AttestError> {
        if bytes.len() != QUOTE_LEN {
            return Err(AttestError::Malformed);
        }
        let mut measurement = [0u8; 32];
        measurement.copy_from_slice(&bytes[..32]);
        let role = Role::from_byte(bytes[32]).ok_or(AttestError::Malformed)?;
        let mut dh_public = [0u8; 32];
        dh_public.copy_from_slice(&bytes[33..65]);
        let mut sig = [0u8; 64];
        sig.copy_from_slice(&bytes[65..]);
        Ok(AttestationQuote {
            measurement,
            role,
            dh_public,
            signature: Signature::from_bytes(&sig),
        })
    }
}

/// Stand-in for a hardware attestation service: signs quotes over
/// whatever measurement the caller claims. Only tests and the mock
/// deployment path hold one of these.
pub struct MockAttestationRoot {
    signing_key: SigningKey,
}

impl MockAttestationRoot {
    pub fn new(signing_key: SigningKey) -> Self {
        MockAttestationRoot { signing_key }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing_key.verifying_key()
    }

    pub fn issue(&self, measurement: [u8; 32], role: Role, dh_public: [u8; 32]) -> AttestationQuote {
        let signature = self
            .signing_key
            .sign(&quote_message(&measurement, role, &dh_public));
        AttestationQuote {
            measurement,
            role,
            dh_public,
            signature,
        }
    }
}

/// What a party attests as: its measurement and role, plus access to the
/// attestation service that signs quotes over fresh key-exchange keys.
#[derive(Clone)]
pub struct LocalIdentity {
    pub measurement: [u8; 32],
    pub role: Role,
    pub attestation_root: std::sync::Arc<MockAttestationRoot>,
}

impl LocalIdentity {
    /// Quote binding this identity to an ephemeral DH public key.
    pub fn quote_for(&self, dh_public: [u8; 32]) -> AttestationQuote {
        self.attestation_root
            .issue(self.measurement, self.role, dh_public)
    }
}

/// Checks that a quote is genuine. Policy questions (is this measurement
/// allowed, is the role expected) are the handshake's job, not the
/// verifier's.
pub trait QuoteVerifier: Send + Sync {
    fn verify(&self, quote: &AttestationQuote) -> Result<(), AttestError>;
}

/// Verifier trusting a single mock root key.
pub struct MockRootVerifier {
    pub root: VerifyingKey,
}

impl QuoteVerifier for MockRootVerifier {
    fn verify(&self, quote: &AttestationQuote) -> Result<(), AttestError> {
        let msg = quote_message(&quote.measurement, quote.role, &quote.dh_public);
        self.root
            .verify(&msg, &quote.signature)
            .map_err(|_| AttestError::BadSignature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root() -> MockAttestationRoot {
        MockAttestationRoot::new(SigningKey::from_bytes(&[9u8; 32]))
    }

    #[test]
    fn quote_encode_decode_round_trip() {
        let q = root().issue([1u8; 32], Role::ConsumerMiddleware, [2u8; 32]);
        let bytes = q.encode();
        assert_eq!(bytes.len(), QUOTE_LEN);
        assert_eq!(AttestationQuote::decode(&bytes).unwrap(), q);
    }

    #[test]
    fn genuine_quote_verifies() {
        let r = root();
        let verifier = MockRootVerifier {
            root: r.verifying_key(),
        };
        let q = r.issue([1u8; 32], Role::Delegator, [2u8; 32]);
        assert!(verifier.verify(&q).is_ok());
    }

    #[test]
    fn wrong_root_rejected() {
        let q = root().issue([1u8; 32], Role::Delegator, [2u8; 32]);
        let other = MockAttestationRoot::new(SigningKey::from_bytes(&[8u8; 32]));
        let verifier = MockRootVerifier {
            root: other.verifying_key(),
        };
        assert_eq!(verifier.verify(&q), Err(AttestError::BadSignature));
    }

    #[test]
    fn tampered_field_breaks_signature() {
        let r = root();
        let verifier = MockRootVerifier {
            root: r.verifying_key(),
        };
        let mut q = r.issue([1u8; 32], Role::Producer, [2u8; 32]);
        q.dh_public[0] ^= 1;
        assert_eq!(verifier.verify(&q), Err(AttestError::BadSignature));
    }

    #[test]
    fn bad_role_byte_is_malformed() {
        let mut bytes = root().issue([1u8; 32], Role::Producer, [2u8; 32]).encode();
        bytes[32] = 7;
        assert_eq!(AttestationQuote::decode(&bytes), Err(AttestError::Malformed));
    }
}
